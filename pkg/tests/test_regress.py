import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infodemic.regress import (
    DesignMatrix,
    SingularDesignError,
    demean,
    fixed_effects_fit,
    format_table,
    lsdv_fit,
    ols,
    robust_covariance,
    stars,
    vif,
    within_fit,
)
from infodemic.specs import get_model
from infodemic.synthetic import simulate_panel

seeds = st.integers(0, 2**31 - 1)


def random_system(rng, n=None, k=None):
    n = n or int(rng.integers(10, 60))
    k = k or int(rng.integers(1, 6))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))]) if k > 1 else rng.normal(size=(n, 1))
    y = X @ rng.normal(size=k) + rng.normal(size=n) * (1 + np.abs(X[:, -1]))
    return DesignMatrix(tuple(f"x{i}" for i in range(k)), X), y


def hc1_oracle(X, e, dof):
    n = len(e)
    bread = np.linalg.inv(X.T @ X)
    return bread @ (X.T @ np.diag(e**2) @ X) @ bread * n / dof


@given(seeds)
def test_ols_matches_normal_equations(seed):
    X, y = random_system(np.random.default_rng(seed))
    fit = ols(X, y)
    beta = np.linalg.solve(X.values.T @ X.values, X.values.T @ y)
    np.testing.assert_allclose(fit.params(), beta, rtol=1e-8, atol=1e-10)


def test_hc1_fixed_small_system():
    X = np.array([[1, 0.5], [1, -1.2], [1, 2.0], [1, 0.3], [1, -0.7], [1, 1.1]])
    y = np.array([1.0, -0.5, 3.2, 0.4, -1.0, 2.5])
    fit = ols(DesignMatrix(("const", "x"), X), y)
    e = y - X @ np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(fit.covariance, hc1_oracle(X, e, 4), rtol=1e-10)


def test_cluster_covariance_oracle():
    rng = np.random.default_rng(3)
    X, y = random_system(rng, n=40, k=3)
    g = np.repeat(np.arange(8), 5)
    fit = ols(X, y, cov_type="cluster", clusters=g)
    Xv, e = X.values, fit.residuals
    bread = np.linalg.inv(Xv.T @ Xv)
    meat = sum(np.outer(Xv[g == c].T @ e[g == c], Xv[g == c].T @ e[g == c]) for c in range(8))
    expect = bread @ meat @ bread * (8 / 7) * (39 / 37)
    np.testing.assert_allclose(fit.covariance, expect, rtol=1e-10)


def test_singular_design_names_column():
    rng = np.random.default_rng(0)
    a = rng.normal(size=20)
    X = DesignMatrix(("const", "a", "b"), np.column_stack([np.ones(20), a, 2 * a]))
    with pytest.raises(SingularDesignError) as err:
        ols(X, rng.normal(size=20))
    assert err.value.column in ("a", "b")


def test_design_matrix_validation():
    with pytest.raises(ValueError, match="unique"):
        DesignMatrix(("a", "a"), np.ones((5, 2)))
    with pytest.raises(ValueError, match="missing"):
        DesignMatrix(("a",), np.array([1.0, np.nan, 2.0]))
    with pytest.raises(ValueError, match="more observations"):
        DesignMatrix(("a", "b"), np.ones((2, 2)))


def test_r2_zero_for_constant_y():
    X, _ = random_system(np.random.default_rng(1), n=20, k=2)
    assert ols(X, np.full(20, 3.0)).r2 == 0.0


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_within_equals_lsdv(seed):
    panel, _ = simulate_panel(5, 50, seed=seed)
    spec = get_model("1b")
    fe = fixed_effects_fit(panel, spec)
    dv = lsdv_fit(panel, spec)
    for name, b in fe.coefficients.items():
        assert abs(b - dv.coefficients[name]) < 1e-8
    for code, a in fe.fixed_effects.items():
        assert abs(a - dv.fixed_effects[code]) < 1e-8
    assert fe.r2_overall == pytest.approx(dv.r2, abs=1e-10)
    assert fe.adjusted_r2_overall == pytest.approx(dv.adjusted_r2, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_residuals_sum_to_zero_per_entity(seed):
    panel, _ = simulate_panel(4, 30, seed=seed)
    fit = fixed_effects_fit(panel, get_model("1b"))
    sums = np.bincount(panel.entity(), fit.residuals)
    assert np.abs(sums).max() < 1e-9


@given(seeds)
def test_demeaned_columns_have_zero_entity_means(seed):
    rng = np.random.default_rng(seed)
    ent = rng.integers(0, 6, 80)
    vals = rng.normal(5, 3, (80, 3))
    out = demean(vals, ent)
    for g in np.unique(ent):
        assert np.abs(out[ent == g].mean(axis=0)).max() < 1e-10


@given(seeds)
def test_projection_idempotence(seed):
    X, y = random_system(np.random.default_rng(seed))
    fitted = y - ols(X, y).residuals
    refit = ols(DesignMatrix.from_columns({"fitted": fitted}, intercept=True), fitted)
    assert refit.coefficients["fitted"] == pytest.approx(1.0, rel=1e-9)


@given(seeds, st.floats(0.01, 100))
def test_scale_equivariance(seed, c):
    X, y = random_system(np.random.default_rng(seed), k=3)
    base = ols(X, y)
    vals = X.values.copy()
    vals[:, 2] *= c
    scaled = ols(DesignMatrix(X.names, vals), y)
    assert scaled.coefficients["x2"] == pytest.approx(base.coefficients["x2"] / c, rel=1e-8)
    assert scaled.robust_se["x2"] == pytest.approx(base.robust_se["x2"] / c, rel=1e-8)
    assert scaled.p_values["x2"] == pytest.approx(base.p_values["x2"], rel=1e-6, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(-100, 100), st.integers(0, 3))
def test_within_r2_invariant_to_entity_shift(seed, shift, entity):
    panel, _ = simulate_panel(4, 30, seed=seed)
    X = DesignMatrix.from_columns({k: panel.stacked(k) for k in ("deaths", "deaths_neighbours")})
    y = panel.stacked("documents")
    ent = panel.entity()
    moved = y + shift * (ent == entity)
    assert within_fit(moved, X, ent).r2 == pytest.approx(within_fit(y, X, ent).r2, abs=1e-9)


@given(seeds, st.sampled_from(["hc1", "cluster"]))
def test_sandwich_symmetric_psd(seed, cov_type):
    rng = np.random.default_rng(seed)
    X, y = random_system(rng, n=40, k=4)
    fit = ols(X, y, cov_type=cov_type, clusters=np.repeat(np.arange(8), 5))
    cov = fit.covariance
    np.testing.assert_array_equal(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > -1e-12 * np.abs(cov).max()


def test_robust_covariance_rejects_unknown():
    X, y = random_system(np.random.default_rng(0), n=20, k=2)
    with pytest.raises(ValueError, match="unknown"):
        robust_covariance(X, y, cov_type="hc3")


def test_vif_oracle():
    rng = np.random.default_rng(5)
    a = rng.normal(size=200)
    b = 0.8 * a + 0.6 * rng.normal(size=200)
    c = rng.normal(size=200)
    X = DesignMatrix.from_columns({"a": a, "b": b, "c": c}, intercept=True)
    out = vif(X)
    Z = np.column_stack([np.ones(200), b, c])
    resid = a - Z @ np.linalg.lstsq(Z, a, rcond=None)[0]
    r2 = 1 - resid @ resid / np.sum((a - a.mean()) ** 2)
    assert out["a"] == pytest.approx(1 / (1 - r2), rel=1e-10)
    assert set(out) == {"a", "b", "c"}
    assert out["c"] < 1.1


def test_stars_thresholds():
    assert [stars(p) for p in (0.005, 0.03, 0.07, 0.2)] == ["***", "**", "*", ""]


def test_format_table_and_json():
    panel, _ = simulate_panel(5, 60, seed=2)
    fits = {m: fixed_effects_fit(panel, get_model(m)) for m in ("1b",)}
    text = format_table(fits)
    assert "(1b)" in text and "New deaths (neighbours)" in text
    assert "Observations" in text and "300" in text
    assert text.rstrip().endswith("*p<0.1; **p<0.05; ***p<0.01")
    assert "dow_" not in text
    d = json.loads(fits["1b"].to_json())
    assert "r2_within" in d and "r2_overall" in d
