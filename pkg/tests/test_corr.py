import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from infodemic.corr import ccf, sdc, spearman
from infodemic.timeseries import Series, Variable

finite = st.integers(-1000, 1000).map(float)
pairs = st.integers(30, 80).flatmap(
    lambda n: st.tuples(arrays(float, n, elements=finite), arrays(float, n, elements=finite))
)


def shifted(lag, n=300, seed=0):
    """``a`` trails ``b`` by ``lag`` steps."""
    rng = np.random.default_rng(seed)
    b = rng.normal(size=n + lag)
    a = b[:n] + 0.3 * rng.normal(size=n)
    return a, b[lag:]


def test_ccf_lag_zero_is_pearson():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=100), rng.normal(size=100)
    assert ccf(a, b, 5).at(0) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-12)


def test_ccf_brute_force_lag():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=60), rng.normal(size=60)
    r = ccf(a, b, 4)
    assert r.at(3) == pytest.approx(np.corrcoef(a[3:], b[:-3])[0, 1], abs=1e-12)
    assert r.at(-2) == pytest.approx(np.corrcoef(a[:-2], b[2:])[0, 1], abs=1e-12)


def test_ccf_peak_at_planted_lag():
    for lag in (3, 7):
        a, b = shifted(lag)
        assert ccf(a, b, 25).peak_lag() == lag
        assert ccf(b, a, 25).peak_lag() == -lag


def test_ccf_skips_missing_pairs():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=50), rng.normal(size=50)
    a[10] = np.nan
    keep = ~np.isnan(a)
    assert ccf(a, b, 2).at(0) == pytest.approx(np.corrcoef(a[keep], b[keep])[0, 1])


def test_ccf_series_input_and_frame():
    s = Series("IT", Variable.NEW_CASES, "Daily", dt.date(2021, 1, 1), np.arange(40.0) ** 1.5)
    r = ccf(s, s, 3)
    assert r.country == "IT"
    assert list(r.to_frame().columns) == ["country", "lag", "rho"]


def test_ccf_too_short():
    with pytest.raises(ValueError):
        ccf(np.ones(10), np.ones(10), 25)


@given(pairs)
def test_ccf_bounds_and_symmetry(ab):
    a, b = ab
    h = 10
    fwd, back = ccf(a, b, h), ccf(b, a, h)
    r = fwd.correlations
    assert np.all(np.isnan(r) | (np.abs(r) <= 1))
    np.testing.assert_array_equal(fwd.correlations, back.correlations[::-1])


@given(arrays(float, st.integers(10, 60), elements=finite))
def test_ccf_self_lag_zero(a):
    if np.ptp(a) > 0:
        assert ccf(a, a, 5).at(0) == pytest.approx(1.0, abs=1e-12)


def test_spearman_matches_scipy_with_ties():
    x = np.array([1, 2, 2, 3, 4, 4, 4, 5], float)
    y = np.array([2, 1, 3, 3, 5, 4, 6, 6], float)
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y)[0], abs=1e-12)


@given(pairs)
def test_spearman_monotone_invariance(ab):
    a, b = ab
    base = spearman(a, b)
    moved = spearman(2 * a**3 + 7, b)
    if np.isnan(base):
        assert np.isnan(moved)
    else:
        assert moved == pytest.approx(base, abs=1e-12)


def test_sdc_full_window_equals_spearman():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=70), rng.normal(size=70)
    g = sdc(a, b, s=70, max_lag=0, n_perm=50)
    assert list(g.cells) == [(0, 0)]
    assert g.rho(0, 0) == pytest.approx(stats.spearmanr(a, b)[0], abs=1e-12)


def test_sdc_grid_shape_and_bounds():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=120), rng.normal(size=120)
    g = sdc(a, b, s=30, max_lag=4, n_perm=30)
    assert all(abs(x - y) <= 4 for x, y in g.cells)
    rho = g.to_frame()["rho"]
    assert rho.between(-1, 1).all()
    # every admissible pair of windows is present
    n_win = 120 - 30 + 1
    expect = sum(min(n_win, x + 5) - max(0, x - 4) for x in range(n_win))
    assert len(g.cells) == expect


def test_sdc_window_brute_force():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=60), rng.normal(size=60)
    g = sdc(a, b, s=25, max_lag=3, n_perm=20)
    assert g.rho(10, 12) == pytest.approx(stats.spearmanr(a[10:35], b[12:37])[0], abs=1e-12)


def test_sdc_detects_strong_coupling():
    a, b = shifted(0, n=140, seed=7)
    g = sdc(a, b, s=40, max_lag=0, n_perm=200, alpha=0.01)
    assert g.significance_rate() == 1.0


def test_sdc_reproducible_and_parallel_identical():
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=100), rng.normal(size=100)
    one = sdc(a, b, s=30, max_lag=5, n_perm=100, seed=11)
    two = sdc(a, b, s=30, max_lag=5, n_perm=100, seed=11, n_jobs=4)
    assert one.cells == two.cells
    other = sdc(a, b, s=30, max_lag=5, n_perm=100, seed=12)
    assert [r for r, _ in one.cells.values()] == [r for r, _ in other.cells.values()]


def test_sdc_missing_window_not_significant():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=60), rng.normal(size=60)
    a[5] = np.nan
    g = sdc(a, b, s=20, max_lag=0, n_perm=20)
    assert np.isnan(g.rho(0, 0)) and not g.significant(0, 0)
    assert not np.isnan(g.rho(6, 6))


def test_sdc_too_short():
    with pytest.raises(ValueError):
        sdc(np.ones(50), np.ones(50), s=70)
