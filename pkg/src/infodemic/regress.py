"""Least squares with heteroskedasticity-robust inference and fixed effects.

OLS is solved through a column-pivoted QR decomposition. The fixed-effects
estimator demeans every variable within country and fits OLS on the result;
country intercepts are recovered from the entity means afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .specs import COLUMN_LABELS, ModelSpec

# relative pivot magnitude below which a column counts as linearly dependent
RANK_TOL = 1e-10

COV_TYPES = ("hc1", "cluster")


class SingularDesignError(np.linalg.LinAlgError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design matrix is rank deficient; column {column!r} is linearly dependent")


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    names: tuple[str, ...]
    values: np.ndarray
    entity: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))
        n, k = vals.shape
        if len(self.names) != k:
            raise ValueError(f"{len(self.names)} names for {k} columns")
        if len(set(self.names)) != k:
            raise ValueError("column names must be unique")
        if np.isnan(vals).any():
            raise ValueError("design matrix has missing cells")
        if n <= k:
            raise ValueError(f"need more observations than columns (n={n}, k={k})")
        if self.entity is not None and len(self.entity) != n:
            raise ValueError("entity index length does not match rows")

    @classmethod
    def from_columns(cls, columns: Mapping[str, np.ndarray], intercept: bool = False, entity=None):
        names = list(columns)
        cols = [np.asarray(columns[c], dtype=float) for c in names]
        if intercept:
            names.insert(0, "const")
            cols.insert(0, np.ones(len(cols[0]) if cols else 0))
        return cls(tuple(names), np.column_stack(cols), entity)

    @property
    def shape(self):
        return self.values.shape


@dataclass(eq=False)
class FitResult:
    """Coefficients, robust standard errors and fit statistics of one regression."""

    coefficients: dict[str, float]
    robust_se: dict[str, float]
    p_values: dict[str, float]
    r2: float
    adjusted_r2: float
    residuals: np.ndarray = field(repr=False)
    n_obs: int
    covariance: np.ndarray = field(repr=False)
    cov_type: str = "hc1"
    fixed_effects: dict[str, float] = field(default_factory=dict)
    r2_overall: float | None = None
    adjusted_r2_overall: float | None = None
    df_resid: int | None = None
    dependent: str | None = None
    model_id: str | None = None
    vif: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return list(self.coefficients)

    def params(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()))

    def to_dict(self, include_residuals: bool = False) -> dict:
        out = {
            "model": self.model_id,
            "dependent": self.dependent,
            "n_obs": self.n_obs,
            "cov_type": self.cov_type,
            "coefficients": self.coefficients,
            "robust_se": self.robust_se,
            "p_values": self.p_values,
            "r2_within" if self.fixed_effects else "r2": self.r2,
            "adjusted_r2_within" if self.fixed_effects else "adjusted_r2": self.adjusted_r2,
        }
        if self.r2_overall is not None:
            out["r2_overall"] = self.r2_overall
            out["adjusted_r2_overall"] = self.adjusted_r2_overall
        if self.fixed_effects:
            out["fixed_effects"] = self.fixed_effects
        if self.vif:
            out["vif"] = self.vif
        if self.metadata:
            out["metadata"] = self.metadata
        if include_residuals:
            out["residuals"] = self.residuals.tolist()
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(**kwargs), indent=2, sort_keys=False)


def _qr_solve(X: np.ndarray, y: np.ndarray, names: Sequence[str]):
    """Return (beta, (X'X)^-1) via pivoted QR; raise on rank deficiency."""
    Q, R, piv = sla.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size and (d[0] == 0 or np.any(d < RANK_TOL * d[0])):
        r = int(np.flatnonzero(d < RANK_TOL * d[0])[0]) if d[0] else 0
        raise SingularDesignError(names[piv[r]])
    beta_p = sla.solve_triangular(R, Q.T @ y)
    r_inv = sla.solve_triangular(R, np.eye(R.shape[0]))
    bread_p = r_inv @ r_inv.T
    inv = np.argsort(piv)
    beta = beta_p[inv]
    bread = bread_p[np.ix_(inv, inv)]
    return beta, bread


def _bread(X: np.ndarray) -> np.ndarray:
    _, R, piv = sla.qr(X, mode="economic", pivoting=True)
    r_inv = sla.solve_triangular(R, np.eye(R.shape[0]))
    inv = np.argsort(piv)
    return (r_inv @ r_inv.T)[np.ix_(inv, inv)]


def robust_covariance(
    X,
    residuals,
    cov_type: str = "hc1",
    clusters=None,
    absorbed: int = 0,
    bread: np.ndarray | None = None,
) -> np.ndarray:
    """Sandwich covariance ``B M B`` with ``B = (X'X)^-1``.

    ``hc1``: ``M = X' diag(e^2) X`` scaled by ``n / (n - k - absorbed)``, where
    ``absorbed`` counts intercepts swept out before the fit (one per entity).
    ``cluster``: ``M`` sums outer products of per-cluster scores, scaled by
    ``G/(G-1) * (n-1)/(n-k)``.
    """
    Xv = X.values if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
    if Xv.ndim == 1:
        Xv = Xv[:, None]
    e = np.asarray(residuals, dtype=float)
    n, k = Xv.shape
    if e.shape != (n,):
        raise ValueError(f"residuals of shape {e.shape} do not match {n} rows")
    if bread is None:
        bread = _bread(Xv)
    scores = Xv * e[:, None]
    if cov_type == "hc1":
        dof = n - k - absorbed
        if dof <= 0:
            raise ValueError("no residual degrees of freedom")
        meat = scores.T @ scores * (n / dof)
    elif cov_type == "cluster":
        if clusters is None:
            if isinstance(X, DesignMatrix) and X.entity is not None:
                clusters = X.entity
            else:
                raise ValueError("cluster covariance needs cluster labels")
        _, groups = np.unique(np.asarray(clusters), return_inverse=True)
        g = groups.max() + 1
        if g < 2:
            raise ValueError("cluster covariance needs at least two clusters")
        summed = np.zeros((g, k))
        np.add.at(summed, groups, scores)
        meat = summed.T @ summed * (g / (g - 1) * (n - 1) / (n - k))
    else:
        raise ValueError(f"unknown cov_type {cov_type!r}; expected one of {COV_TYPES}")
    cov = bread @ meat @ bread
    return (cov + cov.T) / 2


def normal_p_values(coef: np.ndarray, se: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(coef) / se, np.where(coef == 0, 0.0, np.inf))
    return 2 * stats.norm.sf(z)


def _r2(rss: float, tss: float) -> float:
    return 0.0 if tss <= 0 else 1.0 - rss / tss


def _adjusted(r2: float, n: int, dof: int) -> float:
    return 1.0 - (1.0 - r2) * (n - 1) / dof


def ols(X: DesignMatrix, y, cov_type: str = "hc1", clusters=None) -> FitResult:
    """Least squares of ``y`` on the columns of ``X`` (include ``const`` yourself).

    R² uses the centred total sum of squares; it is 0 when ``y`` is constant.
    """
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    beta, bread = _qr_solve(X.values, y, X.names)
    resid = y - X.values @ beta
    cov = robust_covariance(X, resid, cov_type, clusters=clusters, bread=bread)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    r2 = _r2(resid @ resid, float(np.sum((y - y.mean()) ** 2)))
    return FitResult(
        coefficients=dict(zip(X.names, beta.tolist())),
        robust_se=dict(zip(X.names, se.tolist())),
        p_values=dict(zip(X.names, normal_p_values(beta, se).tolist())),
        r2=r2,
        adjusted_r2=_adjusted(r2, n, n - k),
        residuals=resid,
        n_obs=n,
        covariance=cov,
        cov_type=cov_type,
        df_resid=n - k,
    )


def demean(values: np.ndarray, entity: np.ndarray) -> np.ndarray:
    """Subtract per-entity means from ``values`` (1-D or rows x columns)."""
    values = np.asarray(values, dtype=float)
    _, groups = np.unique(entity, return_inverse=True)
    counts = np.bincount(groups)
    if values.ndim == 1:
        return values - (np.bincount(groups, values) / counts)[groups]
    sums = np.zeros((counts.size, values.shape[1]))
    np.add.at(sums, groups, values)
    return values - (sums / counts[:, None])[groups]


def within_fit(
    y,
    X: DesignMatrix,
    entity,
    cov_type: str = "hc1",
    entity_labels: Sequence[str] | None = None,
) -> FitResult:
    """Fixed-effects regression by the within transformation.

    ``X`` must not contain a constant. ``r2`` is the within R² and
    ``r2_overall`` the R² of the full model including the entity intercepts;
    both adjust for the absorbed intercepts.
    """
    y = np.asarray(y, dtype=float)
    entity = np.asarray(entity)
    n, k = X.shape
    uniq, groups = np.unique(entity, return_inverse=True)
    n_ent = len(uniq)
    y_w = demean(y, groups)
    X_w = demean(X.values, groups)
    beta, bread = _qr_solve(X_w, y_w, X.names)
    resid = y_w - X_w @ beta
    cov = robust_covariance(
        X_w, resid, cov_type, clusters=groups, absorbed=n_ent, bread=bread
    )
    se = np.sqrt(np.clip(np.diag(cov), 0, None))

    counts = np.bincount(groups)
    y_bar = np.bincount(groups, y) / counts
    x_bar = np.zeros((n_ent, k))
    np.add.at(x_bar, groups, X.values)
    x_bar /= counts[:, None]
    alpha = y_bar - x_bar @ beta
    labels = entity_labels if entity_labels is not None else [str(u) for u in uniq]

    rss = float(resid @ resid)
    dof = n - k - n_ent
    r2_w = _r2(rss, float(y_w @ y_w))
    r2_o = _r2(rss, float(np.sum((y - y.mean()) ** 2)))
    return FitResult(
        coefficients=dict(zip(X.names, beta.tolist())),
        robust_se=dict(zip(X.names, se.tolist())),
        p_values=dict(zip(X.names, normal_p_values(beta, se).tolist())),
        r2=r2_w,
        adjusted_r2=_adjusted(r2_w, n, dof),
        residuals=resid,
        n_obs=n,
        covariance=cov,
        cov_type=cov_type,
        fixed_effects=dict(zip(labels, alpha.tolist())),
        r2_overall=r2_o,
        adjusted_r2_overall=_adjusted(r2_o, n, dof),
        df_resid=dof,
    )


def active_dummies(panel) -> list[str]:
    """Dummy columns identifiable alongside the country intercepts.

    Constant dummies are dropped. When a family's reference category never
    occurs (e.g. a window without winter weeks), its remaining dummies sum to
    one, so the first present category becomes the reference instead.
    """
    keep = []
    for prefix in ("dow_", "season_"):
        family = [d for d in panel.dummies if d.startswith(prefix)]
        if not family:
            continue
        block = np.array([panel.columns[d][0] for d in family])
        present = [d for d, row in zip(family, block) if row.any()]
        if block.sum(axis=0).min() > 0 and present:
            present = present[1:]
        keep += [d for d in present if np.ptp(panel.columns[d][0]) > 0]
    return keep + [d for d in panel.dummies if not d.startswith(("dow_", "season_"))]


def panel_design(panel, spec: ModelSpec, intercept: bool = False) -> DesignMatrix:
    """Regressors of ``spec`` followed by the panel's dummies, stacked country-major."""
    missing = [c for c in spec.columns if c not in panel.columns]
    if missing:
        raise KeyError(f"panel lacks columns {missing} required by model {spec.id.value}")
    names = list(spec.regressors) + active_dummies(panel)
    cols = {name: panel.stacked(name) for name in names}
    return DesignMatrix.from_columns(cols, intercept=intercept, entity=panel.entity())


def fixed_effects_fit(panel, spec: ModelSpec, cov_type: str = "hc1") -> FitResult:
    """Country fixed-effects fit of ``spec`` on a balanced panel."""
    X = panel_design(panel, spec)
    fit = within_fit(
        panel.stacked(spec.dependent), X, panel.entity(), cov_type, entity_labels=panel.codes
    )
    fit.dependent = spec.dependent
    fit.model_id = spec.id.value
    fit.metadata = dict(panel.metadata)
    return fit


def lsdv_fit(panel, spec: ModelSpec, cov_type: str = "hc1") -> FitResult:
    """Same model with explicit country dummy columns instead of demeaning."""
    X = panel_design(panel, spec)
    ent = panel.entity()
    dummies = {f"fe_{c}": (ent == i).astype(float) for i, c in enumerate(panel.codes)}
    full = DesignMatrix(
        X.names + tuple(dummies),
        np.column_stack([X.values, *dummies.values()]),
        ent,
    )
    fit = ols(full, panel.stacked(spec.dependent), cov_type, clusters=ent)
    fit.fixed_effects = {c: fit.coefficients.pop(f"fe_{c}") for c in panel.codes}
    for name in dummies:
        fit.robust_se.pop(name)
        fit.p_values.pop(name)
    fit.dependent = spec.dependent
    fit.model_id = spec.id.value
    return fit


def vif(X: DesignMatrix, columns: Sequence[str] | None = None, exclude_prefixes=("dow_", "season_", "const")):
    """Variance inflation factors ``1 / (1 - R²_j)``.

    Each column is regressed on all other columns plus an intercept. Dummy
    columns take part as regressors but are left out of the report unless
    named in ``columns``.
    """
    names = [n for n in X.names if n != "const"]
    Xv = np.column_stack([X.values[:, X.names.index(n)] for n in names])
    full = np.column_stack([np.ones(len(Xv)), Xv])
    _qr_solve(full, np.zeros(len(Xv)), ["const", *names])
    if columns is None:
        columns = [n for n in names if not n.startswith(tuple(exclude_prefixes))]
    out = {}
    for name in columns:
        j = names.index(name)
        target = Xv[:, j]
        others = np.column_stack([np.ones(len(Xv)), np.delete(Xv, j, axis=1)])
        beta, _ = _qr_solve(others, target, ["const", *np.delete(names, j)])
        resid = target - others @ beta
        r2 = _r2(float(resid @ resid), float(np.sum((target - target.mean()) ** 2)))
        out[name] = np.inf if r2 >= 1 else 1.0 / (1.0 - r2)
    return out


def stars(p: float) -> str:
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""


def format_table(
    fits: Mapping[str, FitResult],
    dependent_label: str | None = None,
    title: str = "Fixed-effect panel regression with robust standard errors",
    labels: Mapping[str, str] = COLUMN_LABELS,
    decimals: int = 3,
) -> str:
    """Starred text table, one column per fit, dummies and intercepts omitted."""
    heads = [f"({k})" for k in fits]
    rows: list[str] = []
    for fit in fits.values():
        for name in fit.coefficients:
            if name not in rows and not name.startswith(("dow_", "season_", "const")):
                rows.append(name)
    if dependent_label is None:
        deps = {f.dependent for f in fits.values()}
        dependent_label = labels.get(deps.pop(), "") if len(deps) == 1 else ""
    stub = max([len(labels.get(r, r)) + 5 for r in rows] + [len("R2 (incl. FE)") + 2])
    width = max(14, decimals + 9)

    def line(label, cells):
        return label.ljust(stub) + "".join(c.center(width) for c in cells)

    rule = "-" * (stub + width * len(fits))
    out = [title, rule, " " * stub + dependent_label.center(width * len(fits)), line("", heads), rule]
    for name in rows:
        coef, se = [], []
        for fit in fits.values():
            if name in fit.coefficients:
                coef.append(f"{fit.coefficients[name]:.{decimals}f}{stars(fit.p_values[name])}")
                se.append(f"({fit.robust_se[name]:.{decimals}f})")
            else:
                coef.append("")
                se.append("")
        out.append(line(labels.get(name, name), coef))
        out.append(line("", se))
    out.append(rule)
    out.append(line("Observations", [f"{f.n_obs:,}" for f in fits.values()]))
    out.append(line("R2", [f"{f.r2:.{decimals}f}" for f in fits.values()]))
    out.append(line("Adjusted R2", [f"{f.adjusted_r2:.{decimals}f}" for f in fits.values()]))
    if any(f.r2_overall is not None for f in fits.values()):
        out.append(
            line(
                "R2 (incl. FE)",
                [f"{f.r2_overall:.{decimals}f}" if f.r2_overall is not None else "" for f in fits.values()],
            )
        )
    vifs = [f for f in fits.values() if f.vif]
    if vifs:
        out.append(rule)
        for name in rows:
            cells = [f"{f.vif[name]:.2f}" if name in f.vif else "" for f in fits.values()]
            if any(cells):
                out.append(line(f"VIF {labels.get(name, name)}", cells))
    out.append(rule)
    out.append("*p<0.1; **p<0.05; ***p<0.01")
    return "\n".join(out) + "\n"
