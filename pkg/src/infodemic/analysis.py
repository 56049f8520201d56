"""Named experiments: model fits, rolling elasticities and per-country taxonomy."""

from __future__ import annotations

import enum
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from . import specs
from .ingest import PanelDataset, Sources, build_panel
from .regress import (
    DesignMatrix,
    FitResult,
    SingularDesignError,
    active_dummies,
    fixed_effects_fit,
    format_table,
    ols,
    panel_design,
    vif,
)
from .specs import MODELS, ModelId, ModelSpec, get_model
from .timeseries import DateRange

logger = logging.getLogger(__name__)

__all__ = [
    "MODELS",
    "ModelId",
    "ModelSpec",
    "get_model",
    "run_model",
    "elasticity_interpretation",
    "rolling_elasticity",
    "per_country_fit",
    "taxonomy",
]

OUTLIER_IQR_FACTOR = 5.0

# phrases for the elasticity sentence
PHRASES = {
    specs.DOCUMENTS: "document production",
    specs.TRENDS: "information demand",
    specs.CASES: "new cases",
    specs.CASES_NB: "new cases in neighbouring countries",
    specs.DEATHS: "new deaths",
    specs.DEATHS_NB: "new deaths in neighbouring countries",
    specs.VACCINATION: "the vaccinated population share change",
    specs.STRINGENCY: "the Stringency Index",
}


def run_model(
    spec: ModelSpec | str,
    sources: Sources,
    cov_type: str = "hc1",
    date_range: DateRange | None = None,
    countries: Sequence[str] | None = None,
) -> FitResult:
    """Build the panel for ``spec`` and fit it with country fixed effects.

    VIFs of the non-dummy regressors are attached to the result.
    """
    if not isinstance(spec, ModelSpec):
        spec = get_model(spec)
    panel = build_panel(spec, sources, countries=countries, date_range=date_range)
    fit = fixed_effects_fit(panel, spec, cov_type)
    fit.vif = vif(panel_design(panel, spec), columns=list(spec.regressors))
    return fit


def regression_table(fits: dict[str, FitResult]) -> str:
    return format_table(fits)


def elasticity_interpretation(
    fit: FitResult, regressor: str, decimals: int = 2, dependent: str | None = None
) -> str:
    """Log-log reading of one coefficient as a percentage response."""
    if regressor not in fit.coefficients:
        raise KeyError(f"{regressor!r} not in fit; have {list(fit.coefficients)}")
    beta = fit.coefficients[regressor]
    x = PHRASES.get(regressor, regressor)
    y = PHRASES.get(dependent or fit.dependent or "", dependent or fit.dependent or "the outcome")
    size = round(abs(beta), decimals)
    if size == 0:
        return f"a 1% increase in {x} yields no change in {y}"
    direction = "increase" if beta > 0 else "decrease"
    return f"a 1% increase in {x} yields a {size:.{decimals}f}% {direction} in {y}"


_DURATION = re.compile(r"^\s*(\d+)\s*([dwm]?)\s*$", re.IGNORECASE)


def parse_duration(value) -> pd.DateOffset:
    """``"6m"`` -> 6 calendar months, ``"7d"``/``7`` -> days, ``"26w"`` -> weeks."""
    if isinstance(value, pd.DateOffset):
        return value
    if isinstance(value, (int, np.integer)):
        return pd.DateOffset(days=int(value))
    m = _DURATION.match(str(value))
    if not m:
        raise ValueError(f"cannot parse duration {value!r}")
    n, unit = int(m.group(1)), (m.group(2) or "d").lower()
    if n <= 0:
        raise ValueError("duration must be positive")
    return {"d": pd.DateOffset(days=n), "w": pd.DateOffset(weeks=n), "m": pd.DateOffset(months=n)}[unit]


@dataclass(frozen=True)
class TrajectoryPoint:
    window_start: pd.Timestamp
    window_end: pd.Timestamp
    beta: float
    robust_se: float
    n_obs: int


@dataclass(frozen=True)
class ElasticityTrajectory:
    regressor: str
    window_length: str
    step: str
    points: tuple[TrajectoryPoint, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "window_end": [p.window_end.strftime("%Y-%m-%d") for p in self.points],
                "beta": [p.beta for p in self.points],
                "se": [p.robust_se for p in self.points],
                "n_obs": [p.n_obs for p in self.points],
            }
        )


def _windows(dates: pd.DatetimeIndex, window: pd.DateOffset, step: pd.DateOffset):
    first, last = dates[0], dates[-1]
    if first + window - pd.Timedelta(days=1) > last:
        raise ValueError(f"window {window} longer than the panel ({first.date()}..{last.date()})")
    out = []
    k = 0
    while True:
        ws = first + step * k if k else first
        we = ws + window - pd.Timedelta(days=1)
        if we > last:
            break
        out.append((ws, we))
        k += 1
    return out


def rolling_elasticity(
    panel: PanelDataset,
    spec: ModelSpec | str = ModelId.M1B,
    window="6m",
    step="7d",
    regressor: str | None = None,
    cov_type: str = "hc1",
    n_jobs: int = 1,
) -> ElasticityTrajectory:
    """Refit the fixed-effects model on each window and track one coefficient.

    Windows start at the first panel date and advance by ``step``; only windows
    that fit entirely inside the panel are used. Points are labelled by the
    last panel date inside the window.
    """
    if not isinstance(spec, ModelSpec):
        spec = get_model(spec)
    regressor = regressor or spec.regressors[0]
    win, stp = parse_duration(window), parse_duration(step)
    bounds = _windows(panel.dates, win, stp)

    def fit_one(b):
        ws, we = b
        sub = panel.restrict(ws, we)
        fit = fixed_effects_fit(sub, spec, cov_type)
        return TrajectoryPoint(
            ws, sub.dates[-1], fit.coefficients[regressor], fit.robust_se[regressor], fit.n_obs
        )

    if n_jobs == 1:
        points = [fit_one(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            points = list(pool.map(fit_one, bounds))
    points.sort(key=lambda p: p.window_start)
    return ElasticityTrajectory(regressor, str(window), str(step), tuple(points))


class Quadrant(str, enum.Enum):
    HIGH_HIGH = "HighInt-HighExt"
    HIGH_LOW = "HighInt-LowExt"
    LOW_HIGH = "LowInt-HighExt"
    LOW_LOW = "LowInt-LowExt"

    @classmethod
    def of(cls, internal: float, external: float, mean_int: float, mean_ext: float) -> "Quadrant":
        hi_int = internal >= mean_int
        hi_ext = external >= mean_ext
        if hi_int:
            return cls.HIGH_HIGH if hi_ext else cls.HIGH_LOW
        return cls.LOW_HIGH if hi_ext else cls.LOW_LOW


@dataclass(frozen=True)
class CountryElasticity:
    country: str
    beta_internal: float
    beta_external: float
    se_internal: float
    se_external: float
    quadrant: Quadrant | None = None
    outlier: bool = False
    error: str | None = None
    n_obs: int = 0

    @property
    def difference(self) -> float:
        return self.beta_internal - self.beta_external

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class QuadrantReport:
    mean_internal: float
    mean_external: float
    members: dict[Quadrant, list[str]]
    ranking: list[tuple[str, float]]
    outliers: list[str]
    countries: tuple[CountryElasticity, ...] = field(repr=False, default=())

    def counts(self) -> dict[Quadrant, int]:
        return {q: len(v) for q, v in self.members.items()}


def per_country_fit(
    panel: PanelDataset,
    spec: ModelSpec | str = ModelId.M1B,
    cov_type: str = "hc1",
    n_jobs: int = 1,
) -> list[CountryElasticity]:
    """Separate OLS per country: intercept, the panel's dummies and the model's regressors.

    The first two regressors are the internal and external elasticity.
    Countries with a singular design are returned with ``error`` set; the
    rest get quadrants relative to the cross-country means (see :func:`taxonomy`).
    """
    if not isinstance(spec, ModelSpec):
        spec = get_model(spec)
    if len(spec.regressors) < 2:
        raise ValueError("per-country fits need an internal and an external regressor")
    internal, external = spec.regressors[:2]
    names = list(spec.regressors) + active_dummies(panel)

    def fit_one(i):
        code = panel.codes[i]
        cols = {n: panel.columns[n][i] for n in names}
        try:
            X = DesignMatrix.from_columns(cols, intercept=True)
            fit = ols(X, panel.columns[spec.dependent][i], cov_type="hc1")
        except (SingularDesignError, ValueError) as exc:
            logger.warning("country %s not fitted: %s", code, exc)
            return CountryElasticity(code, np.nan, np.nan, np.nan, np.nan, error=str(exc))
        return CountryElasticity(
            code,
            fit.coefficients[internal],
            fit.coefficients[external],
            fit.robust_se[internal],
            fit.robust_se[external],
            n_obs=fit.n_obs,
        )

    if cov_type != "hc1":
        logger.info("single-country fits always use HC1 covariance")
    idx = range(panel.n_countries)
    if n_jobs == 1:
        results = [fit_one(i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(fit_one, idx))
    results.sort(key=lambda r: r.country)
    fitted = [r for r in results if r.ok]
    if len(fitted) < 2:
        return results
    report = taxonomy(fitted)
    by_code = {r.country: r for r in report.countries}
    return [by_code.get(r.country, r) for r in results]


def _outliers(values: np.ndarray, factor: float = OUTLIER_IQR_FACTOR) -> np.ndarray:
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return np.abs(values - med) > factor * (q3 - q1)


def taxonomy(results: Sequence[CountryElasticity], iqr_factor: float = OUTLIER_IQR_FACTOR) -> QuadrantReport:
    """Split countries into quadrants around the mean internal and external elasticity.

    Countries whose internal or external elasticity lies more than
    ``iqr_factor`` interquartile ranges from the median are kept but left out
    of the means. Ties go to "High".
    """
    fitted = [r for r in results if r.ok]
    if not fitted:
        raise ValueError("taxonomy needs at least one fitted country")
    if len(fitted) < 2:
        raise ValueError("taxonomy needs at least two countries")
    b_int = np.array([r.beta_internal for r in fitted])
    b_ext = np.array([r.beta_external for r in fitted])
    out_mask = _outliers(b_int, iqr_factor) | _outliers(b_ext, iqr_factor)
    keep = ~out_mask if (~out_mask).any() else np.ones(len(fitted), bool)
    mean_int = float(b_int[keep].mean())
    mean_ext = float(b_ext[keep].mean())

    members = {q: [] for q in Quadrant}
    assigned = []
    for r, is_out in zip(fitted, out_mask):
        q = Quadrant.of(r.beta_internal, r.beta_external, mean_int, mean_ext)
        members[q].append(r.country)
        assigned.append(replace(r, quadrant=q, outlier=bool(is_out)))
    ranking = sorted(((r.country, r.difference) for r in fitted), key=lambda t: (-t[1], t[0]))
    return QuadrantReport(
        mean_int,
        mean_ext,
        members,
        ranking,
        sorted(r.country for r, o in zip(fitted, out_mask) if o),
        tuple(assigned),
    )


def scatter_frame(results: Sequence[CountryElasticity]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "country": [r.country for r in results],
            "beta_internal": [r.beta_internal for r in results],
            "beta_external": [r.beta_external for r in results],
            "quadrant": [r.quadrant.value if r.quadrant else "" for r in results],
            "outlier": [int(r.outlier) for r in results],
        }
    )


def difference_frame(report: QuadrantReport) -> pd.DataFrame:
    outl = set(report.outliers)
    return pd.DataFrame(
        {
            "country": [c for c, _ in report.ranking],
            "difference": [d for _, d in report.ranking],
            "outlier": [int(c in outl) for c, _ in report.ranking],
        }
    )


def lollipop_frame(results: Sequence[CountryElasticity], panel_fit: FitResult | None = None) -> pd.DataFrame:
    rows = [
        (r.country, r.beta_internal, r.se_internal, r.beta_external, r.se_external, int(r.outlier))
        for r in results
    ]
    if panel_fit is not None:
        internal, external = list(panel_fit.coefficients)[:2]
        rows.append(
            (
                "PANEL",
                panel_fit.coefficients[internal],
                panel_fit.robust_se[internal],
                panel_fit.coefficients[external],
                panel_fit.robust_se[external],
                0,
            )
        )
    return pd.DataFrame(
        rows, columns=["country", "beta_internal", "se_internal", "beta_external", "se_external", "outlier"]
    )
