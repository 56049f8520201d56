"""Lagged cross-correlation and scale-dependent correlation (SDC) grids.

Lag convention: ``ccf(a, b)`` at lag ``h`` pairs ``a[t]`` with ``b[t - h]``.
With ``a`` = documents and ``b`` = cases, a peak at negative ``h`` means the
document series leads the case series.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .timeseries import Series

CCF_MAX_LAG = 25
SDC_WINDOW = 70
SDC_MAX_LAG = 21
SDC_ALPHA = 0.01
SDC_N_PERM = 1000


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Series) else np.asarray(x, dtype=float)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0:
        return np.nan
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class CcfResult:
    country: str
    lags: np.ndarray
    correlations: np.ndarray

    def at(self, lag: int) -> float:
        return float(self.correlations[int(np.flatnonzero(self.lags == lag)[0])])

    def peak_lag(self) -> int:
        return int(self.lags[np.nanargmax(self.correlations)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"country": self.country, "lag": self.lags, "rho": self.correlations})


def ccf(a, b, max_lag: int = CCF_MAX_LAG, country: str | None = None) -> CcfResult:
    """Pearson correlation of ``a[t]`` and ``b[t - h]`` for ``h`` in ``-max_lag..max_lag``.

    Means and variances are taken over the overlapping pairs only, and pairs
    with a missing value on either side are dropped. Lags with fewer than
    three pairs are NaN.
    """
    x, y = _values(a), _values(b)
    if len(x) != len(y):
        raise ValueError("series must be aligned to the same length")
    if len(x) <= max_lag + 2:
        raise ValueError(f"series of length {len(x)} too short for max_lag {max_lag}")
    if country is None:
        country = a.country_code if isinstance(a, Series) else ""
    n = len(x)
    lags = np.arange(-max_lag, max_lag + 1)
    rho = np.full(len(lags), np.nan)
    for i, h in enumerate(lags):
        if h >= 0:
            xs, ys = x[h:], y[: n - h]
        else:
            xs, ys = x[: n + h], y[-h:]
        ok = ~(np.isnan(xs) | np.isnan(ys))
        if ok.sum() >= 3:
            rho[i] = _pearson(xs[ok], ys[ok])
    return CcfResult(country, lags, rho)


def spearman(x, y) -> float:
    """Spearman correlation with mid-ranks for ties; NaN if either side has no rank variance."""
    x, y = _values(x), _values(y)
    if len(x) != len(y):
        raise ValueError("vectors must have equal length")
    if len(x) < 3:
        raise ValueError("need at least 3 observations")
    if np.isnan(x).any() or np.isnan(y).any():
        return np.nan
    return _pearson(rankdata(x), rankdata(y))


@dataclass(frozen=True, eq=False)
class SdcGrid:
    """Windowed Spearman correlations for window starts ``(x, y)`` with ``|x - y| <= max_lag``."""

    country: str
    window_size: int
    max_lag: int
    alpha: float
    n_perm: int
    seed: int
    start_date: object = None
    cells: dict = field(default_factory=dict, repr=False)

    def rho(self, x: int, y: int) -> float:
        return self.cells[(x, y)][0]

    def significant(self, x: int, y: int) -> bool:
        return self.cells[(x, y)][1]

    def significance_rate(self) -> float:
        flags = [sig for _, sig in self.cells.values()]
        return float(np.mean(flags)) if flags else np.nan

    def to_frame(self) -> pd.DataFrame:
        keys = sorted(self.cells)
        return pd.DataFrame(
            {
                "country": self.country,
                "x_start": [k[0] for k in keys],
                "y_start": [k[1] for k in keys],
                "rho": [self.cells[k][0] for k in keys],
                "significant": [int(self.cells[k][1]) for k in keys],
            }
        )


def _window_ranks(v: np.ndarray, s: int):
    """Centred, unit-norm ranks for every length-``s`` window; NaN rows where undefined."""
    win = np.lib.stride_tricks.sliding_window_view(v, s)
    out = np.full(win.shape, np.nan)
    for i, w in enumerate(win):
        if np.isnan(w).any():
            continue
        r = rankdata(w)
        r -= r.mean()
        norm = np.sqrt(r @ r)
        if norm > 0:
            out[i] = r / norm
    return out


def _cell_rng(seed: int, x: int, y: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(x, y)))


def _sdc_row(x, ra, rb, max_lag, alpha, n_perm, seed):
    s = ra.shape[1]
    out = {}
    base = np.tile(np.arange(s), (n_perm, 1))
    for y in range(max(0, x - max_lag), min(len(rb), x + max_lag + 1)):
        a, b = ra[x], rb[y]
        if np.isnan(a[0]) or np.isnan(b[0]):
            out[(x, y)] = (np.nan, False)
            continue
        rho = float(np.clip(a @ b, -1.0, 1.0))
        perms = _cell_rng(seed, x, y).permuted(base, axis=1)
        null = np.abs(b[perms] @ a)
        threshold = np.quantile(null, 1.0 - alpha)
        out[(x, y)] = (rho, bool(abs(rho) > threshold))
    return out


def sdc(
    a,
    b,
    s: int = SDC_WINDOW,
    max_lag: int = SDC_MAX_LAG,
    alpha: float = SDC_ALPHA,
    n_perm: int = SDC_N_PERM,
    seed: int = 0,
    country: str | None = None,
    n_jobs: int = 1,
) -> SdcGrid:
    """Scale-dependent correlation grid between ``a`` and ``b``.

    For every pair of window starts ``x`` (in ``a``) and ``y`` (in ``b``) with
    ``|x - y| <= max_lag``, the Spearman correlation of ``a[x:x+s]`` and
    ``b[y:y+s]`` is computed. A cell is significant when ``|rho|`` exceeds the
    ``1 - alpha`` quantile of ``|rho|`` over ``n_perm`` shuffles of the ``b``
    window. Each cell draws from its own stream keyed by ``(seed, x, y)``, so
    the grid does not depend on ``n_jobs``.
    """
    va, vb = _values(a), _values(b)
    if min(len(va), len(vb)) < s + max_lag:
        raise ValueError(
            f"series of lengths {len(va)}, {len(vb)} shorter than window + max_lag = {s + max_lag}"
        )
    if s < 3:
        raise ValueError("window must hold at least 3 points")
    if country is None:
        country = a.country_code if isinstance(a, Series) else ""
    ra, rb = _window_ranks(va, s), _window_ranks(vb, s)
    rows = range(len(ra))
    args = (max_lag, alpha, n_perm, seed)
    cells: dict = {}
    if n_jobs == 1:
        for x in rows:
            cells.update(_sdc_row(x, ra, rb, *args))
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            for part in pool.map(lambda x: _sdc_row(x, ra, rb, *args), rows):
                cells.update(part)
    start = a.start_date if isinstance(a, Series) else None
    return SdcGrid(country, s, max_lag, alpha, n_perm, seed, start, dict(sorted(cells.items())))
