"""Synthetic panels with known coefficients and raw-file fixtures in the source layouts."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pycountry

from .ingest import CountryMeta, PanelDataset, WhoRegion, dummy_encoding
from .timeseries import Cadence


def simulate_panel(
    n_countries: int = 5,
    n_periods: int = 50,
    betas: dict[str, float] | None = None,
    seed=None,
    start: str = "2021-01-04",
    weekday: bool = True,
    season: bool = True,
    heteroskedastic: bool = True,
    dependent: str = "documents",
):
    """Balanced daily panel ``y = alpha_i + X beta + dummies + noise``.

    Regressors look like log-transformed smoothed counts and are correlated
    with the country intercepts, so pooled OLS would be biased. Returns
    ``(panel, truth)`` where ``truth`` holds the betas, intercepts and dummy
    effects used.
    """
    rng = np.random.default_rng(seed)
    betas = betas or {"deaths": 0.16, "deaths_neighbours": 0.26}
    codes = [f"C{i:02d}" for i in range(n_countries)]
    dates = pd.date_range(start, periods=n_periods, freq="D")
    alpha = rng.normal(3.0, 1.0, n_countries)
    t = np.arange(n_periods)
    cols = {}
    for j, name in enumerate(betas):
        level = 2.0 + 0.8 * alpha[:, None] + rng.normal(0, 0.5, (n_countries, 1))
        wave = np.sin(2 * np.pi * (t[None, :] / rng.uniform(40, 120) + rng.uniform(0, 1, (n_countries, 1))))
        cols[name] = np.log1p(np.exp(level + wave + rng.normal(0, 0.3, (n_countries, n_periods))))
    dummies = dummy_encoding(dates, weekday=weekday, season=season)
    gamma = {k: rng.normal(0, 0.2) for k in dummies}
    y = alpha[:, None] + sum(b * cols[k] for k, b in betas.items())
    for k, v in dummies.items():
        y = y + gamma[k] * v[None, :]
    scale = 0.3 * (1 + 0.5 * np.abs(cols[next(iter(betas))] - 2.0)) if heteroskedastic else 0.3
    y = y + rng.normal(0, 1, (n_countries, n_periods)) * scale
    cols[dependent] = y
    for k, v in dummies.items():
        cols[k] = np.tile(v, (n_countries, 1))
    metas = tuple(CountryMeta(c, c, WhoRegion.EUR) for c in codes)
    panel = PanelDataset(metas, dates, Cadence.DAILY, cols, dependent, tuple(dummies), {"synthetic": True})
    truth = {"betas": dict(betas), "alpha": dict(zip(codes, alpha.tolist())), "dummies": gamma}
    return panel, truth


# (alpha-2, region, population scale)
FIXTURE_COUNTRIES = [
    ("US", WhoRegion.AMR, 3.0),
    ("CA", WhoRegion.AMR, 1.0),
    ("MX", WhoRegion.AMR, 1.8),
    ("BR", WhoRegion.AMR, 2.5),
    ("IT", WhoRegion.EUR, 1.5),
    ("FR", WhoRegion.EUR, 1.6),
    ("GB", WhoRegion.EUR, 1.6),
    ("ES", WhoRegion.EUR, 1.3),
    ("ZA", WhoRegion.AFR, 1.2),
    ("NG", WhoRegion.AFR, 1.1),
    ("KE", WhoRegion.AFR, 0.8),
    ("NA", WhoRegion.AFR, 0.4),
]
FIXTURE_EARS = ["BR", "CA", "ES", "FR", "GB", "KE", "NA", "ZA"]


def _waves(rng, n, scale):
    t = np.arange(n)
    lam = np.zeros(n)
    for _ in range(4):
        centre = rng.uniform(0, n)
        width = rng.uniform(20, 60)
        lam += rng.uniform(0.3, 1.0) * np.exp(-0.5 * ((t - centre) / width) ** 2)
    return 200 * scale * (lam + 0.05)


def write_fixture(
    directory,
    seed: int = 0,
    start: str = "2020-01-03",
    end: str = "2021-06-30",
    ears_start: str = "2020-06-01",
    oxcgrt_end: str = "2021-04-30",
    beta_internal: float = 0.16,
    beta_external: float = 0.26,
) -> dict:
    """Write WHO, EARS, OxCGRT and Google Trends files with a planted elasticity.

    Returns the ``data_paths`` mapping accepted by :meth:`Sources.load`.
    """
    rng = np.random.default_rng(seed)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    dates = pd.date_range(start, end, freq="D")
    n = len(dates)
    cases, deaths = {}, {}
    for code, region, scale in FIXTURE_COUNTRIES:
        lam = _waves(rng, n, scale)
        cases[code] = rng.poisson(lam).astype(float)
        deaths[code] = rng.poisson(0.02 * np.roll(lam, 10) + 0.1).astype(float)

    who_rows = []
    for code, region, _ in FIXTURE_COUNTRIES:
        name = pycountry.countries.get(alpha_2=code).name
        c = cases[code].copy()
        d = deaths[code].copy()
        for i, day in enumerate(dates):
            cs = "" if (code == "KE" and i == 40) else str(int(c[i]))
            who_rows.append((day.strftime("%Y-%m-%d"), code, name, region.value + "O", cs, int(c[:i + 1].sum()), int(d[i]), int(d[:i + 1].sum())))
    pd.DataFrame(
        who_rows,
        columns=["Date_reported", "Country_code", "Country", "WHO_region", "New_cases", "Cumulative_cases", "New_deaths", "Cumulative_deaths"],
    ).to_csv(out / "WHO-COVID-19-global-data.csv", index=False, lineterminator="\n")

    region_of = {c: r for c, r, _ in FIXTURE_COUNTRIES}

    def smooth_log(x):
        return np.log1p(pd.Series(x).rolling(7, min_periods=1).mean().to_numpy())

    ears_rows = []
    e0 = dates.get_loc(pd.Timestamp(ears_start))
    dow = dates.dayofweek.to_numpy()
    for code in FIXTURE_EARS:
        nb = sum(deaths[c] for c in deaths if c != code and region_of[c] == region_of[code])
        alpha = rng.normal(4.0, 0.5)
        log_docs = (
            alpha
            + beta_internal * smooth_log(deaths[code])
            + beta_external * smooth_log(nb)
            - 0.1 * (dow >= 5)
            + rng.normal(0, 0.15, n)
        )
        docs = rng.poisson(np.expm1(np.clip(log_docs, 0, None)))
        name = pycountry.countries.get(alpha_2=code).name
        for i in range(e0, n):
            ears_rows.append((dates[i].strftime("%Y-%m-%d"), name if code == "CA" else code, int(docs[i])))
    pd.DataFrame(ears_rows, columns=["date", "country", "documents"]).to_csv(
        out / "ears.csv", index=False, lineterminator="\n"
    )

    ox_rows = []
    ox_dates = pd.date_range(start, oxcgrt_end, freq="D")
    vac_start = pd.Timestamp("2020-12-15")
    for code, _, _ in FIXTURE_COUNTRIES:
        iso3 = pycountry.countries.get(alpha_2=code).alpha_3
        si = np.clip(np.cumsum(rng.normal(0, 2, len(ox_dates))) + 50, 0, 100)
        speed = rng.uniform(0.1, 0.4)
        vac = np.where(ox_dates >= vac_start, np.minimum(80.0, speed * (ox_dates - vac_start).days), 0.0)
        vac = np.round(vac, 2)
        name = pycountry.countries.get(alpha_2=code).name
        for i, day in enumerate(ox_dates):
            ox_rows.append((name, iso3, "NAT_TOTAL", day.strftime("%Y%m%d"), f"{si[i]:.2f}", f"{vac[i]:.2f}"))
    pd.DataFrame(
        ox_rows,
        columns=["CountryName", "CountryCode", "Jurisdiction", "Date", "StringencyIndex_Average", "PopulationVaccinated"],
    ).to_csv(out / "OxCGRT_compact_national_v1.csv", index=False, lineterminator="\n")

    tdir = out / "trends"
    tdir.mkdir(exist_ok=True)
    first_sunday = dates[0] + pd.Timedelta(days=(6 - dates[0].dayofweek) % 7)
    weeks = pd.date_range(first_sunday, dates[-1], freq="7D")
    for code in FIXTURE_EARS:
        nb = sum(deaths[c] for c in deaths if c != code and region_of[c] == region_of[code])
        daily = 0.2 * np.log1p(deaths[code]) + 0.3 * np.log1p(nb)
        weekly = pd.Series(daily, index=dates).rolling(7).mean().reindex(weeks).bfill().to_numpy()
        idx = np.clip(np.round(100 * weekly / weekly.max() + rng.normal(0, 3, len(weeks))), 0, 100)
        lines = ["Category: All categories", "", f"Week,COVID-19: ({code})"]
        for w, v in zip(weeks, idx):
            lines.append(f"{w.strftime('%Y-%m-%d')},{'<1' if v < 1 else int(v)}")
        (tdir / f"{code}.csv").write_text("\n".join(lines) + "\n")

    return {
        "who": str(out / "WHO-COVID-19-global-data.csv"),
        "ears": str(out / "ears.csv"),
        "oxcgrt": str(out / "OxCGRT_compact_national_v1.csv"),
        "trends": str(tdir),
    }


def white_noise_pairs(n_pairs: int, length: int, seed=None):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_pairs, 2, length))


