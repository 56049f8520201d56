"""Parsers for the public epidemic/infodemic datasets and balanced-panel assembly.

Supported layouts:

* WHO COVID-19 surveillance export (daily new cases and deaths, WHO region).
* WHO-EARS document counts (daily, one row per country and date).
* OxCGRT compact national file (vaccinated share and Stringency Index).
* Google Trends per-country CSV exports (weekly interest index).

Column names for every layout can be overridden with a JSON mapping file,
see :func:`load_column_config`.
"""

from __future__ import annotations

import copy
import csv
import datetime as dt
import enum
import io
import json
import logging
import os
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd
import pycountry

from . import specs
from .specs import ModelSpec
from .timeseries import (
    Cadence,
    CoverageError,
    DateRange,
    Series,
    Variable,
    diff,
    log1p_transform,
    resample_weekly,
    rolling_mean,
)

logger = logging.getLogger(__name__)

SMOOTHING_WINDOW = 7

DEFAULT_COLUMNS = {
    "who": {
        "date": "Date_reported",
        "date_format": "%Y-%m-%d",
        "code": "Country_code",
        "name": "Country",
        "region": "WHO_region",
        "cases": "New_cases",
        "deaths": "New_deaths",
    },
    "ears": {
        "date": "date",
        "date_format": "%Y-%m-%d",
        "country": "country",
        "documents": "documents",
    },
    "oxcgrt": {
        "date": "Date",
        "date_format": "%Y%m%d",
        "code": "CountryCode",
        "vaccinated": "PopulationVaccinated",
        "stringency": "StringencyIndex_Average",
        "jurisdiction": "Jurisdiction",
        "national": "NAT_TOTAL",
    },
    "trends": {
        "date_format": "%Y-%m-%d",
        "below_one": 0.5,
    },
}

ARCHIVE_URLS = {
    "who": "https://web.archive.org/web/20231111122217/https://covid19.who.int/WHO-COVID-19-global-data.csv",
    "oxcgrt": "https://raw.githubusercontent.com/OxCGRT/covid-policy-dataset/main/data/OxCGRT_compact_national_v1.csv",
}


class IngestError(ValueError):
    """A source file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class MissingCountryError(IngestError):
    pass


class RegionError(IngestError):
    pass


class BalanceError(ValueError):
    pass


class WhoRegion(str, enum.Enum):
    AFR = "AFR"
    AMR = "AMR"
    EMR = "EMR"
    EUR = "EUR"
    SEAR = "SEAR"
    WPR = "WPR"
    OTHER = "Other"

    @classmethod
    def parse(cls, label: str) -> "WhoRegion":
        label = (label or "").strip().upper()
        for region in cls:
            if region is not cls.OTHER and label in (region.value, region.value + "O"):
                return region
        return cls.OTHER


@dataclass(frozen=True)
class CountryMeta:
    code: str
    name: str
    who_region: WhoRegion


def load_column_config(path) -> dict:
    """Merge a JSON ``{source: {key: column}}`` mapping over the defaults."""
    cols = copy.deepcopy(DEFAULT_COLUMNS)
    if path is None:
        return cols
    with open(path) as fh:
        user = json.load(fh)
    for source, mapping in user.items():
        if source not in cols:
            raise ValueError(f"unknown source {source!r} in column config")
        cols[source].update(mapping)
    return cols


def _columns(source: str, columns: Mapping | None) -> dict:
    cols = dict(DEFAULT_COLUMNS[source])
    if columns:
        cols.update(columns.get(source, {}))
    return cols


def _read_table(path, required: Iterable[str], skiprows: int = 0) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skiprows=skiprows)
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestError(f"unreadable CSV ({exc})", path) from exc
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise IngestError(
            f"missing columns {missing}; file has {list(df.columns)}", path
        )
    # header sits on line skiprows + 1, data starts one below
    df.index = np.arange(len(df)) + skiprows + 2
    return df


def _parse_dates(col: pd.Series, fmt: str, path) -> pd.Series:
    parsed = pd.to_datetime(col.str.strip(), format=fmt, errors="coerce")
    bad = parsed.isna()
    if bad.any():
        line = int(col.index[bad.to_numpy()][0])
        raise IngestError(f"malformed date {col[line]!r}", path, line)
    return parsed


def _parse_numbers(col: pd.Series, path, below_one: float | None = None) -> pd.Series:
    text = col.str.strip().str.replace(",", "", regex=False)
    if below_one is not None:
        text = text.where(text != "<1", str(below_one))
    nums = pd.to_numeric(text, errors="coerce")
    bad = nums.isna() & (text != "")
    if bad.any():
        line = int(col.index[bad.to_numpy()][0])
        raise IngestError(f"non-numeric value {col[line]!r}", path, line)
    return nums.astype(float)


def _check_duplicates(df: pd.DataFrame, keys: list[str], path):
    dup = df.duplicated(keys, keep=False)
    if dup.any():
        lines = [int(i) for i in df.index[dup.to_numpy()][:2]]
        first = df.loc[lines[0], keys].tolist()
        raise IngestError(f"duplicate rows for {first} (lines {lines})", path, lines[-1])


def _clamp_negative_counts(vals: pd.Series, label: str, code: str) -> pd.Series:
    neg = vals < 0
    if neg.any():
        logger.warning(
            "%s: %d negative %s values (reporting corrections) clamped to 0",
            code, int(neg.sum()), label,
        )
        vals = vals.where(~neg, 0.0)
    return vals


def to_alpha2(value: str) -> str:
    """Resolve an ISO alpha-2/alpha-3 code or an English country name to alpha-2."""
    value = value.strip()
    if len(value) == 2 and value.isalpha():
        return value.upper()
    try:
        return pycountry.countries.lookup(value).alpha_2
    except LookupError:
        raise KeyError(f"unrecognised country {value!r}") from None


def _series_by_country(df, date_col, value_col, variable, path, cadence=Cadence.DAILY):
    out = {}
    for code, grp in df.groupby("_code", sort=True):
        s = grp.set_index(date_col)[value_col]
        try:
            out[code] = Series.from_pandas(s, code, variable, cadence)
        except ValueError as exc:
            raise IngestError(str(exc), path) from exc
    return out


def parse_who_surveillance(path, columns: Mapping | None = None, empty_as_zero: bool = False):
    """Read the WHO global surveillance CSV.

    Returns ``({NEW_CASES: {code: Series}, NEW_DEATHS: {...}}, {code: CountryMeta})``.
    Empty numeric cells are missing unless ``empty_as_zero`` is set.
    Negative daily counts are clamped to zero with a warning.
    """
    c = _columns("who", columns)
    df = _read_table(path, [c["date"], c["code"], c["region"], c["cases"], c["deaths"]])
    df["_date"] = _parse_dates(df[c["date"]], c["date_format"], path)
    df["_code"] = df[c["code"]].str.strip()
    blank = df["_code"] == ""
    if blank.any():
        logger.warning("%s: skipping %d rows without a country code", path, int(blank.sum()))
        df = df[~blank]
    _check_duplicates(df, ["_code", "_date"], path)
    for key in ("cases", "deaths"):
        vals = _parse_numbers(df[c[key]], path)
        if empty_as_zero:
            vals = vals.fillna(0.0)
        df["_" + key] = vals

    registry = {}
    name_col = c.get("name")
    for code, grp in df.groupby("_code", sort=True):
        name = grp[name_col].iloc[0].strip() if name_col in df.columns else code
        registry[code] = CountryMeta(code, name, WhoRegion.parse(grp[c["region"]].iloc[0]))
        for key in ("cases", "deaths"):
            df.loc[grp.index, "_" + key] = _clamp_negative_counts(grp["_" + key], key, code)

    out = {
        Variable.NEW_CASES: _series_by_country(df, "_date", "_cases", Variable.NEW_CASES, path),
        Variable.NEW_DEATHS: _series_by_country(df, "_date", "_deaths", Variable.NEW_DEATHS, path),
    }
    return out, registry


def parse_ears(path, columns: Mapping | None = None) -> dict[str, Series]:
    """Read WHO-EARS daily document counts, one Series per country."""
    c = _columns("ears", columns)
    df = _read_table(path, [c["date"], c["country"], c["documents"]])
    df["_date"] = _parse_dates(df[c["date"]], c["date_format"], path)
    codes = {}
    for raw in df[c["country"]].unique():
        try:
            codes[raw] = to_alpha2(raw)
        except KeyError as exc:
            line = int(df.index[(df[c["country"]] == raw).to_numpy()][0])
            raise IngestError(str(exc.args[0]), path, line) from None
    df["_code"] = df[c["country"]].map(codes)
    _check_duplicates(df, ["_code", "_date"], path)
    df["_docs"] = _parse_numbers(df[c["documents"]], path)
    neg = df["_docs"] < 0
    if neg.any():
        raise IngestError("negative document count", path, int(df.index[neg.to_numpy()][0]))
    return _series_by_country(df, "_date", "_docs", Variable.NEW_DOCUMENTS, path)


def parse_oxcgrt(path, columns: Mapping | None = None) -> dict[Variable, dict[str, Series]]:
    """Read OxCGRT national rows: vaccinated share (%) and Stringency Index per country."""
    c = _columns("oxcgrt", columns)
    df = _read_table(path, [c["date"], c["code"], c["vaccinated"], c["stringency"]])
    jur = c.get("jurisdiction")
    if jur and jur in df.columns:
        df = df[df[jur].str.strip() == c["national"]]
    df["_date"] = _parse_dates(df[c["date"]], c["date_format"], path)
    codes = {}
    for raw in df[c["code"]].unique():
        try:
            codes[raw] = to_alpha2(raw)
        except KeyError:
            logger.warning("%s: skipping unrecognised country code %r", path, raw)
    df = df[df[c["code"]].isin(list(codes))].copy()
    df["_code"] = df[c["code"]].map(codes)
    _check_duplicates(df, ["_code", "_date"], path)
    df["_si"] = _parse_numbers(df[c["stringency"]], path)
    df["_vac"] = _parse_numbers(df[c["vaccinated"]], path)
    out_of_range = (df["_si"] < 0) | (df["_si"] > 100)
    if out_of_range.any():
        line = int(df.index[out_of_range.to_numpy()][0])
        raise IngestError(f"Stringency Index {df.loc[line, '_si']} outside [0, 100]", path, line)
    return {
        Variable.VACCINATED_PCT: _series_by_country(df, "_date", "_vac", Variable.VACCINATED_PCT, path),
        Variable.STRINGENCY_INDEX: _series_by_country(
            df, "_date", "_si", Variable.STRINGENCY_INDEX, path
        ),
    }


def _trends_header_line(lines: list[str], fmt: str) -> int:
    for i in range(len(lines) - 1):
        first = next(csv.reader([lines[i + 1]]), [""])
        if "," not in lines[i] or not first:
            continue
        try:
            dt.datetime.strptime(first[0].strip(), fmt)
        except ValueError:
            continue
        return i
    raise IngestError("no data rows found")


def parse_trends(file_per_country: Mapping[str, object], columns: Mapping | None = None):
    """Read Google Trends exports, one file per country code.

    Preamble lines before the ``Week,<topic>`` header are skipped. ``<1`` cells
    become ``below_one`` (0.5 by default). Rows must be exactly 7 days apart.
    """
    c = _columns("trends", columns)
    out = {}
    for code, path in sorted(file_per_country.items()):
        with open(path, encoding="utf-8-sig") as fh:
            text = fh.read()
        lines = text.splitlines()
        try:
            head = _trends_header_line(lines, c["date_format"])
        except IngestError:
            raise IngestError("no data rows found", path) from None
        df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skiprows=head)
        df.index = np.arange(len(df)) + head + 2
        dates = _parse_dates(df.iloc[:, 0], c["date_format"], path)
        vals = _parse_numbers(df.iloc[:, 1], path, below_one=c["below_one"])
        bad = (vals < 0) | (vals > 100)
        if bad.any():
            line = int(df.index[bad.to_numpy()][0])
            raise IngestError(f"Trends index {vals[line]} outside [0, 100]", path, line)
        gaps = dates.diff().dt.days.to_numpy()[1:]
        if np.any(gaps != 7):
            k = int(np.flatnonzero(gaps != 7)[0]) + 1
            raise IngestError(
                f"rows {int(gaps[k - 1])} days apart; weekly data expected",
                path,
                int(df.index[k]),
            )
        code = to_alpha2(code)
        out[code] = Series(code, Variable.TRENDS_INDEX, Cadence.WEEKLY, dates.iloc[0].date(), vals)
    return out


def trends_files(directory) -> dict[str, Path]:
    """Map ``<CODE>.csv`` files in a directory to country codes."""
    return {p.stem.upper(): p for p in sorted(Path(directory).glob("*.csv"))}


def require_countries(series_set: Mapping[str, Series], codes: Iterable[str], source: str):
    missing = sorted(set(codes) - set(series_set))
    if missing:
        raise MissingCountryError(f"{source}: no data for countries {missing}")


def neighbour_aggregate(
    variable: Variable,
    country: CountryMeta,
    universe: Mapping[str, Series],
    registry: Mapping[str, CountryMeta],
) -> Series:
    """Element-wise sum over every other country in ``country``'s WHO region.

    Missing inputs count as 0 (logged). The result spans the union of the
    region members' date ranges.
    """
    if country.who_region is WhoRegion.OTHER:
        raise RegionError(f"{country.code} has no WHO region")
    members = sorted(
        code
        for code, meta in registry.items()
        if meta.who_region is country.who_region and code != country.code and code in universe
    )
    spans = [universe[c] for c in members]
    if country.code in universe:
        spans.append(universe[country.code])
    if not spans:
        raise MissingCountryError(f"no {Variable(variable).value} data for region {country.who_region.value}")
    start = min(s.start_date for s in spans)
    end = max(s.end_date for s in spans)
    index = pd.date_range(start, end, freq="D")
    total = np.zeros(len(index))
    for code in members:
        vals = universe[code].to_pandas().reindex(index).to_numpy()
        n_missing = int(np.isnan(vals).sum())
        if n_missing:
            logger.warning(
                "neighbour sum for %s: %d missing %s values of %s treated as 0",
                country.code, n_missing, Variable(variable).value, code,
            )
        total += np.nan_to_num(vals)
    return Series(country.code, variable, Cadence.DAILY, start, total)


@dataclass
class Sources:
    """Parsed raw inputs; any subset may be absent."""

    registry: dict[str, CountryMeta]
    cases: dict[str, Series]
    deaths: dict[str, Series]
    documents: dict[str, Series] = field(default_factory=dict)
    vaccinated: dict[str, Series] = field(default_factory=dict)
    stringency: dict[str, Series] = field(default_factory=dict)
    trends: dict[str, Series] = field(default_factory=dict)

    @classmethod
    def load(cls, paths: Mapping[str, object], columns: Mapping | None = None, empty_as_zero=False):
        """``paths`` keys: who (required), ears, oxcgrt, trends (directory or code→file map)."""
        who, registry = parse_who_surveillance(paths["who"], columns, empty_as_zero=empty_as_zero)
        src = cls(registry, who[Variable.NEW_CASES], who[Variable.NEW_DEATHS])
        if paths.get("ears"):
            src.documents = parse_ears(paths["ears"], columns)
        if paths.get("oxcgrt"):
            ox = parse_oxcgrt(paths["oxcgrt"], columns)
            src.vaccinated = ox[Variable.VACCINATED_PCT]
            src.stringency = ox[Variable.STRINGENCY_INDEX]
        trends = paths.get("trends")
        if trends:
            files = trends if isinstance(trends, Mapping) else trends_files(trends)
            src.trends = parse_trends(files, columns)
        return src

    def summary(self) -> list[dict]:
        """One row per variable: source, country count, date span, cadence."""
        rows = []
        table = [
            ("New Cases", "WHO", self.cases),
            ("New Deaths", "WHO", self.deaths),
            ("New Documents", "WHO-EARS", self.documents),
            ("Vaccinations (%)", "OxCGRT", self.vaccinated),
            ("Stringency Index", "OxCGRT", self.stringency),
            ("Google Trends", "Google", self.trends),
        ]
        for label, source, data in table:
            if not data:
                continue
            first = next(iter(data.values()))
            rows.append(
                {
                    "variable": label,
                    "source": source,
                    "countries": len(data),
                    "start": min(s.start_date for s in data.values()).isoformat(),
                    "end": max(s.end_date for s in data.values()).isoformat(),
                    "cadence": first.cadence.value,
                }
            )
        return rows


SEASONS = ("winter", "spring", "summer", "autumn")
WEEKDAY_DUMMIES = tuple(f"dow_{d[:3]}" for d in ("tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"))
SEASON_DUMMIES = tuple(f"season_{s}" for s in SEASONS[1:])


def season_of(month: int) -> str:
    """Meteorological season: Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov autumn."""
    return SEASONS[(month % 12) // 3]


def dummy_encoding(dates, weekday: bool = True, season: bool = True) -> dict[str, np.ndarray]:
    """Indicator columns; references are Monday and winter."""
    idx = pd.DatetimeIndex(dates)
    out = {}
    if weekday:
        dow = idx.dayofweek.to_numpy()
        for j, name in enumerate(WEEKDAY_DUMMIES, start=1):
            out[name] = (dow == j).astype(float)
    if season:
        seasons = np.array([season_of(m) for m in idx.month])
        for name in SEASON_DUMMIES:
            out[name] = (seasons == name.removeprefix("season_")).astype(float)
    return out


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced country x time table; every column is an N x T float array."""

    countries: tuple[CountryMeta, ...]
    dates: pd.DatetimeIndex
    cadence: Cadence
    columns: Mapping[str, np.ndarray]
    dependent: str
    dummies: tuple[str, ...] = ()
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.countries), len(self.dates))
        frozen = {}
        for name, arr in self.columns.items():
            arr = np.array(arr, dtype=float)
            if arr.shape != shape:
                raise ValueError(f"column {name!r} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "columns", frozen)
        object.__setattr__(self, "dates", pd.DatetimeIndex(self.dates))
        if self.dependent not in frozen:
            raise ValueError(f"dependent column {self.dependent!r} not in panel")
        holes = [
            (name, self.countries[i].code, self.dates[t].date().isoformat())
            for name, arr in frozen.items()
            for i, t in zip(*np.nonzero(np.isnan(arr)))
        ]
        if holes:
            shown = ", ".join(f"{c}/{d}/{n}" for n, c, d in holes[:20])
            more = f" (+{len(holes) - 20} more)" if len(holes) > 20 else ""
            raise BalanceError(f"panel is unbalanced; missing cells: {shown}{more}")

    @property
    def codes(self) -> list[str]:
        return [c.code for c in self.countries]

    @property
    def n_countries(self) -> int:
        return len(self.countries)

    @property
    def n_periods(self) -> int:
        return len(self.dates)

    @property
    def n_obs(self) -> int:
        return self.n_countries * self.n_periods

    @property
    def date_range(self) -> DateRange:
        return DateRange(self.dates[0].date(), self.dates[-1].date())

    def stacked(self, name: str) -> np.ndarray:
        """Column flattened country-major (all dates of country 0 first)."""
        return self.columns[name].ravel()

    def entity(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_countries), self.n_periods)

    def restrict(self, start=None, end=None) -> "PanelDataset":
        """Sub-panel of dates in ``[start, end]``."""
        mask = np.ones(self.n_periods, bool)
        if start is not None:
            mask &= self.dates >= pd.Timestamp(start)
        if end is not None:
            mask &= self.dates <= pd.Timestamp(end)
        if not mask.any():
            raise CoverageError(f"no panel dates in [{start}, {end}]")
        return PanelDataset(
            self.countries,
            self.dates[mask],
            self.cadence,
            {k: v[:, mask] for k, v in self.columns.items()},
            self.dependent,
            self.dummies,
            dict(self.metadata),
        )

    def select(self, codes: Iterable[str]) -> "PanelDataset":
        pos = {c: i for i, c in enumerate(self.codes)}
        rows = [pos[c] for c in codes]
        return PanelDataset(
            tuple(self.countries[i] for i in rows),
            self.dates,
            self.cadence,
            {k: v[rows] for k, v in self.columns.items()},
            self.dependent,
            self.dummies,
            dict(self.metadata),
        )

    def to_long(self) -> pd.DataFrame:
        """Tidy frame with columns country, date, column, value."""
        frames = []
        dates = self.dates.strftime("%Y-%m-%d")
        for name in sorted(self.columns):
            arr = self.columns[name]
            frames.append(
                pd.DataFrame(
                    {
                        "country": np.repeat(self.codes, self.n_periods),
                        "date": np.tile(dates, self.n_countries),
                        "column": name,
                        "value": arr.ravel(),
                    }
                )
            )
        return pd.concat(frames, ignore_index=True)


def write_panel_csv(panel: PanelDataset, path, header: Iterable[str] = ()):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        panel.to_long().to_csv(fh, index=False, float_format="%.12g", lineterminator="\n")


def _raw_series(column: str, code: str, sources: Sources) -> Series:
    def pick(data, label):
        require_countries(data, [code], label)
        return data[code]

    if column == specs.DOCUMENTS:
        return pick(sources.documents, "WHO-EARS")
    if column == specs.TRENDS:
        return pick(sources.trends, "Google Trends")
    if column == specs.CASES:
        return pick(sources.cases, "WHO cases")
    if column == specs.DEATHS:
        return pick(sources.deaths, "WHO deaths")
    if column in (specs.CASES_NB, specs.DEATHS_NB):
        if code not in sources.registry:
            raise RegionError(f"{code} is not in the WHO registry")
        var, universe = (
            (Variable.NEW_CASES, sources.cases)
            if column == specs.CASES_NB
            else (Variable.NEW_DEATHS, sources.deaths)
        )
        return neighbour_aggregate(var, sources.registry[code], universe, sources.registry)
    if column == specs.VACCINATION:
        return diff(pick(sources.vaccinated, "OxCGRT vaccination"))
    if column == specs.STRINGENCY:
        return pick(sources.stringency, "OxCGRT stringency")
    raise KeyError(f"unknown panel column {column!r}")


def _transform(raw: Series, spec: ModelSpec, anchor: int | None, window: int) -> Series:
    if spec.cadence is Cadence.WEEKLY:
        if raw.cadence is Cadence.DAILY:
            raw = resample_weekly(raw, anchor)
        return log1p_transform(raw)
    return log1p_transform(rolling_mean(raw, window))


def build_panel(
    spec: ModelSpec,
    sources: Sources,
    countries: Iterable[str] | None = None,
    date_range: DateRange | None = None,
    smoothing_window: int = SMOOTHING_WINDOW,
) -> PanelDataset:
    """Assemble the balanced panel for ``spec``.

    Daily columns go through neighbour aggregation (raw counts), a right-aligned
    rolling mean and ``log1p``. Weekly models average daily regressors over the
    weeks ending on the Trends timestamp weekday. With an explicit ``date_range``
    any missing cell is an error; otherwise the common span is trimmed from the
    left past the last incomplete date.
    """
    dep_source = sources.trends if spec.dependent == specs.TRENDS else sources.documents
    if countries is None:
        countries = sorted(dep_source)
    codes = sorted(set(countries))
    if not codes:
        raise MissingCountryError("no countries to model")
    missing_meta = [c for c in codes if c not in sources.registry]
    if missing_meta:
        raise RegionError(f"countries missing from the WHO registry: {missing_meta}")

    anchor = None
    if spec.cadence is Cadence.WEEKLY:
        require_countries(sources.trends, codes, "Google Trends")
        anchors = {sources.trends[c].start_date.weekday() for c in codes}
        if len(anchors) != 1:
            raise CoverageError("Trends files use different week anchors")
        anchor = anchors.pop()

    frames = {}
    for col in spec.columns:
        per_country = {}
        for code in codes:
            s = _transform(_raw_series(col, code, sources), spec, anchor, smoothing_window)
            per_country[code] = s.to_pandas()
        frames[col] = pd.DataFrame(per_country)

    start = max(f.apply(pd.Series.first_valid_index).max() for f in frames.values())
    end = min(f.apply(pd.Series.last_valid_index).min() for f in frames.values())
    if start is None or end is None or pd.isna(start) or pd.isna(end) or start > end:
        raise CoverageError(f"model {spec.id.value}: sources share no common dates")
    freq = "D" if spec.cadence is Cadence.DAILY else "7D"
    index = pd.date_range(start, end, freq=freq)
    if date_range is not None:
        want = pd.date_range(date_range.start, date_range.end, freq=freq)
        if want[0] < index[0] or want[-1] > index[-1] or not want.isin(index).all():
            raise CoverageError(
                f"model {spec.id.value}: requested {date_range} outside common coverage "
                f"{index[0].date()}..{index[-1].date()}"
            )
        index = want
    frames = {k: f.reindex(index) for k, f in frames.items()}

    if date_range is None:
        complete = np.logical_and.reduce([f.notna().all(axis=1).to_numpy() for f in frames.values()])
        incomplete = np.flatnonzero(~complete)
        if len(incomplete):
            first = incomplete[-1] + 1
            if first >= len(index):
                raise BalanceError(f"model {spec.id.value}: no complete dates at the end of coverage")
            logger.info(
                "model %s: trimming %d leading dates to balance the panel", spec.id.value, first
            )
            index = index[first:]
            frames = {k: f.loc[index] for k, f in frames.items()}

    columns = {k: f[codes].to_numpy().T for k, f in frames.items()}
    dummies = dummy_encoding(
        index, weekday=spec.include_weekday_dummies, season=spec.include_season_dummies
    )
    for name, vals in dummies.items():
        columns[name] = np.tile(vals, (len(codes), 1))
    meta = {
        "model": spec.id.value,
        "date_range": f"{index[0].date()}..{index[-1].date()}",
        "N": len(codes),
        "T": len(index),
        "n_obs": len(codes) * len(index),
    }
    return PanelDataset(
        tuple(sources.registry[c] for c in codes),
        index,
        spec.cadence,
        columns,
        spec.dependent,
        tuple(dummies),
        meta,
    )


def fetch(dest_dir, which: Iterable[str] = ("who", "oxcgrt")) -> dict[str, Path]:
    """Download archived source files. Only called on explicit request."""
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    out = {}
    for key in which:
        url = ARCHIVE_URLS[key]
        target = dest / os.path.basename(url)
        logger.info("downloading %s -> %s", url, target)
        urllib.request.urlretrieve(url, target)
        out[key] = target
    return out
