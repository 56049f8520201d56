"""Calendar-indexed series and the preprocessing transforms used by every model.

Missing observations are stored as NaN in a float array. A zero is always a
real observation, never a placeholder.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd


class Variable(str, enum.Enum):
    NEW_CASES = "NewCases"
    NEW_DEATHS = "NewDeaths"
    NEW_DOCUMENTS = "NewDocuments"
    TRENDS_INDEX = "TrendsIndex"
    VACCINATED_PCT = "VaccinatedPct"
    STRINGENCY_INDEX = "StringencyIndex"
    DERIVED = "Derived"


class Cadence(str, enum.Enum):
    DAILY = "Daily"
    WEEKLY = "Weekly"

    @property
    def step(self) -> dt.timedelta:
        return dt.timedelta(days=1 if self is Cadence.DAILY else 7)


COUNT_VARIABLES = frozenset(
    {Variable.NEW_CASES, Variable.NEW_DEATHS, Variable.NEW_DOCUMENTS}
)

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


class SeriesError(ValueError):
    """Base class for invalid series operations."""


class LengthError(SeriesError):
    pass


class DomainError(SeriesError):
    pass


class CadenceError(SeriesError):
    pass


class CoverageError(SeriesError):
    pass


@dataclass(frozen=True)
class DateRange:
    """Inclusive calendar range."""

    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"empty date range: {self.start} > {self.end}")

    @classmethod
    def parse(cls, start: str, end: str) -> "DateRange":
        return cls(dt.date.fromisoformat(start), dt.date.fromisoformat(end))

    def days(self) -> int:
        return (self.end - self.start).days + 1

    def __str__(self):
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


@dataclass(frozen=True, eq=False)
class Series:
    """One country's contiguous observations of a single variable.

    ``values[i]`` is the observation at ``start_date + i * cadence.step``.
    """

    country_code: str
    variable: Variable
    cadence: Cadence
    start_date: dt.date
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise SeriesError("series values must be one-dimensional")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "variable", Variable(self.variable))
        object.__setattr__(self, "cadence", Cadence(self.cadence))
        present = vals[~np.isnan(vals)]
        if self.variable is Variable.STRINGENCY_INDEX and (
            np.any(present < 0) or np.any(present > 100)
        ):
            bad = self._first_date_where((vals < 0) | (vals > 100))
            raise DomainError(
                f"{self.country_code}: stringency index outside [0, 100] on {bad}"
            )
        if self.variable in COUNT_VARIABLES and np.any(present < 0):
            bad = self._first_date_where(vals < 0)
            raise DomainError(
                f"{self.country_code}: negative {self.variable.value} on {bad}"
            )

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return (
            self.country_code == other.country_code
            and self.variable == other.variable
            and self.cadence == other.cadence
            and self.start_date == other.start_date
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None

    @property
    def end_date(self) -> dt.date:
        return self.date_at(len(self) - 1)

    @property
    def date_range(self) -> DateRange:
        return DateRange(self.start_date, self.end_date)

    def date_at(self, i: int) -> dt.date:
        return self.start_date + i * self.cadence.step

    def dates(self) -> list[dt.date]:
        return [self.date_at(i) for i in range(len(self))]

    def index(self) -> pd.DatetimeIndex:
        freq = "D" if self.cadence is Cadence.DAILY else "7D"
        return pd.date_range(self.start_date, periods=len(self), freq=freq)

    def to_pandas(self) -> pd.Series:
        return pd.Series(self.values, index=self.index(), name=self.country_code)

    def with_values(self, values, **changes) -> "Series":
        return replace(self, values=np.asarray(values, dtype=float), **changes)

    def _first_date_where(self, mask) -> dt.date:
        return self.date_at(int(np.flatnonzero(mask)[0]))

    @classmethod
    def from_pandas(
        cls,
        s: pd.Series,
        country_code: str,
        variable: Variable,
        cadence: Cadence = Cadence.DAILY,
    ) -> "Series":
        """Build from a date-indexed pandas series, inserting NaN for gaps."""
        if s.empty:
            raise LengthError(f"{country_code}: empty {Variable(variable).value} series")
        s = s.sort_index()
        idx = pd.DatetimeIndex(s.index)
        freq = "D" if Cadence(cadence) is Cadence.DAILY else "7D"
        full = pd.date_range(idx[0], idx[-1], freq=freq)
        if not idx.isin(full).all():
            raise CadenceError(
                f"{country_code}: dates are not aligned to a {Cadence(cadence).value} grid"
            )
        s = s.reindex(full)
        return cls(country_code, variable, cadence, full[0].date(), s.to_numpy(float))


def rolling_mean(s: Series, window: int) -> Series:
    """Right-aligned rolling mean; any missing input in the span makes the output missing."""
    if window < 1:
        raise ValueError("window must be a positive integer")
    if len(s) < window:
        raise LengthError(
            f"{s.country_code}: series of length {len(s)} shorter than window {window}"
        )
    out = np.full(len(s), np.nan)
    # NaN anywhere in a window propagates through the mean
    out[window - 1 :] = np.lib.stride_tricks.sliding_window_view(s.values, window).mean(axis=1)
    return s.with_values(out)


def log1p_transform(s: Series) -> Series:
    x = s.values
    neg = x < 0
    if np.any(neg):
        raise DomainError(
            f"{s.country_code}: negative value {x[neg][0]} on {s._first_date_where(neg)} "
            "cannot be log-transformed"
        )
    return s.with_values(np.log1p(x))


def diff(s: Series) -> Series:
    """First difference, clamped at zero; the first entry is missing."""
    if len(s) < 2:
        raise LengthError(f"{s.country_code}: need at least 2 entries to difference")
    d = np.empty(len(s))
    d[0] = np.nan
    d[1:] = np.diff(s.values)
    with np.errstate(invalid="ignore"):
        d = np.where(d < 0, 0.0, d)
    return s.with_values(d, variable=Variable.DERIVED)


def resample_weekly(s: Series, anchor: str | int = "sunday") -> Series:
    """Mean of the 7 daily values in each week ending on ``anchor``.

    ``anchor`` is a weekday name or a number with Monday = 0. Only complete
    weeks inside the series contribute; a week with a missing day is missing.
    """
    if s.cadence is not Cadence.DAILY:
        raise CadenceError(f"{s.country_code}: resample_weekly needs a Daily series")
    if len(s) == 0:
        raise LengthError(f"{s.country_code}: empty series")
    anchor_dow = anchor if isinstance(anchor, int) else WEEKDAYS.index(anchor.lower())
    first_end = (anchor_dow - s.start_date.weekday()) % 7
    if first_end < 6:
        first_end += 7
    n_weeks = (len(s) - 1 - first_end) // 7 + 1
    if n_weeks <= 0:
        raise LengthError(f"{s.country_code}: no complete week ending on {anchor}")
    lo = first_end - 6
    block = s.values[lo : lo + 7 * n_weeks].reshape(n_weeks, 7)
    # mean of a row with NaN is NaN, which is the missing-week rule
    weekly = block.mean(axis=1)
    return Series(
        s.country_code,
        s.variable,
        Cadence.WEEKLY,
        s.date_at(first_end),
        weekly,
    )


def crop(s: Series, rng: DateRange) -> Series:
    """Slice ``s`` to ``rng``; both ends must fall on the series grid and inside it."""
    step = s.cadence.step.days
    off = (rng.start - s.start_date).days
    if off < 0 or rng.end > s.end_date:
        raise CoverageError(
            f"{s.country_code}/{s.variable.value} covers {s.date_range}, not {rng}"
        )
    if off % step or (rng.end - rng.start).days % step:
        raise CadenceError(f"{s.country_code}: range {rng} is off the {s.cadence.value} grid")
    i0 = off // step
    n = (rng.end - rng.start).days // step + 1
    return s.with_values(s.values[i0 : i0 + n], start_date=rng.start)


def align(series_list: Sequence[Series], rng: DateRange) -> list[Series]:
    """Crop every series to ``rng``; report all offenders at once."""
    if not series_list:
        return []
    cadences = {s.cadence for s in series_list}
    if len(cadences) > 1:
        raise CadenceError(f"mixed cadences: {sorted(c.value for c in cadences)}")
    out, problems = [], []
    for s in series_list:
        try:
            out.append(crop(s, rng))
        except SeriesError as exc:
            problems.append(str(exc))
    if problems:
        raise CoverageError("cannot align series:\n  " + "\n  ".join(problems))
    return out
