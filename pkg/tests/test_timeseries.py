import datetime as dt

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infodemic.timeseries import (
    Cadence,
    CadenceError,
    CoverageError,
    DateRange,
    DomainError,
    LengthError,
    Series,
    Variable,
    align,
    crop,
    diff,
    log1p_transform,
    resample_weekly,
    rolling_mean,
)

D0 = dt.date(2021, 1, 4)  # a Monday
counts = arrays(float, st.integers(8, 60), elements=st.floats(0, 1e6, allow_nan=False))


def series(values, variable=Variable.NEW_CASES, start=D0, code="IT", cadence=Cadence.DAILY):
    return Series(code, variable, cadence, start, np.asarray(values, float))


def test_rolling_mean_first_values():
    s = rolling_mean(series([1, 2, 3, 4, 5, 6, 7, 8]), 7)
    assert np.isnan(s.values[:6]).all()
    assert s.values[6] == pytest.approx(4.0)
    assert s.values[7] == pytest.approx(5.0)


def test_rolling_mean_propagates_missing():
    vals = np.arange(10.0)
    vals[3] = np.nan
    out = rolling_mean(series(vals), 3).values
    assert np.isnan(out[3:6]).all()
    assert out[6] == pytest.approx(5.0)


def test_rolling_mean_too_short():
    with pytest.raises(LengthError):
        rolling_mean(series([1.0, 2.0]), 7)


def test_log1p_zero_and_negative():
    assert log1p_transform(series([0.0])).values[0] == 0.0
    s = Series("IT", Variable.DERIVED, Cadence.DAILY, D0, [1.0, -1.0])
    with pytest.raises(DomainError, match="2021-01-05"):
        log1p_transform(s)


def test_negative_counts_rejected():
    with pytest.raises(DomainError):
        series([1.0, -2.0])


def test_stringency_range():
    with pytest.raises(DomainError):
        series([50.0, 101.0], Variable.STRINGENCY_INDEX)


def test_diff_clamps_and_marks_derived():
    s = series([0.0, 1.0, 3.0, 2.5, 4.0], Variable.VACCINATED_PCT)
    d = diff(s)
    assert np.isnan(d.values[0])
    np.testing.assert_array_equal(d.values[1:], [1.0, 2.0, 0.0, 1.5])
    assert d.variable is Variable.DERIVED


def test_resample_weekly_sunday_anchor():
    start = dt.date(2021, 1, 1)  # Friday; first full week ends Sunday 2021-01-10
    s = series(np.arange(21.0), start=start)
    w = resample_weekly(s, "sunday")
    assert w.start_date == dt.date(2021, 1, 10)
    assert w.cadence is Cadence.WEEKLY
    assert w.values[0] == pytest.approx(np.mean(np.arange(3, 10)))
    assert len(w) == 2


def test_crop_and_align():
    a = series(np.arange(30.0))
    b = series(np.arange(20.0), start=D0 + dt.timedelta(days=5))
    rng = DateRange(D0 + dt.timedelta(days=5), D0 + dt.timedelta(days=10))
    xa, xb = align([a, b], rng)
    assert len(xa) == len(xb) == 6
    assert xa.values[0] == 5.0 and xb.values[0] == 0.0
    with pytest.raises(CoverageError, match="IT"):
        crop(a, DateRange(D0, D0 + dt.timedelta(days=40)))


def test_align_rejects_mixed_cadence():
    a = series(np.arange(30.0))
    w = series(np.arange(5.0), cadence=Cadence.WEEKLY, variable=Variable.TRENDS_INDEX)
    with pytest.raises(CadenceError):
        align([a, w], DateRange(D0, D0 + dt.timedelta(days=7)))


def test_from_pandas_fills_gaps_and_rejects_offgrid():
    idx = pd.to_datetime(["2021-01-04", "2021-01-05", "2021-01-07"])
    s = Series.from_pandas(pd.Series([1.0, 2.0, 3.0], index=idx), "IT", Variable.NEW_CASES)
    assert len(s) == 4 and np.isnan(s.values[2])
    widx = pd.to_datetime(["2021-01-03", "2021-01-10", "2021-01-12"])
    with pytest.raises(CadenceError):
        Series.from_pandas(pd.Series([1.0, 2.0, 3.0], index=widx), "IT", Variable.TRENDS_INDEX, Cadence.WEEKLY)


def test_daterange_order():
    with pytest.raises(ValueError):
        DateRange(dt.date(2021, 2, 1), dt.date(2021, 1, 1))
    assert DateRange.parse("2021-01-01", "2021-01-31").days() == 31


# properties

@given(counts)
def test_rolling_window_one_is_identity(v):
    s = series(v)
    assert rolling_mean(s, 1) == s


@given(counts, st.integers(1, 7), st.data())
def test_rolling_mean_is_right_aligned(v, w, data):
    t = data.draw(st.integers(0, len(v) - 1))
    before = rolling_mean(series(v), w).values
    mutated = v.copy()
    mutated[t] += 1000.0
    after = rolling_mean(series(mutated), w).values
    np.testing.assert_array_equal(before[:t], after[:t])


@given(st.floats(0, 1e9), st.floats(0, 1e9))
def test_log1p_monotone(x, y):
    fx, fy = log1p_transform(series([x, y])).values
    if x < y:
        assert fx < fy
    elif x == y:
        assert fx == fy


@given(arrays(float, st.integers(2, 60), elements=st.floats(0, 100, allow_nan=False)))
def test_diff_cumsum_recovers_monotone_part(v):
    d = diff(series(v, Variable.VACCINATED_PCT)).values
    rebuilt = v[0] + np.concatenate([[0.0], np.cumsum(d[1:])])
    # the only discrepancy is the accumulated size of the clamped drops
    clamped = np.concatenate([[0.0], np.cumsum(np.clip(-np.diff(v), 0, None))])
    np.testing.assert_allclose(rebuilt - clamped, v, atol=1e-9)


@given(st.floats(0, 1e6), st.integers(14, 80), st.integers(0, 6))
@settings(max_examples=50)
def test_resample_constant(c, n, offset):
    s = series(np.full(n, c), start=D0 + dt.timedelta(days=offset))
    w = resample_weekly(s, "sunday")
    np.testing.assert_allclose(w.values, c, rtol=1e-12)
