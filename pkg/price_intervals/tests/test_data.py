import numpy as np
import pytest

from price_intervals.data import (PriceSeries, apply_scaler, describe,
                                  difference, fit_scaler, integrate,
                                  invert_scaler, lag_matrix, load_series,
                                  reconstruct, split_train_val)
from price_intervals.errors import DataFormatError
from price_intervals.tests.utils import price_series, write_lines


def test_load_series(tmpdir):
    """Tests reading a two-row file."""
    path = write_lines(tmpdir, "prices.csv",
                       ["date,price", "2010-09-08,17.0", "2010-09-09,17.2"])
    series = load_series(path)
    assert len(series) == 2
    assert str(series.dates[0]) == "2010-09-08"
    np.testing.assert_array_equal(series.values, [17.0, 17.2])


def test_load_series_sorts_and_skips_blank_rows(tmpdir):
    """Tests that row order in the file does not matter."""
    ordered = load_series(
        write_lines(tmpdir, "a.csv", [
            "date,price", "2010-09-08,17.0", "2010-09-09,17.2",
            "2010-09-10,16.9"
        ]))
    shuffled = load_series(
        write_lines(tmpdir, "b.csv", [
            "date,price", "2010-09-10,16.9", "", "2010-09-08,17.0",
            "2010-09-09,17.2"
        ]))
    np.testing.assert_array_equal(ordered.dates, shuffled.dates)
    np.testing.assert_array_equal(ordered.values, shuffled.values)


def test_load_series_bad_record(tmpdir):
    """Tests that an unparsable price names its data line."""
    path = write_lines(tmpdir, "bad.csv", ["date,price", "2010-09-08, abc"])
    with pytest.raises(DataFormatError) as e:
        load_series(path)
    assert e.value.line == 1
    assert "line 1" in str(e.value)


def test_load_series_duplicate_date(tmpdir):
    path = write_lines(tmpdir, "dup.csv",
                       ["date,price", "2010-09-08,17.0", "2010-09-08,17.1"])
    with pytest.raises(DataFormatError, match="duplicate"):
        load_series(path)


def test_load_series_custom_columns(tmpdir):
    path = write_lines(tmpdir, "semi.csv",
                       ["day;close", "2010-09-08;17.0", "2010-09-09;17.5"])
    series = load_series(
        path, date_column="day", price_column="close", delimiter=";")
    np.testing.assert_array_equal(series.values, [17.0, 17.5])


def test_price_series_invariants():
    dates = np.array(["2020-01-02", "2020-01-01"], dtype="datetime64[D]")
    with pytest.raises(ValueError):
        PriceSeries(dates, [1.0, 2.0])
    with pytest.raises(ValueError):
        PriceSeries(dates[:1], [1.0])


def test_between_is_closed():
    series = price_series([1.0, 1.0, 1.0, 1.0], start="2020-01-06")
    part = series.between("2020-01-07", "2020-01-09")
    assert len(part) == 3
    assert str(part.dates[-1]) == "2020-01-09"


@pytest.mark.parametrize("d,expected", [(1, [2.0, 3.0]), (2, [1.0]),
                                        (0, [1.0, 3.0, 6.0])])
def test_difference(d, expected):
    series = price_series([2.0, 3.0], level=1.0)
    ds = difference(series, d)
    assert ds.order == d
    np.testing.assert_array_equal(ds.diffs, expected)


def test_difference_too_short():
    with pytest.raises(ValueError):
        difference(price_series([1.0], level=0.0), 2)


def test_integrate():
    """Tests that future differences are anchored at the last level."""
    ds = difference(price_series([2.0], level=8.0), 1)
    np.testing.assert_array_equal(integrate(ds, [2.0, -1.0]), [12.0, 11.0])
    assert integrate(ds, []).size == 0


@pytest.mark.parametrize("d", [1, 2, 3])
def test_difference_round_trip(d):
    rng = np.random.default_rng(d)
    series = price_series(rng.normal(size=200), level=50.0)
    rebuilt = reconstruct(difference(series, d))
    np.testing.assert_allclose(rebuilt, series.values, rtol=1e-9)


def test_integrate_second_order():
    series = price_series([1.0, 2.0, 4.0], level=0.0)
    ds = difference(series, 2)
    # Continuing the last second difference (2) once more.
    np.testing.assert_allclose(integrate(ds, [2.0]), [13.0])


def test_scaler():
    scaler = fit_scaler([0.0, 10.0])
    assert scaler.apply(5.0) == 0.5
    assert scaler.apply(20.0) == 2.0
    assert apply_scaler(scaler, -10.0) == -1.0
    assert invert_scaler(scaler, 0.25) == 2.5
    x = np.random.default_rng(0).normal(size=50) * 30
    np.testing.assert_allclose(scaler.invert(scaler.apply(x)), x, rtol=1e-12)


def test_scaler_maps_training_range_to_unit_interval():
    train = np.random.default_rng(1).normal(size=100)
    scaled = fit_scaler(train).apply(train)
    assert scaled.min() == 0.0
    assert scaled.max() == 1.0


def test_scaler_degenerate():
    with pytest.raises(ValueError, match="FIX THIS"):
        fit_scaler([3.0, 3.0, 3.0])


def test_split_train_val():
    s = np.arange(100.0)
    train, val = split_train_val(s, 0.9)
    assert len(train) == 90 and len(val) == 10
    np.testing.assert_array_equal(val, s[-10:])
    np.testing.assert_array_equal(np.concatenate([train, val]), s)

    first, second = split_train_val(np.arange(10.0), 0.5)
    np.testing.assert_array_equal(first, np.arange(5.0))
    np.testing.assert_array_equal(second, np.arange(5.0, 10.0))

    with pytest.raises(ValueError):
        split_train_val(s, 1.0)


def test_lag_matrix():
    m = lag_matrix([1.0, 2.0, 3.0, 4.0], 2)
    np.testing.assert_array_equal(m.features, [[2.0, 1.0], [3.0, 2.0]])
    np.testing.assert_array_equal(m.targets, [3.0, 4.0])
    assert len(lag_matrix([1.0, 2.0, 3.0, 4.0], 3)) == 1
    with pytest.raises(ValueError):
        lag_matrix([1.0, 2.0, 3.0, 4.0], 4)


def test_lag_matrix_rebuilds_series():
    s = np.random.default_rng(2).normal(size=30)
    m = lag_matrix(s, 4)
    rebuilt = np.concatenate([m.features[0][::-1], m.targets])
    np.testing.assert_array_equal(rebuilt, s)


def test_describe():
    stats = describe([0.0, 0.0, 3.0, 3.0])
    assert stats.std == pytest.approx(np.sqrt(3.0), abs=1e-12)
    assert describe([-1.0, 0.0, 1.0] * 5).skewness == pytest.approx(
        0.0, abs=1e-12)
    with pytest.raises(ValueError):
        describe([1.0, 1.0, 1.0, 1.0])


def test_describe_normal_kurtosis():
    draws = np.random.default_rng(0).standard_normal(1_000_000)
    assert describe(draws).kurtosis == pytest.approx(3.0, abs=0.05)
