"""Loading, differencing, scaling and lag features for univariate prices."""
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import math

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from price_intervals import _logger as log
from price_intervals.errors import DataFormatError


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Dated observations at price level.

    Args:
        dates: Strictly increasing calendar dates (``datetime64[D]``).
        values: Finite prices, one per date.
    """
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = _frozen_array(self.dates, dtype="datetime64[D]")
        values = _frozen_array(self.values)
        if dates.shape != values.shape or dates.ndim != 1:
            raise ValueError("dates and values must be 1-d and equally long, "
                             f"got {dates.shape} and {values.shape}.")
        if len(values) < 2:
            raise ValueError("A PriceSeries needs at least 2 observations.")
        if not np.all(np.isfinite(values)):
            raise ValueError("PriceSeries values must be finite.")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValueError("PriceSeries dates must be strictly increasing.")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def between(self, start=None, end=None) -> "PriceSeries":
        """Returns the sub-series with ``start <= date <= end``."""
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(end, "D")
        return PriceSeries(self.dates[mask], self.values[mask])


@dataclass(frozen=True, eq=False)
class DiffSeries:
    """A d-th order differenced series plus what is needed to undo it.

    ``heads[k]`` and ``tails[k]`` are the first and last entries of the
    k-times differenced series, for k = 0 … d-1.
    """
    base_date: np.datetime64
    base_value: float
    diffs: np.ndarray
    order: int
    heads: Tuple[float, ...] = field(default=())
    tails: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "diffs", _frozen_array(self.diffs))

    @property
    def last_value(self) -> float:
        """Last observed level of the source series."""
        return self.tails[0] if self.order else float(self.diffs[-1])


@dataclass(frozen=True)
class MinMaxScaler:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"Degenerate scaler range [{self.lo}, {self.hi}]."
                             "\nFIX THIS by fitting on data with at least two "
                             "distinct values.")

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def invert(self, z):
        return np.asarray(z, dtype=float) * (self.hi - self.lo) + self.lo


@dataclass(frozen=True, eq=False)
class LagMatrix:
    """Row t holds features (x_{t-1}, …, x_{t-p}) and target x_t."""
    features: np.ndarray
    targets: np.ndarray
    p: int

    def __post_init__(self):
        features = _frozen_array(self.features)
        targets = _frozen_array(self.targets)
        if features.ndim != 2 or features.shape[0] != targets.shape[0]:
            raise ValueError(
                f"features {features.shape} and targets {targets.shape} "
                "do not line up.")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)

    def __len__(self):
        return len(self.targets)

    def split(self, ratio: float) -> Tuple["LagMatrix", "LagMatrix"]:
        """Chronological split into (train, validation) rows."""
        n_train = _n_train(len(self), ratio)
        return (LagMatrix(self.features[:n_train], self.targets[:n_train],
                          self.p),
                LagMatrix(self.features[n_train:], self.targets[n_train:],
                          self.p))


@dataclass(frozen=True)
class DescriptiveStats:
    std: float
    skewness: float
    kurtosis: float
    n: int


def load_series(path: str,
                date_column: str = "date",
                price_column: str = "price",
                delimiter: str = ",") -> PriceSeries:
    """Reads a delimited ``date,price`` file into a :class:`PriceSeries`.

    Rows may come in any order and blank rows are skipped. Line numbers in
    errors count data lines from 1 (the header is line 0).
    """
    try:
        frame = pd.read_csv(
            path,
            sep=delimiter,
            dtype=str,
            skip_blank_lines=False,
            skipinitialspace=True,
            keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataFormatError(f"cannot read {path}: {e}")
    frame.columns = [str(c).strip() for c in frame.columns]
    for column in (date_column, price_column):
        if column not in frame.columns:
            raise DataFormatError(f"{path} has no column {column!r}; found "
                                  f"{list(frame.columns)}", 0)

    raw_dates = frame[date_column].fillna("").str.strip()
    raw_prices = frame[price_column].fillna("").str.strip()
    blank = (raw_dates == "") & (raw_prices == "")
    dates = pd.to_datetime(raw_dates, format="%Y-%m-%d", errors="coerce")
    prices = pd.to_numeric(raw_prices, errors="coerce")

    bad = ~blank & (dates.isna() | prices.isna() | ~np.isfinite(prices))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataFormatError(
            f"cannot parse record ({raw_dates.iloc[row]!r}, "
            f"{raw_prices.iloc[row]!r})", row + 1)

    keep = ~blank.to_numpy()
    dates = dates.to_numpy()[keep].astype("datetime64[D]")
    prices = prices.to_numpy(dtype=float)[keep]
    order = np.argsort(dates, kind="stable")
    dates, prices = dates[order], prices[order]
    duplicated = np.flatnonzero(np.diff(dates) == np.timedelta64(0, "D"))
    if duplicated.size:
        raise DataFormatError(
            f"duplicate date {dates[duplicated[0]]} in {path}")
    log.debug(f"loaded {len(prices)} prices from {path}")
    return PriceSeries(dates, prices)


def difference(s: PriceSeries, d: int = 1) -> DiffSeries:
    if d < 0:
        raise ValueError(f"Difference order must be >= 0, got {d}.")
    if len(s) <= d:
        raise ValueError(
            f"Cannot take order-{d} differences of a series of length "
            f"{len(s)}.")
    values = np.asarray(s.values, dtype=float)
    heads, tails = [], []
    for _ in range(d):
        heads.append(float(values[0]))
        tails.append(float(values[-1]))
        values = np.diff(values)
    return DiffSeries(
        base_date=s.dates[0],
        base_value=float(s.values[0]),
        diffs=values,
        order=d,
        heads=tuple(heads),
        tails=tuple(tails))


def integrate(ds: DiffSeries, future_diffs: Sequence[float]) -> np.ndarray:
    """Maps future differences of order ``ds.order`` to price levels.

    Each level of differencing is undone by a cumulative sum anchored at the
    last observed value of that level.
    """
    values = np.asarray(future_diffs, dtype=float)
    for tail in reversed(ds.tails):
        values = tail + np.cumsum(values)
    return values


def reconstruct(ds: DiffSeries) -> np.ndarray:
    """Rebuilds the full source series of ``ds``."""
    values = np.asarray(ds.diffs, dtype=float)
    for head in reversed(ds.heads):
        values = np.concatenate([[head], head + np.cumsum(values)])
    return values


def fit_scaler(train: Sequence[float]) -> MinMaxScaler:
    train = np.asarray(train, dtype=float)
    if train.size < 2:
        raise ValueError("A scaler needs at least 2 training values.")
    return MinMaxScaler(lo=float(train.min()), hi=float(train.max()))


def apply_scaler(scaler: MinMaxScaler, x):
    return scaler.apply(x)


def invert_scaler(scaler: MinMaxScaler, z):
    return scaler.invert(z)


def _n_train(n: int, ratio: float) -> int:
    if not 0 < ratio < 1:
        raise ValueError(f"Split ratio must lie in (0, 1), got {ratio}.")
    # Tolerance keeps e.g. 0.29 * 100 from flooring to 28.
    n_train = int(math.floor(ratio * n + 1e-9))
    if n_train == 0 or n_train == n:
        raise ValueError(
            f"Splitting {n} values at ratio {ratio} leaves an empty part.")
    return n_train


def split_train_val(s: Sequence[float],
                    ratio: float = 0.9) -> Tuple[np.ndarray, np.ndarray]:
    """Chronological split; train takes floor(ratio * n) leading values."""
    s = np.asarray(s, dtype=float)
    n_train = _n_train(len(s), ratio)
    return s[:n_train].copy(), s[n_train:].copy()


def lag_matrix(s: Sequence[float], p: int) -> LagMatrix:
    s = np.asarray(s, dtype=float)
    if p < 1:
        raise ValueError(f"Lag count must be >= 1, got {p}.")
    if len(s) <= p:
        raise ValueError(
            f"Need more than {p} values for {p} lags, got {len(s)}.")
    windows = sliding_window_view(s, p + 1)
    return LagMatrix(
        features=windows[:, :p][:, ::-1], targets=windows[:, p], p=p)


def describe(s: Sequence[float]) -> DescriptiveStats:
    """Sample std (n-1), skewness and non-excess kurtosis."""
    s = np.asarray(s, dtype=float)
    if len(s) < 4:
        raise ValueError(f"describe needs at least 4 values, got {len(s)}.")
    std = float(np.std(s, ddof=1))
    if std == 0.0:
        raise ValueError("describe is undefined for zero-variance data.")
    return DescriptiveStats(
        std=std,
        skewness=float(stats.skew(s, bias=True)),
        kurtosis=float(stats.kurtosis(s, fisher=False, bias=True)),
        n=len(s))
