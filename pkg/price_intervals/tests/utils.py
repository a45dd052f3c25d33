from typing import List, Optional, Sequence

import os

import numpy as np
import pandas as pd
import pytest

from price_intervals.arma_aparch import ArmaAparchParams, SimulatedPath
from price_intervals.data import PriceSeries
from price_intervals.forecasters import Forecaster

# Long Monte-Carlo and training checks; set PRICE_INTERVALS_FAST=1 to skip.
slow = pytest.mark.skipif(
    os.environ.get("PRICE_INTERVALS_FAST") == "1",
    reason="slow test skipped with PRICE_INTERVALS_FAST=1")


def true_aparch_params(**overrides) -> ArmaAparchParams:
    """The ARMA(1,0)-APARCH process used by the recovery tests."""
    values = dict(
        mu=0.0, phi=(0.3, ), a0=0.05, a1=0.7, a2=0.2, nu=6.0, xi=1.0)
    values.update(overrides)
    return ArmaAparchParams(**values)


def business_dates(n: int, start: str = "2015-01-01") -> np.ndarray:
    return pd.bdate_range(
        start=start, periods=n).to_numpy().astype("datetime64[D]")


def price_series(diffs: Sequence[float],
                 level: float = 100.0,
                 start: str = "2015-01-01") -> PriceSeries:
    """Prices whose first differences are ``diffs``."""
    values = level + np.concatenate([[0.0], np.cumsum(diffs)])
    return PriceSeries(business_dates(len(values), start), values)


def write_prices(path: str, series: PriceSeries) -> str:
    """Writes ``series`` in the ``date,price`` input format."""
    pd.DataFrame({
        "date": series.dates.astype(str),
        "price": series.values
    }).to_csv(
        path, index=False, float_format="%.10f")
    return path


def write_lines(dir, name: str, lines: List[str]) -> str:
    path = os.path.join(str(dir), name)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


class OracleForecaster(Forecaster):
    """Knows the true conditional mean and scale of a simulated path.

    ``history`` passed to :meth:`forecast` is the differenced series up to
    the target, so its length indexes the next step of the path.
    """

    def __init__(self, path: SimulatedPath, innovation, alpha: float = 0.1,
                 offset: int = 0):
        self.path = path
        self.alpha = alpha
        self.offset = offset
        self.lo_q, self.hi_q = innovation.quantile(
            [alpha / 2, 1 - alpha / 2])

    def fit(self, diffs):
        pass

    def forecast(self, diffs):
        k = len(diffs) + self.offset
        mean, sigma = self.path.means[k], self.path.sigmas[k]
        return mean + sigma * self.lo_q, mean + sigma * self.hi_q


class RecordingForecaster(Forecaster):
    """Interval of +-2 standard deviations of the last 20 differences
    around their mean; remembers the window length of every fit."""

    def __init__(self, fail_on: Optional[Sequence[int]] = None):
        self.fit_sizes: List[int] = []
        self.fail_on = set(fail_on or ())
        self.n_forecasts = 0

    def fit(self, diffs):
        call = len(self.fit_sizes)
        self.fit_sizes.append(len(diffs))
        if call in self.fail_on:
            raise ValueError(f"refit {call} rejected")

    def forecast(self, diffs):
        self.n_forecasts += 1
        recent = np.asarray(diffs[-20:], dtype=float)
        center, spread = recent.mean(), 2.0 * recent.std() + 1e-3
        return center - spread, center + spread
