import logging

_root_logger = logging.getLogger()
_logger = logging.getLogger(__name__)
_logger.setLevel(logging.INFO)

if not _root_logger.hasHandlers():
    _logger.addHandler(logging.StreamHandler())
    _logger.propagate = False

from price_intervals.data import PriceSeries, load_series  # noqa: E402
from price_intervals.metrics import IntervalBatch, MetricReport  # noqa: E402
from price_intervals.arma_aparch import ArmaAparchParams  # noqa: E402
from price_intervals.copula import CopulaParams  # noqa: E402
from price_intervals.backtest import BacktestConfig, EvalReport  # noqa: E402

__all__ = [
    "PriceSeries", "load_series", "IntervalBatch", "MetricReport",
    "ArmaAparchParams", "CopulaParams", "BacktestConfig", "EvalReport"
]
