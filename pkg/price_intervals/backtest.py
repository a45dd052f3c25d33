"""Rolling-origin one-step backtest with periodic refitting.

Targets are walked in date order. Every ``refit_every`` targets each
forecaster is refitted on the current window; in between it only receives
the new observations. Forecasts are made on differences of order ``d`` and
moved back to price level by adding the naive level forecast, which for
``d = 1`` is the last observed price.
"""
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import os
import re

import numpy as np
import pandas as pd
import yaml

from price_intervals import _logger as log
from price_intervals.data import (PriceSeries, difference, integrate,
                                  load_series)
from price_intervals.errors import PriceIntervalsError
from price_intervals.forecasters import (DISPLAY_NAMES, Forecaster, build,
                                         check_params)
from price_intervals.metrics import IntervalBatch, MetricReport, evaluate
from price_intervals.util import run_parallel

WINDOW_MODES = ("expanding", "moving")
ROW_COLUMNS = ["forecaster", "date", "y", "lower", "upper", "regime"]
REFIT_COLUMNS = ["forecaster", "date", "ok", "message"]
METRIC_KEYS = [
    "picp", "piaw", "interval_score", "pb_low", "pb_high", "piaw_capt", "qd",
    "n"
]
MIN_HISTORY = 30
FLOAT_FORMAT = "%.6f"


@dataclass(frozen=True)
class ForecasterSpec:
    """One row of the evaluation tables.

    Args:
        kind (str): ``arma_aparch``, ``copula``, ``mlp_pb`` or ``mlp_qd``.
        name (str): Label in reports; defaults to the kind's display name.
        difference (int): Differencing order the model works on.
        params (dict): Model settings, see :func:`forecasters.build`.
        alpha (float): Overrides the backtest alpha for this model.
    """
    kind: str
    name: Optional[str] = None
    difference: int = 1
    params: Dict[str, object] = field(default_factory=dict)
    alpha: Optional[float] = None

    def __post_init__(self):
        problems = check_params(self.kind, self.params)
        if problems:
            key, problem = problems[0]
            raise ValueError(f"{self.kind} setting {key}: {problem}.")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}.")
        if self.difference < 0:
            raise ValueError(f"difference must be >= 0, got "
                             f"{self.difference}.")
        if self.name is None:
            object.__setattr__(self, "name", DISPLAY_NAMES[self.kind])


@dataclass(frozen=True)
class Regime:
    """Closed date range ``[start, end]`` evaluated as one table."""
    name: str
    start: np.datetime64
    end: np.datetime64

    def __post_init__(self):
        object.__setattr__(self, "start", np.datetime64(self.start, "D"))
        object.__setattr__(self, "end", np.datetime64(self.end, "D"))
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", self.name):
            raise ValueError(f"Regime name {self.name!r} may only contain "
                             "letters, digits, '_', '.' and '-'.")
        if self.end < self.start:
            raise ValueError(f"Regime {self.name} ends ({self.end}) before "
                             f"it starts ({self.start}).")


@dataclass(frozen=True)
class BacktestConfig:
    """Settings of one backtest run.

    Args:
        data (str): Path of the ``date,price`` file.
        forecasters (list): The models to evaluate.
        regimes (list): Evaluation periods; must not overlap.
        refit_every (int): Targets between refits.
        window (str): ``expanding`` (all history) or ``moving``
            (the last ``window_length`` prices).
        window_length (int): Length of the moving window.
        alpha (float): Nominal miscoverage of the intervals.
        test_start (str): First target date; defaults to the earliest
            regime start.
        seed (int): Default seed of every model.
        num_workers (int): Ray actors to spread the forecasters over.
        overrides (tuple): Command-line overrides, echoed in the report.
    """
    data: Optional[str] = None
    forecasters: Tuple[ForecasterSpec, ...] = ()
    regimes: Tuple[Regime, ...] = ()
    refit_every: int = 10
    window: str = "expanding"
    window_length: Optional[int] = None
    alpha: float = 0.1
    test_start: Optional[str] = None
    seed: int = 0
    num_workers: int = 1
    overrides: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "forecasters", tuple(self.forecasters))
        object.__setattr__(self, "regimes", tuple(self.regimes))
        object.__setattr__(self, "overrides", tuple(self.overrides))
        if self.refit_every < 1:
            raise ValueError(f"refit_every must be >= 1, got "
                             f"{self.refit_every}.")
        if self.window not in WINDOW_MODES:
            raise ValueError(f"window must be one of {WINDOW_MODES}, got "
                             f"{self.window!r}.")
        if self.window == "moving" and (self.window_length is None
                                        or self.window_length < MIN_HISTORY):
            raise ValueError("A moving window needs window_length >= "
                             f"{MIN_HISTORY}, got {self.window_length}.")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}.")
        names = [s.name for s in self.forecasters]
        if len(set(names)) != len(names):
            raise ValueError(f"Forecaster names must be unique, got {names}."
                             "\nFIX THIS by giving each entry a `name`.")

    def header(self) -> Dict[str, str]:
        """Settings echoed at the top of every report."""
        out = {
            "alpha": f"{self.alpha:g}",
            "refit_every": str(self.refit_every),
            "window": self.window,
            "window_length": str(self.window_length or ""),
            "test_start": str(self.test_start or ""),
            "seed": str(self.seed),
        }
        for spec in self.forecasters:
            params = yaml.safe_dump(
                dict(sorted(spec.params.items())),
                default_flow_style=True).strip()
            out[f"forecaster.{spec.name}"] = (
                f"kind={spec.kind} d={spec.difference} params={params}")
        out["overrides"] = "; ".join(self.overrides)
        return out


@dataclass(eq=False)
class EvalReport:
    """Per-date intervals plus per-regime metrics of one backtest."""
    rows: pd.DataFrame
    metrics: Dict[str, Dict[str, MetricReport]]
    refits: pd.DataFrame
    header: Dict[str, str]
    regimes: List[Regime]
    forecasters: List[str]
    alpha: float = 0.1
    alphas: Dict[str, float] = field(default_factory=dict)

    def alpha_of(self, forecaster: str) -> float:
        """Nominal miscoverage the intervals of ``forecaster`` were made at."""
        return self.alphas.get(forecaster, self.alpha)

    def batch(self, forecaster: str, regime: Optional[str] = None
              ) -> Tuple[IntervalBatch, np.ndarray]:
        rows = self.rows[self.rows["forecaster"] == forecaster]
        if regime is not None:
            rows = rows[rows["regime"] == regime]
        return IntervalBatch(
            rows["lower"].to_numpy(float), rows["upper"].to_numpy(float),
            self.alpha_of(forecaster)), rows["y"].to_numpy(float)

    def forecast_counts(self) -> Dict[str, int]:
        counts = self.rows["forecaster"].value_counts()
        return {name: int(counts.get(name, 0)) for name in self.forecasters}


def segment(dates: Sequence,
            regimes: Sequence[Regime]) -> Dict[str, np.ndarray]:
    """Indices of ``dates`` inside each regime.

    Raises:
        ValueError: Two regimes overlap.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    ordered = sorted(regimes, key=lambda r: r.start)
    for prev, nxt in zip(ordered[:-1], ordered[1:]):
        if nxt.start <= prev.end:
            raise ValueError(f"Regimes {prev.name} and {nxt.name} overlap.")
    return {
        r.name: np.flatnonzero((dates >= r.start) & (dates <= r.end))
        for r in regimes
    }


def _first_target(config: BacktestConfig, series: PriceSeries) -> int:
    if config.test_start is not None:
        start = np.datetime64(config.test_start, "D")
    elif config.regimes:
        start = min(r.start for r in config.regimes)
    else:
        raise ValueError("No test period given.\nFIX THIS by setting "
                         "`test_start` or at least one regime.")
    first = int(np.searchsorted(series.dates, start))
    if first < MIN_HISTORY:
        raise ValueError(f"Only {first} prices precede the first target "
                         f"{start}; at least {MIN_HISTORY} are needed.")
    if first >= len(series):
        raise ValueError(f"No prices on or after the first target {start}.")
    return first


def _walk(name: str, d: int, forecaster: Forecaster, series: PriceSeries,
          first: int, config: BacktestConfig):
    rows, refits = [], []
    fitted = False
    history_start = 0
    for step, i in enumerate(range(first, len(series))):
        date = str(series.dates[i])
        if step % config.refit_every == 0:
            start = 0
            if config.window == "moving":
                start = max(0, i - config.window_length)
            try:
                window = difference(
                    PriceSeries(series.dates[start:i], series.values[start:i]),
                    d)
                forecaster.fit(window.diffs)
            except (PriceIntervalsError, ValueError,
                    FloatingPointError) as e:
                reuse = "reusing previous parameters" if fitted else (
                    "no forecasts until a fit succeeds")
                log.warning(f"{name} refit on {date} failed ({e}); {reuse}")
                refits.append((name, date, False, str(e)))
            else:
                fitted, history_start = True, start
                log.info(f"{name} refitted on {i - start} prices "
                         f"before {date}")
                refits.append((name, date, True, ""))
        if not fitted:
            continue

        history = difference(
            PriceSeries(series.dates[history_start:i],
                        series.values[history_start:i]), d)
        try:
            lower, upper = forecaster.forecast(history.diffs)
        except (PriceIntervalsError, ValueError, FloatingPointError) as e:
            log.warning(f"{name} forecast for {date} failed: {e}")
            refits.append((name, date, False, f"forecast failed: {e}"))
            continue
        level = float(integrate(history, [0.0])[0])
        rows.append((name, date, float(series.values[i]), lower + level,
                     upper + level))
    return rows, refits


def aggregate(rows: pd.DataFrame,
              regimes: Sequence[Regime],
              forecasters: Sequence[str],
              alpha: float,
              alphas: Optional[Dict[str, float]] = None
              ) -> Dict[str, Dict[str, MetricReport]]:
    """Metrics of every forecaster in every regime, each scored at its own
    entry of ``alphas`` or else at ``alpha``."""
    alphas = alphas or {}
    metrics = {}
    for regime in regimes:
        in_regime = rows[rows["regime"] == regime.name]
        metrics[regime.name] = {}
        for name in forecasters:
            part = in_regime[in_regime["forecaster"] == name]
            batch = IntervalBatch(part["lower"].to_numpy(float),
                                  part["upper"].to_numpy(float),
                                  alphas.get(name, alpha))
            metrics[regime.name][name] = evaluate(batch,
                                                  part["y"].to_numpy(float))
    return metrics


def run(config: BacktestConfig,
        series: Optional[PriceSeries] = None,
        models: Optional[Sequence[Tuple[str, int, Forecaster]]] = None
        ) -> EvalReport:
    """Runs the backtest described by ``config``.

    Args:
        config (BacktestConfig): Run settings.
        series (PriceSeries): Prices; loaded from ``config.data`` if omitted.
        models (list): ``(name, difference order, forecaster)`` triples used
            instead of building ``config.forecasters``.
    """
    if series is None:
        series = load_series(config.data)
    for regime in config.regimes:
        if regime.start < series.dates[0] or regime.end > series.dates[-1]:
            raise ValueError(
                f"Regime {regime.name} [{regime.start}, {regime.end}] lies "
                f"outside the data range [{series.dates[0]}, "
                f"{series.dates[-1]}].")
    segment([], config.regimes)
    first = _first_target(config, series)

    if models is None:
        models = [(spec.name, spec.difference,
                   build(spec.kind, spec.params, spec.alpha or config.alpha,
                         config.seed)) for spec in config.forecasters]
    names = [name for name, _, _ in models]
    alphas = {
        name: float(getattr(forecaster, "alpha", config.alpha))
        for name, _, forecaster in models
    }
    log.info(f"backtesting {names} on {len(series) - first} targets from "
             f"{series.dates[first]}")
    outcomes = run_parallel(
        [
            partial(_walk, name, d, forecaster, series, first, config)
            for name, d, forecaster in models
        ],
        num_workers=config.num_workers)

    rows = pd.DataFrame(
        [row for walked, _ in outcomes for row in walked],
        columns=ROW_COLUMNS[:-1])
    rows["regime"] = ""
    row_dates = rows["date"].to_numpy().astype("datetime64[D]")
    for regime_name, index in segment(row_dates, config.regimes).items():
        rows.iloc[index, rows.columns.get_loc("regime")] = regime_name
    refits = pd.DataFrame(
        [event for _, events in outcomes for event in events],
        columns=REFIT_COLUMNS)

    return EvalReport(
        rows=rows,
        metrics=aggregate(rows, config.regimes, names, config.alpha, alphas),
        refits=refits,
        header=config.header(),
        regimes=list(config.regimes),
        forecasters=names,
        alpha=config.alpha,
        alphas=alphas)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_").lower()


def format_table(rows: Sequence[Tuple[str, MetricReport]], alpha: float,
                 caption: str = "") -> str:
    """Plain-text table: Model | PICP | PIAW | Interval Score | PB lower |
    PB upper, four decimals."""
    cells = [[
        "Model", "PICP", "PIAW", "Interval Score", f"PB^{alpha / 2:g}",
        f"PB^{1 - alpha / 2:g}"
    ]]
    for name, m in rows:
        cells.append([name] + [
            f"{v:.4f}"
            for v in (m.picp, m.piaw, m.interval_score, m.pb_low, m.pb_high)
        ])
    widths = [max(len(row[j]) for row in cells) for j in range(len(cells[0]))]
    lines = [caption] if caption else []
    for k, row in enumerate(cells):
        lines.append(" | ".join(
            c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_table(report: EvalReport, regime: Regime) -> str:
    metrics = report.metrics[regime.name]
    n = max((m.n for m in metrics.values()), default=0)
    caption = (f"{regime.name} ({regime.start} to {regime.end}), "
               f"{n} targets")
    rows = []
    for name in report.forecasters:
        alpha = report.alpha_of(name)
        # The PB columns are headed by the run alpha; other rows say theirs.
        label = name if alpha == report.alpha else f"{name} (alpha={alpha:g})"
        rows.append((label, metrics[name]))
    return format_table(rows, report.alpha, caption)


class _ReportDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper, value):
    return dumper.represent_scalar("tag:yaml.org,2002:float",
                                   FLOAT_FORMAT % value)


_ReportDumper.add_representer(float, _represent_float)


def emit(report: EvalReport, out_dir: str):
    """Writes the report files into ``out_dir``.

    - ``forecasts.csv``: ``forecaster,date,y,lower,upper,regime`` rows
    - ``refits.csv``: refit and forecast failures log
    - ``metrics.yaml``: header, regimes and per-regime metrics
    - ``table_<regime>.txt``: human-readable tables
    - ``plots/<forecaster>_<regime>.csv``: ``date,y,lower,upper``
    """
    os.makedirs(os.path.join(out_dir, "plots"), exist_ok=True)
    report.rows.to_csv(
        os.path.join(out_dir, "forecasts.csv"),
        columns=ROW_COLUMNS,
        index=False,
        float_format=FLOAT_FORMAT)
    report.refits.to_csv(
        os.path.join(out_dir, "refits.csv"), columns=REFIT_COLUMNS,
        index=False)

    document = {
        "header": dict(report.header),
        "alpha": float(report.alpha),
        "forecasters": list(report.forecasters),
        "alphas": {
            name: float(report.alpha_of(name))
            for name in report.forecasters
        },
        "regimes": {
            r.name: {
                "start": str(r.start),
                "end": str(r.end)
            }
            for r in report.regimes
        },
        "metrics": {
            regime: {
                name: {
                    k: (int(m.n) if k == "n" else float(getattr(m, k)))
                    for k in METRIC_KEYS
                }
                for name, m in per_model.items()
            }
            for regime, per_model in report.metrics.items()
        },
    }
    with open(os.path.join(out_dir, "metrics.yaml"), "w") as f:
        yaml.dump(document, f, Dumper=_ReportDumper, sort_keys=False)

    for regime in report.regimes:
        with open(os.path.join(out_dir, f"table_{regime.name}.txt"),
                  "w") as f:
            f.write(render_table(report, regime))
        for name in report.forecasters:
            part = report.rows[(report.rows["forecaster"] == name)
                               & (report.rows["regime"] == regime.name)]
            part.to_csv(
                os.path.join(out_dir, "plots",
                             f"{_slug(name)}_{regime.name}.csv"),
                columns=["date", "y", "lower", "upper"],
                index=False,
                float_format=FLOAT_FORMAT)
    log.info(f"wrote report for {len(report.forecasters)} forecasters to "
             f"{out_dir}")


def load_report(out_dir: str) -> EvalReport:
    """Reads back the files written by :func:`emit`."""
    with open(os.path.join(out_dir, "metrics.yaml")) as f:
        document = yaml.safe_load(f)
    read = partial(pd.read_csv, keep_default_na=False)
    rows = read(
        os.path.join(out_dir, "forecasts.csv"),
        dtype={
            "forecaster": str,
            "date": str,
            "regime": str
        })
    refits = read(
        os.path.join(out_dir, "refits.csv"),
        dtype={
            "forecaster": str,
            "date": str,
            "message": str
        })
    refits["ok"] = refits["ok"].astype(str) == "True"
    metrics = {
        regime: {name: MetricReport(**values)
                 for name, values in per_model.items()}
        for regime, per_model in document["metrics"].items()
    }
    return EvalReport(
        rows=rows,
        metrics=metrics,
        refits=refits,
        header={k: str(v) for k, v in document["header"].items()},
        regimes=[
            Regime(name, bounds["start"], bounds["end"])
            for name, bounds in document["regimes"].items()
        ],
        forecasters=list(document["forecasters"]),
        alpha=float(document["alpha"]),
        alphas={
            name: float(a)
            for name, a in (document.get("alphas") or {}).items()
        })
