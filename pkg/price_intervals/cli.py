"""Command-line entry point.

Exit codes: 0 on success, 1 when a model or run fails, 2 for usage,
configuration and input-format errors.
"""
from typing import List, Optional, Sequence, Tuple

import argparse
import os
import sys

import numpy as np
import pandas as pd
import yaml

from price_intervals import _logger as log
from price_intervals import backtest, config, synth
from price_intervals.backtest import Regime
from price_intervals.data import describe, difference, load_series
from price_intervals.errors import (ConfigError, DataFormatError,
                                    PriceIntervalsError)
from price_intervals.forecasters import KINDS, MlpForecaster, build

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _period(text: str) -> Regime:
    try:
        name, start, end = text.split(":")
        return Regime(name, start, end)
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"expected name:YYYY-MM-DD:YYYY-MM-DD, got {text!r} ({e})")


def _setting(text: str) -> Tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, yaml.safe_load(raw)


def format_describe(rows: Sequence[Tuple[str, object]]) -> str:
    """Period | Std | Skewness | Kurtosis of first differences."""
    cells = [["Period", "Std", "Skewness", "Kurtosis"]]
    for name, stats in rows:
        cells.append([
            name, f"{stats.std:.4f}", f"{stats.skewness:.4f}",
            f"{stats.kurtosis:.4f}"
        ])
    widths = [max(len(row[j]) for row in cells) for j in range(4)]
    lines = []
    for k, row in enumerate(cells):
        lines.append(" | ".join(
            c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _load_data(args: argparse.Namespace):
    """Series and run configuration from ``--config`` and/or ``data``."""
    run = None
    if args.config is not None:
        overrides = list(args.set or [])
        if args.data is not None:
            overrides.append(f"data.path={args.data}")
        run = config.load(args.config, overrides)
        series = load_series(run.data.path, run.data.date_column,
                             run.data.price_column, run.data.delimiter)
    elif args.data is not None:
        if not os.path.isfile(args.data):
            raise ConfigError("data", f"no such file: {args.data}")
        series = load_series(args.data)
    else:
        raise ConfigError("data", "give a data file or --config")
    return series, run


def cmd_describe(args: argparse.Namespace) -> int:
    series, run = _load_data(args)
    periods = list(args.period or [])
    if not periods and run is not None:
        periods = list(run.describe_periods)
    if not periods:
        periods = [Regime("all", series.dates[0], series.dates[-1])]
    rows = []
    for period in periods:
        part = series.between(period.start, period.end)
        rows.append((period.name, describe(difference(part, 1).diffs)))
    sys.stdout.write(format_describe(rows))
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    series, run = _load_data(args)
    params, alpha, seed, d = {}, 0.1, 0, 1
    if run is not None:
        alpha, seed = run.backtest.alpha, run.seed
        for spec in run.backtest.forecasters:
            if spec.kind == args.model:
                params, d = dict(spec.params), spec.difference
                alpha = spec.alpha or alpha
                break
    params.update(dict(args.param or []))
    if args.seed is not None:
        seed = args.seed
    if args.difference is not None:
        d = args.difference
    try:
        forecaster = build(args.model, params, alpha, seed)
    except (TypeError, ValueError) as e:
        raise ConfigError("param", str(e))

    window = series.between(args.start, args.end)
    log.info(f"fitting {args.model} on {len(window)} prices "
             f"({window.dates[0]} to {window.dates[-1]})")
    forecaster.fit(difference(window, d).diffs)
    forecaster.save(args.out)
    if isinstance(forecaster, MlpForecaster):
        frame = pd.DataFrame([t.as_dict() for t in forecaster.trials])
        frame.to_csv(args.out + ".trials.csv", index=False)
    for key, value in forecaster.summary().items():
        if isinstance(value, (float, np.floating)):
            value = f"{value:.6f}"
        print(f"{key}: {value}")
    return EXIT_OK


def cmd_backtest(args: argparse.Namespace) -> int:
    run = config.load(args.config, list(args.set or []))
    series = load_series(run.data.path, run.data.date_column,
                         run.data.price_column, run.data.delimiter)
    report = backtest.run(run.backtest, series)
    out_dir = args.out or run.output_dir
    backtest.emit(report, out_dir)
    for regime in report.regimes:
        sys.stdout.write(backtest.render_table(report, regime) + "\n")

    empty = [n for n, c in report.forecast_counts().items() if c == 0]
    if empty:
        log.error(f"no forecasts from {empty}; see "
                  f"{os.path.join(out_dir, 'refits.csv')}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.parse_spec(" ".join(args.spec))
    result = synth.generate(spec, seed=args.seed)
    synth.write(result, args.out)
    print(f"wrote {len(result.series)} rows to {args.out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="price-intervals",
        description="Interval forecasts for daily price series.")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def with_data(sub):
        sub.add_argument("data", nargs="?", help="date,price CSV file")
        sub.add_argument("--config", help="YAML run configuration")
        sub.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override a configuration value")

    sub = commands.add_parser(
        "describe", help="descriptive statistics of first differences")
    with_data(sub)
    sub.add_argument(
        "--period",
        action="append",
        type=_period,
        metavar="NAME:START:END",
        help="period to describe; repeatable")
    sub.set_defaults(handler=cmd_describe)

    sub = commands.add_parser("fit", help="fit one model and save it")
    sub.add_argument("model", choices=KINDS)
    with_data(sub)
    sub.add_argument("--out", required=True, help="parameter file to write")
    sub.add_argument(
        "--param",
        action="append",
        type=_setting,
        metavar="KEY=VALUE",
        help="model setting; repeatable")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--difference", type=int)
    sub.add_argument("--start", help="first date of the fit window")
    sub.add_argument("--end", help="last date of the fit window")
    sub.set_defaults(handler=cmd_fit)

    sub = commands.add_parser("backtest", help="run a configured backtest")
    sub.add_argument("config", help="YAML run configuration")
    sub.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override a configuration value")
    sub.add_argument("--out", help="report directory (default output.dir)")
    sub.set_defaults(handler=cmd_backtest)

    sub = commands.add_parser("synth", help="write a synthetic price series")
    sub.add_argument(
        "spec", nargs="+", help="generator spec, e.g. 'aparch a1=0.7 n=3000'")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True, help="CSV file to write")
    sub.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    if args.verbose:
        log.setLevel("DEBUG")
    try:
        return args.handler(args)
    except (ConfigError, DataFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PriceIntervalsError as e:
        print(f"error: {e}", file=sys.stderr)
        for key, value in getattr(e, "diagnostics", {}).items():
            print(f"  {key}: {value}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
