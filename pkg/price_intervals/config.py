"""YAML run configuration.

A run configuration has the sections ``data``, ``backtest``, ``regimes``,
``forecasters``, ``describe``, ``output`` and ``seed``. Every key is checked
before anything is computed and errors name the offending field by its dotted
path, e.g. ``forecasters.1.params.trials``.

Example:

.. code-block:: yaml

    data:
      path: prices.csv
    backtest:
      refit_every: 10
      alpha: 0.1
    regimes:
      - {name: shock, start: 2021-06-09, end: 2022-01-31}
    forecasters:
      - kind: arma_aparch
        params: {p: 1, q: 0}
    output:
      dir: reports
    seed: 0
"""
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import datetime
import os

import yaml

from price_intervals.backtest import BacktestConfig, ForecasterSpec, Regime
from price_intervals.errors import ConfigError
from price_intervals.forecasters import KINDS, build, check_params

SECTIONS = ("data", "backtest", "regimes", "forecasters", "describe",
            "output", "seed")
_DATE = (str, datetime.date)
_NUMBER = (int, float)
_SCHEMA = {
    "data": {
        "path": str,
        "date_column": str,
        "price_column": str,
        "delimiter": str
    },
    "backtest": {
        "refit_every": int,
        "window": str,
        "window_length": (int, type(None)),
        "alpha": _NUMBER,
        "test_start": _DATE + (type(None), ),
        "num_workers": int
    },
    "regime": {
        "name": str,
        "start": _DATE,
        "end": _DATE
    },
    "forecaster": {
        "kind": str,
        "name": str,
        "difference": int,
        "alpha": _NUMBER,
        "params": dict
    },
    "describe": {
        "periods": list
    },
    "output": {
        "dir": str
    },
}


@dataclass(frozen=True)
class DataSection:
    path: str
    date_column: str = "date"
    price_column: str = "price"
    delimiter: str = ","


@dataclass(frozen=True)
class RunConfig:
    data: DataSection
    backtest: BacktestConfig
    describe_periods: Tuple[Regime, ...] = ()
    output_dir: str = "reports"
    seed: int = 0
    overrides: Tuple[str, ...] = ()


def _check_section(values: Any, schema: str, where: str) -> Dict[str, Any]:
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ConfigError(where, f"expected a mapping, got {values!r}")
    for key, value in values.items():
        field = f"{where}.{key}"
        if key not in _SCHEMA[schema]:
            raise ConfigError(
                field, f"unknown key; expected one of "
                f"{sorted(_SCHEMA[schema])}")
        expected = _SCHEMA[schema][key]
        # bool is an int subclass but never a valid number here.
        if isinstance(value, bool) or not isinstance(value, expected):
            raise ConfigError(field, f"wrong type {type(value).__name__}")
    return values


def _wrap(field: str, build, *args, **kwargs):
    try:
        return build(*args, **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(field, str(e))


def _regimes(entries: Any, where: str) -> Tuple[Regime, ...]:
    if entries is None:
        return ()
    if not isinstance(entries, list):
        raise ConfigError(where, "expected a list of regimes")
    regimes = []
    for i, entry in enumerate(entries):
        field = f"{where}.{i}"
        entry = _check_section(entry, "regime", field)
        for key in ("name", "start", "end"):
            if key not in entry:
                raise ConfigError(f"{field}.{key}", "missing")
        regimes.append(
            _wrap(field, Regime, str(entry["name"]), str(entry["start"]),
                  str(entry["end"])))
    return tuple(regimes)


def _check_model_params(kind: str, params: Dict[str, Any], where: str):
    problems = check_params(kind, params)
    if problems:
        key, problem = problems[0]
        raise ConfigError(f"{where}.{key}", problem)
    # Range checks live in the forecaster constructors.
    _wrap(where, build, kind, params)


def _forecasters(entries: Any) -> Tuple[ForecasterSpec, ...]:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("forecasters", "expected a non-empty list")
    specs = []
    for i, entry in enumerate(entries):
        field = f"forecasters.{i}"
        entry = _check_section(entry, "forecaster", field)
        kind = entry.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"{field}.kind",
                              f"expected one of {KINDS}, got {kind!r}")
        params = entry.get("params") or {}
        _check_model_params(kind, params, f"{field}.params")
        specs.append(
            _wrap(
                field,
                ForecasterSpec,
                kind=kind,
                name=entry.get("name"),
                difference=entry.get("difference", 1),
                params=params,
                alpha=entry.get("alpha")))
    return tuple(specs)


def _assign(document: Dict[str, Any], override: str):
    if "=" not in override:
        raise ConfigError(override, "expected section.key=value")
    key, raw = override.split("=", 1)
    parts = key.strip().split(".")
    if parts[0] not in SECTIONS:
        raise ConfigError(key, f"unknown section; expected one of "
                          f"{list(SECTIONS)}")
    node = document
    for depth, part in enumerate(parts[:-1]):
        where = ".".join(parts[:depth + 1])
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise ConfigError(where, "no such list entry")
            node = node[int(part)]
        else:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
        if not isinstance(node, (dict, list)):
            raise ConfigError(where, "cannot set a key below a scalar")
    value = yaml.safe_load(raw)
    last = parts[-1]
    if isinstance(node, list):
        if not last.isdigit() or int(last) >= len(node):
            raise ConfigError(key, "no such list entry")
        node[int(last)] = value
    else:
        node[last] = value


def parse(document: Any, overrides: Sequence[str] = ()) -> RunConfig:
    """Validates a loaded YAML document and applies ``section.key=value``
    overrides first."""
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError("<root>", "expected a mapping of sections")
    for override in overrides:
        _assign(document, override)
    for key in document:
        if key not in SECTIONS:
            raise ConfigError(
                key, f"unknown section; expected one of {list(SECTIONS)}")

    data = _check_section(document.get("data"), "data", "data")
    if "path" not in data:
        raise ConfigError("data.path", "missing")
    if not os.path.isfile(data["path"]):
        raise ConfigError("data.path", f"no such file: {data['path']}")
    seed = document.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed", f"expected an integer, got {seed!r}")

    section = dict(_check_section(document.get("backtest"), "backtest",
                                  "backtest"))
    if section.get("test_start") is not None:
        section["test_start"] = str(section["test_start"])
    backtest = _wrap(
        "backtest",
        BacktestConfig,
        data=data["path"],
        forecasters=_forecasters(document.get("forecasters")),
        regimes=_regimes(document.get("regimes"), "regimes"),
        seed=seed,
        overrides=tuple(overrides),
        **section)

    describe = _check_section(document.get("describe"), "describe", "describe")
    output = _check_section(document.get("output"), "output", "output")
    return RunConfig(
        data=DataSection(**data),
        backtest=backtest,
        describe_periods=_regimes(
            describe.get("periods"), "describe.periods"),
        output_dir=output.get("dir", "reports"),
        seed=seed,
        overrides=tuple(overrides))


def load(path: str, overrides: Sequence[str] = ()) -> RunConfig:
    """Reads and validates the YAML run configuration at ``path``."""
    try:
        with open(path) as f:
            document = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e.strerror}")
    except yaml.YAMLError as e:
        raise ConfigError("<file>", f"{path} is not valid YAML: {e}")
    return parse(document, overrides)
