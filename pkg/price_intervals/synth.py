"""Synthetic price series with known data-generating process.

A generator spec is a generator name followed by ``key=value`` settings::

    aparch a0=0.05 a1=0.7 a2=0.2 n=3000
    aparch phi=0.1,-0.05 nu=5 xi=1.2 breaks=0.5:25
    copula nu=6 rho=0.5,0.2 n=2000
    fixture

The process is simulated on differences which are then summed onto
``level``. ``breaks`` multiplies the variance of the differences from a
position onwards; positions are fractions of the series or calendar dates,
e.g. ``breaks=2021-06-01:25,2022-06-01:4``.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import re

import numpy as np
import pandas as pd
import yaml

from price_intervals import _logger as log
from price_intervals import arma_aparch, copula
from price_intervals.data import PriceSeries
from price_intervals.dists import KernelMarginal
from price_intervals.errors import ConfigError

GENERATORS = ("aparch", "copula", "fixture")
_COMMON = {"n", "level", "start", "end", "breaks", "alpha"}
_KEYS = {
    "aparch": _COMMON | {"mu", "phi", "theta", "a0", "a1", "a2", "nu", "xi"},
    "copula": _COMMON | {"nu", "rho", "marginal_df", "marginal_n"},
}
_LISTS = ("phi", "theta", "rho")
_TEXT = ("start", "end", "breaks")
_INTEGERS = ("n", "marginal_n")

# Volatility break in mid-2021 and a calmer but still elevated tail.
FIXTURE = ("aparch mu=0 phi=0.05 a0=0.05 a1=0.8 a2=0.1 nu=6 xi=1.1 n=3123 "
           "level=20 end=2023-01-20 breaks=2021-06-01:25,2022-06-01:4")


@dataclass(frozen=True)
class SynthSpec:
    generator: str
    settings: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.settings.get("n", 1000)

    @property
    def level(self) -> float:
        return self.settings.get("level", 100.0)

    @property
    def alpha(self) -> float:
        return self.settings.get("alpha", 0.1)


@dataclass(eq=False)
class SynthResult:
    series: PriceSeries
    truth: Dict[str, Any]
    quantiles: Optional[pd.DataFrame] = None


def _value(key: str, raw: str):
    if key in _TEXT:
        return raw
    try:
        if key in _LISTS:
            return tuple(float(v) for v in raw.split(","))
        if key in _INTEGERS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"spec.{key}", f"cannot parse {raw!r}")


def parse_spec(text: str) -> SynthSpec:
    """Parses a generator spec such as ``aparch a1=0.7 n=3000``."""
    tokens = text.split()
    if not tokens or tokens[0] not in GENERATORS:
        raise ConfigError("spec", f"expected one of {list(GENERATORS)} "
                          f"first, got {text!r}")
    if tokens[0] == "fixture":
        if len(tokens) > 1:
            raise ConfigError("spec", "the fixture preset takes no settings")
        return parse_spec(FIXTURE)
    generator, settings = tokens[0], {}
    for token in tokens[1:]:
        key, sep, raw = token.partition("=")
        if not sep or not raw:
            raise ConfigError("spec", f"expected key=value, got {token!r}")
        if key not in _KEYS[generator]:
            raise ConfigError(
                f"spec.{key}", f"not a {generator} setting; expected one "
                f"of {sorted(_KEYS[generator])}")
        settings[key] = _value(key, raw)
    if settings.get("n", 1000) < 2:
        raise ConfigError("spec.n", "need at least 2 observations")
    return SynthSpec(generator, settings)


def business_days(n: int,
                  start: Optional[str] = None,
                  end: Optional[str] = None) -> np.ndarray:
    if start is not None and end is not None:
        raise ConfigError("spec.start", "give start or end, not both")
    if start is None and end is None:
        start = "2012-01-02"
    try:
        dates = pd.bdate_range(start=start, end=end, periods=n)
    except ValueError as e:
        raise ConfigError("spec.start" if start else "spec.end", str(e))
    return dates.to_numpy().astype("datetime64[D]")


def parse_breaks(text: str) -> Tuple[Tuple[Union[float, str], float], ...]:
    """``0.5:25,2022-06-01:4`` -> ((0.5, 25.0), ('2022-06-01', 4.0))."""
    breaks = []
    for item in text.split(","):
        position, sep, factor = item.rpartition(":")
        try:
            factor = float(factor)
        except ValueError:
            factor = float("nan")
        if not sep or not factor > 0:
            raise ConfigError(
                "spec.breaks",
                f"expected position:factor with factor > 0, got {item!r}")
        if re.fullmatch(r"\d{4}-\d{2}-\d{2}", position):
            breaks.append((position, factor))
            continue
        try:
            fraction = float(position)
        except ValueError:
            fraction = float("nan")
        if not 0 < fraction < 1:
            raise ConfigError(
                "spec.breaks", f"position {position!r} must be a fraction "
                "in (0, 1) or a YYYY-MM-DD date")
        breaks.append((fraction, factor))
    return tuple(breaks)


def variance_multipliers(dates: np.ndarray,
                         breaks: Sequence[Tuple[Union[float, str], float]]
                         ) -> np.ndarray:
    """Per-observation variance factor; each break holds until the next."""
    n = len(dates)
    starts = []
    for position, factor in breaks:
        if isinstance(position, str):
            index = int(np.searchsorted(dates, np.datetime64(position, "D")))
        else:
            index = int(round(position * n))
        starts.append((index, factor))
    multipliers = np.ones(n)
    for index, factor in sorted(starts):
        multipliers[index:] = factor
    return multipliers


def _aparch_params(settings: Dict[str, Any]) -> arma_aparch.ArmaAparchParams:
    names = ("mu", "a0", "a1", "a2", "nu", "xi")
    kwargs = {k: settings[k] for k in names if k in settings}
    kwargs.setdefault("mu", 0.0)
    try:
        return arma_aparch.ArmaAparchParams(
            phi=settings.get("phi", ()),
            theta=settings.get("theta", ()),
            **kwargs)
    except ValueError as e:
        raise ConfigError("spec", str(e))


def _copula_params(settings: Dict[str, Any],
                   rng: np.random.Generator) -> copula.CopulaParams:
    df = settings.get("marginal_df", 4.0)
    size = settings.get("marginal_n", 500)
    try:
        marginal = KernelMarginal.fit(rng.standard_t(df, size))
        return copula.CopulaParams(
            nu=settings.get("nu", 6.0),
            rho=settings.get("rho", (0.5, )),
            marginal=marginal)
    except ValueError as e:
        raise ConfigError("spec", str(e))


def generate(spec: SynthSpec, seed: int = 0) -> SynthResult:
    """Simulates the series described by ``spec``.

    The ``aparch`` generator also returns the true conditional
    ``alpha/2`` and ``1 - alpha/2`` price quantiles of every row.
    """
    settings = spec.settings
    dates = business_days(spec.n, settings.get("start"), settings.get("end"))
    breaks = parse_breaks(settings["breaks"]) if "breaks" in settings else ()
    scale = np.sqrt(variance_multipliers(dates, breaks))
    truth = {
        "generator": spec.generator,
        "seed": seed,
        "n": spec.n,
        "level": spec.level,
        "breaks": [[str(pos), factor] for pos, factor in breaks],
    }

    quantiles = None
    if spec.generator == "aparch":
        params = _aparch_params(settings)
        path = arma_aparch.simulate_path(params, spec.n, seed=seed)
        diffs = path.values * scale
        truth["params"] = params.to_record()
        tail = params.innovation.quantile(
            np.array([spec.alpha / 2, 1 - spec.alpha / 2]))
        previous = spec.level + np.concatenate([[0.0], np.cumsum(diffs)[:-1]])
        quantiles = pd.DataFrame({
            "date": dates.astype(str),
            "lower": previous + scale * (path.means + path.sigmas * tail[0]),
            "upper": previous + scale * (path.means + path.sigmas * tail[1]),
        })
        truth["alpha"] = spec.alpha
    else:
        rng = np.random.default_rng(seed)
        params = _copula_params(settings, rng)
        diffs = copula.simulate_chain(params, spec.n, seed=seed + 1) * scale
        truth["params"] = params.to_record()
        truth["params"]["marginal_df"] = settings.get("marginal_df", 4.0)

    prices = spec.level + np.cumsum(diffs)
    log.info(f"simulated {spec.n} {spec.generator} prices, "
             f"{dates[0]} to {dates[-1]}")
    return SynthResult(PriceSeries(dates, prices), truth, quantiles)


def write(result: SynthResult, path: str):
    """Writes ``path`` in the ingestion format plus ``path.truth.yaml`` and,
    when known, ``path.quantiles.csv``."""
    frame = pd.DataFrame({
        "date": result.series.dates.astype(str),
        "price": result.series.values
    })
    frame.to_csv(path, index=False, float_format="%.6f")
    with open(path + ".truth.yaml", "w") as f:
        yaml.safe_dump(result.truth, f, sort_keys=True)
    if result.quantiles is not None:
        result.quantiles.to_csv(
            path + ".quantiles.csv", index=False, float_format="%.6f")
