"""Adapters giving the three model families one backtest interface.

A forecaster is fitted on a window of differenced values and then produces
one-step (lower, upper) intervals, still in difference space, from any
history of differenced values. The backtest takes care of differencing,
re-integration and refit scheduling.
"""
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from price_intervals import _logger as log
from price_intervals import arma_aparch, copula
from price_intervals.data import fit_scaler, lag_matrix, split_train_val
from price_intervals.neural_qr import (TrainConfig, predict_interval,
                                       save_model, train)
from price_intervals.search import (TUNING_BOUNDS, SearchSpace, TrialRecord,
                                    random_search)
from price_intervals.util import write_record

KINDS = ("arma_aparch", "copula", "mlp_pb", "mlp_qd")
DISPLAY_NAMES = {
    "arma_aparch": "ARMA-APARCH",
    "copula": "Copula",
    "mlp_pb": "MLP-PB",
    "mlp_qd": "MLP-QD",
}


class Forecaster:
    """Base class of the backtest forecaster contract."""

    def fit(self, diffs: np.ndarray):
        raise NotImplementedError

    def forecast(self, diffs: np.ndarray) -> Tuple[float, float]:
        raise NotImplementedError

    def summary(self) -> Dict[str, Any]:
        """Fit diagnostics for logs and the ``fit`` command."""
        return {}

    def save(self, path: str):
        raise NotImplementedError


class ArmaAparchForecaster(Forecaster):
    """ARMA-APARCH on differences.

    With ``p_max``/``q_max`` set the order is chosen by AIC at the first fit
    and kept for later refits.
    """

    def __init__(self,
                 alpha: float = 0.1,
                 p: int = 1,
                 q: int = 0,
                 p_max: Optional[int] = None,
                 q_max: Optional[int] = None,
                 innovation: str = "skewt",
                 n_starts: int = 5,
                 seed: int = 0):
        if innovation not in arma_aparch.INNOVATIONS:
            raise ValueError(f"innovation must be one of "
                             f"{arma_aparch.INNOVATIONS}, got {innovation!r}.")
        orders = [v for v in (p, q, p_max, q_max) if v is not None]
        if min(orders) < 0:
            raise ValueError(f"ARMA orders must be >= 0, got {orders}.")
        if n_starts < 1:
            raise ValueError(f"n_starts must be >= 1, got {n_starts}.")
        self.alpha = alpha
        selecting = p_max is not None or q_max is not None
        self.order = None if selecting else (p, q)
        self.p_max = p if p_max is None else p_max
        self.q_max = q if q_max is None else q_max
        self.fit_kwargs = dict(
            innovation=innovation, n_starts=n_starts, seed=seed)
        self.params: Optional[arma_aparch.ArmaAparchParams] = None
        self._window = None

    def fit(self, diffs):
        diffs = np.asarray(diffs, dtype=float)
        if self.order is None:
            self.order = arma_aparch.select_order(
                diffs, self.p_max, self.q_max, **self.fit_kwargs)
        self.params = arma_aparch.fit(diffs, *self.order, **self.fit_kwargs)
        self._window = diffs

    def forecast(self, diffs):
        out = arma_aparch.forecast_interval(self.params, diffs, self.alpha)
        return out.lower, out.upper

    def summary(self):
        return {
            "order": self.order,
            "loglik": arma_aparch.loglik(self.params, self._window),
            "aic": arma_aparch.aic(self.params, self._window,
                                   self.fit_kwargs["innovation"])
        }

    def save(self, path):
        arma_aparch.save(self.params, path)


class CopulaForecaster(Forecaster):
    """t-copula Markov model on differences.

    Forecast ``k`` after a fit draws its simulation with seed ``seed + k``.
    """

    def __init__(self,
                 alpha: float = 0.1,
                 p: int = 1,
                 n_samples: int = 10000,
                 seed: int = 0):
        if not 1 <= p <= copula.MAX_ORDER:
            raise ValueError(f"Markov order must lie in [1, "
                             f"{copula.MAX_ORDER}], got {p}.")
        if n_samples < 2:
            raise ValueError(f"n_samples must be >= 2, got {n_samples}.")
        self.alpha = alpha
        self.p = p
        self.n_samples = n_samples
        self.seed = seed
        self.params: Optional[copula.CopulaParams] = None
        self._calls = 0
        self._window = None

    def fit(self, diffs):
        self._window = np.asarray(diffs, dtype=float)
        self.params = copula.fit(self._window, self.p)

    def forecast(self, diffs):
        out = copula.forecast_interval(
            self.params,
            diffs,
            self.alpha,
            n=self.n_samples,
            seed=self.seed + self._calls)
        self._calls += 1
        return out.lower, out.upper

    def summary(self):
        return {
            "order": self.p,
            "nu": self.params.nu,
            "rho": list(self.params.rho),
            "loglik": copula.loglik(self.params, self._window)
        }

    def save(self, path):
        copula.save(self.params, path)


@dataclass
class MlpSettings:
    trials: int = 40
    master_seed: int = 0
    num_workers: int = 1
    ranges: Optional[Dict[str, Tuple[float, float]]] = None
    train: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_workers < 1:
            raise ValueError(
                f"num_workers must be >= 1, got {self.num_workers}.")


class MlpForecaster(Forecaster):
    """Two-headed quantile network on differences scaled to [0, 1].

    The scaler is fitted on the training part of each window. The random
    search runs at the first fit only; later fits retrain the configuration
    it selected on the new window.
    """

    def __init__(self, loss: str = "pb", alpha: float = 0.1, **settings):
        self.settings = MlpSettings(**settings)
        base = dict(self.settings.train)
        base.update(loss=loss, alpha=alpha)
        self.base = TrainConfig(**base)
        space_kwargs = {}
        if self.settings.ranges is not None:
            space_kwargs["ranges"] = {
                k: tuple(v)
                for k, v in self.settings.ranges.items()
            }
        self.space = SearchSpace(
            trials=self.settings.trials,
            master_seed=self.settings.master_seed,
            base=self.base,
            **space_kwargs)
        self.config: Optional[TrainConfig] = None
        self.trials: List[TrialRecord] = []
        self.model = None
        self.scaler = None
        self.val_loss = float("nan")

    def fit(self, diffs):
        diffs = np.asarray(diffs, dtype=float)
        train_part, _ = split_train_val(diffs, self.base.train_ratio)
        self.scaler = fit_scaler(train_part)
        scaled = self.scaler.apply(diffs)
        if self.config is None:
            result = random_search(self.space, scaled,
                                   self.settings.num_workers)
            self.config, self.model = result.best_config, result.model
            self.trials = result.trials
            self.val_loss = result.best_trial.val_loss
        else:
            result = train(lag_matrix(scaled, self.config.lags), self.config)
            self.model, self.val_loss = result.model, result.best_val_loss
        log.debug(f"{self.base.loss} network refit, val loss "
                  f"{self.val_loss:.6f}")

    def forecast(self, diffs):
        lags = np.asarray(diffs, dtype=float)[::-1][:self.config.lags]
        out = predict_interval(self.model, self.scaler, lags)
        return out.lower, out.upper

    def summary(self):
        return {
            "val_loss": self.val_loss,
            "config": asdict(self.config),
            "trials": len(self.trials)
        }

    def save(self, path):
        save_model(self.model, path)
        write_record(path + ".scaler", "scaler", {
            "lo": float(self.scaler.lo),
            "hi": float(self.scaler.hi)
        })


_NUMBER = (int, float)
_MLP_TYPES = {
    "trials": int,
    "master_seed": int,
    "num_workers": int,
    "ranges": dict,
    "train": dict
}
PARAM_TYPES = {
    "arma_aparch": {
        "p": int,
        "q": int,
        "p_max": int,
        "q_max": int,
        "innovation": str,
        "n_starts": int,
        "seed": int
    },
    "copula": {
        "p": int,
        "n_samples": int,
        "seed": int
    },
    "mlp_pb": _MLP_TYPES,
    "mlp_qd": _MLP_TYPES,
}
TRAIN_TYPES = {
    f.name: _NUMBER if f.type is float else f.type
    for f in fields(TrainConfig) if f.name not in ("loss", "alpha")
}


def _type_error(value: Any, expected) -> Optional[str]:
    # bool is an int subclass but never a valid setting here.
    if isinstance(value, bool) or not isinstance(value, expected):
        return f"wrong type {type(value).__name__}"
    return None


def check_params(kind: str, params: Dict[str, Any]) -> List[Tuple[str, str]]:
    """Problems with the settings of a ``kind`` forecaster.

    Returns:
        ``(key, problem)`` pairs, empty when ``params`` is valid. Keys are
        dotted below the params mapping, e.g. ``train.lags``.
    """
    if kind not in KINDS:
        raise ValueError(f"Unknown forecaster kind {kind!r}; choose from "
                         f"{KINDS}.")
    schema = PARAM_TYPES[kind]
    problems = []
    for key in sorted(params):
        value = params[key]
        if key not in schema:
            problems.append((key, f"not a {kind} setting"))
            continue
        error = _type_error(value, schema[key])
        if error:
            problems.append((key, error))
        elif key == "train":
            for name in sorted(value):
                if name not in TRAIN_TYPES:
                    problems.append((f"train.{name}",
                                     "not a training setting"))
                else:
                    error = _type_error(value[name], TRAIN_TYPES[name])
                    if error:
                        problems.append((f"train.{name}", error))
        elif key == "ranges":
            for name in sorted(value):
                bounds = value[name]
                if name not in TUNING_BOUNDS:
                    problems.append((f"ranges.{name}",
                                     "not a tunable hyperparameter"))
                elif (not isinstance(bounds, (list, tuple))
                      or len(bounds) != 2
                      or any(_type_error(b, _NUMBER) for b in bounds)):
                    problems.append((f"ranges.{name}",
                                     "expected a [low, high] pair of numbers"))
    return problems


def build(kind: str,
          params: Dict[str, Any],
          alpha: float = 0.1,
          seed: int = 0) -> Forecaster:
    """Creates a forecaster of ``kind``; ``seed`` is the default for the
    model's own seed setting.

    Raises:
        ValueError: A setting is unknown, of the wrong type or out of range.
    """
    problems = check_params(kind, params)
    if problems:
        key, problem = problems[0]
        raise ValueError(f"{kind} setting {key}: {problem}.")
    params = dict(params)
    if kind == "arma_aparch":
        params.setdefault("seed", seed)
        return ArmaAparchForecaster(alpha=alpha, **params)
    if kind == "copula":
        params.setdefault("seed", seed)
        return CopulaForecaster(alpha=alpha, **params)
    params.setdefault("master_seed", seed)
    return MlpForecaster(loss=kind[len("mlp_"):], alpha=alpha, **params)
