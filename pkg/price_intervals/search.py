"""Random search over the quantile network hyperparameters."""
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import math

import numpy as np
import pandas as pd
import torch

from price_intervals import _logger as log
from price_intervals.data import lag_matrix
from price_intervals.errors import TrainingDivergedError
from price_intervals.neural_qr import QuantileMLP, TrainConfig, train
from price_intervals.util import run_parallel

# Widest ranges a search may draw from.
TUNING_BOUNDS = {
    "learning_rate": (1e-5, 1e-2),
    "l2": (1e-5, 1e-2),
    "neurons": (4, 128),
    "hidden_layers": (1, 3),
    "lags": (1, 12),
    "batch_size": (8, 64),
    "tau_low": (0.01, 0.15),
    "tau_high": (0.8, 0.99),
    "lagrangian": (1e-2, 1.0),
    "softening": (50.0, 200.0),
}
LOG_UNIFORM = ("learning_rate", "l2")
INTEGER = ("neurons", "hidden_layers", "lags", "batch_size")


@dataclass(frozen=True)
class SearchSpace:
    """Ranges to sample trial configurations from.

    Learning rate and L2 are drawn log-uniformly, the integer settings
    uniformly over their inclusive range and the loss settings uniformly.
    Fields not tuned (loss kind, alpha, epochs, patience, split) come from
    ``base``.

    Example:

    .. code-block:: python

        space = SearchSpace(trials=10, base=TrainConfig(loss="qd"))
        result = random_search(space, scaled_series)
        result.best_config, result.trials_frame()
    """
    trials: int = 40
    master_seed: int = 0
    base: TrainConfig = field(default_factory=TrainConfig)
    ranges: Dict[str, Tuple[float, float]] = field(
        default_factory=lambda: dict(TUNING_BOUNDS))

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}.")
        for name, (lo, hi) in self.ranges.items():
            if name not in TUNING_BOUNDS:
                raise ValueError(f"{name} is not a tunable hyperparameter; "
                                 f"choose from {sorted(TUNING_BOUNDS)}.")
            bound_lo, bound_hi = TUNING_BOUNDS[name]
            if not bound_lo <= lo <= hi <= bound_hi:
                raise ValueError(
                    f"Range {name}=[{lo}, {hi}] must lie inside "
                    f"[{bound_lo}, {bound_hi}].")

    def sample(self, index: int) -> TrainConfig:
        """Configuration of trial ``index``, seeded by master seed + index."""
        seed = self.master_seed + index
        rng = np.random.default_rng(seed)
        values = {}
        for name in TUNING_BOUNDS:
            if name not in self.ranges:
                continue
            lo, hi = self.ranges[name]
            if name in LOG_UNIFORM:
                values[name] = float(
                    math.exp(rng.uniform(math.log(lo), math.log(hi))))
            elif name in INTEGER:
                values[name] = int(rng.integers(int(lo), int(hi) + 1))
            else:
                values[name] = float(rng.uniform(lo, hi))
        return replace(self.base, seed=seed, **values)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    config: TrainConfig
    val_loss: float
    best_epoch: int
    epochs_run: int
    diverged: bool = False
    message: str = ""

    def as_dict(self) -> Dict[str, object]:
        row = {"trial": self.index}
        row.update(asdict(self.config))
        row.update(
            val_loss=self.val_loss,
            best_epoch=self.best_epoch,
            epochs_run=self.epochs_run,
            diverged=self.diverged,
            message=self.message)
        return row


@dataclass
class SearchResult:
    best_config: TrainConfig
    model: QuantileMLP
    trials: List[TrialRecord]
    best_index: int = 0

    @property
    def best_trial(self) -> TrialRecord:
        return self.trials[self.best_index]

    def trials_frame(self) -> pd.DataFrame:
        return pd.DataFrame([t.as_dict() for t in self.trials])


def _run_trial(index: int, config: TrainConfig, series: np.ndarray
               ) -> Tuple[TrialRecord, Optional[Dict[str, torch.Tensor]]]:
    try:
        result = train(lag_matrix(series, config.lags), config)
    except TrainingDivergedError as e:
        return TrialRecord(
            index=index,
            config=config,
            val_loss=float("inf"),
            best_epoch=-1,
            epochs_run=e.epoch + 1,
            diverged=True,
            message=str(e)), None
    state = {
        k: v.detach().clone()
        for k, v in result.model.state_dict().items()
    }
    return TrialRecord(
        index=index,
        config=config,
        val_loss=result.best_val_loss,
        best_epoch=result.best_epoch,
        epochs_run=result.epochs_run), state


def random_search(space: SearchSpace,
                  series: Sequence[float],
                  num_workers: int = 1) -> SearchResult:
    """Trains ``space.trials`` sampled configurations and keeps the one with
    the lowest validation loss, the lower trial index winning ties.

    Args:
        space (SearchSpace): Ranges, trial count and master seed.
        series (list): The series scaled to [0, 1]; each trial builds its own
            lag matrix from it.
        num_workers (int): Number of Ray actors for the trials; 1 trains
            them one after another in-process.

    Raises:
        TrainingDivergedError: Every trial diverged.
    """
    series = np.asarray(series, dtype=float)
    configs = [space.sample(i) for i in range(space.trials)]
    outcomes = run_parallel(
        [partial(_run_trial, i, c, series) for i, c in enumerate(configs)],
        num_workers=num_workers)
    trials = [record for record, _ in outcomes]
    for record in trials:
        log.info(f"trial {record.index}: val loss {record.val_loss:.6f} "
                 f"after {record.epochs_run} epochs")

    finished = [(r.val_loss, r.index) for r in trials if not r.diverged]
    if not finished:
        raise TrainingDivergedError(
            max(r.epochs_run for r in trials) - 1,
            f"all {space.trials} search trials diverged")
    _, best_index = min(finished)
    best_config = configs[best_index]
    model = QuantileMLP(best_config.widths, best_config, seed=best_config.seed)
    model.load_state_dict(outcomes[best_index][1])
    model.eval()
    log.info(f"random search picked trial {best_index} with val loss "
             f"{trials[best_index].val_loss:.6f}")
    return SearchResult(
        best_config=best_config,
        model=model,
        trials=trials,
        best_index=best_index)
