"""Interval and quantile evaluation measures.

Everything here works on plain numpy arrays; the differentiable training
versions of the pinball and QD losses live in :mod:`price_intervals.neural_qr`.
"""
from dataclasses import dataclass, asdict
from typing import Dict, Sequence

import numpy as np
from scipy.special import expit


@dataclass(frozen=True, eq=False)
class IntervalBatch:
    """Lower/upper bounds of a batch of (1 - alpha) prediction intervals.

    ``lower <= upper`` is deliberately not enforced: raw two-headed network
    outputs may cross and are scored literally.
    """
    lower: np.ndarray
    upper: np.ndarray
    nominal_alpha: float = 0.1

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError(f"lower and upper differ in length: "
                             f"{lower.size} vs {upper.size}.")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("Interval bounds must be finite.")
        _check_level(self.nominal_alpha, "alpha")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def __len__(self):
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower


@dataclass(frozen=True)
class MetricReport:
    picp: float
    piaw: float
    interval_score: float
    pb_low: float
    pb_high: float
    n: int
    piaw_capt: float = 0.0
    qd: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _check_level(level: float, name: str):
    if not 0.0 < level < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {level}.")


def _targets(b: IntervalBatch, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != len(b):
        raise ValueError(
            f"Got {y.size} realizations for {len(b)} intervals.")
    return y


def covered(b: IntervalBatch, y) -> np.ndarray:
    """Closed-interval coverage indicators."""
    y = _targets(b, y)
    return (b.lower <= y) & (y <= b.upper)


def picp(b: IntervalBatch, y) -> float:
    if len(b) == 0:
        raise ValueError("picp of an empty batch is undefined.")
    return float(np.mean(covered(b, y)))


def piaw(b: IntervalBatch) -> float:
    if len(b) == 0:
        raise ValueError("piaw of an empty batch is undefined.")
    return float(np.mean(b.widths))


def interval_score(b: IntervalBatch, y) -> float:
    """Batch mean of the interval score at ``b.nominal_alpha``."""
    y = _targets(b, y)
    alpha = b.nominal_alpha
    _check_level(alpha, "alpha")
    below = np.where(y < b.lower, b.lower - y, 0.0)
    above = np.where(y > b.upper, y - b.upper, 0.0)
    scores = b.widths + (2.0 / alpha) * below + (2.0 / alpha) * above
    return float(np.mean(scores))


def pinball(q_hat, y, tau: float):
    """Element-wise pinball loss at quantile level ``tau``."""
    _check_level(tau, "tau")
    q_hat = np.asarray(q_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    loss = np.where(q_hat >= y, (1.0 - tau) * (q_hat - y), tau * (y - q_hat))
    return float(loss) if loss.ndim == 0 else loss


def mean_pinball(q_hat, y, tau: float) -> float:
    return float(np.mean(pinball(q_hat, y, tau)))


def combined_pinball(preds: Sequence, y, taus: Sequence[float]) -> float:
    """Average over levels of the batch-mean pinball loss."""
    if len(taus) == 0:
        raise ValueError("combined_pinball needs at least one tau.")
    if len(preds) != len(taus):
        raise ValueError(
            f"Got {len(preds)} prediction vectors for {len(taus)} taus.")
    y = np.asarray(y, dtype=float)
    for q_hat in preds:
        if np.shape(q_hat) != y.shape:
            raise ValueError("Every prediction vector must match y in "
                             f"shape {y.shape}, got {np.shape(q_hat)}.")
    return float(
        np.mean([mean_pinball(q, y, tau) for q, tau in zip(preds, taus)]))


def _capture(b: IntervalBatch, y, softening: float, hard: bool):
    y = _targets(b, y)
    if hard:
        return covered(b, y).astype(float)
    return expit(softening * (y - b.lower)) * expit(softening *
                                                    (b.upper - y))


def _captured_width(widths: np.ndarray, k: np.ndarray) -> float:
    total = np.sum(k)
    # With nothing captured the coverage penalty carries the loss.
    if total == 0.0:
        return 0.0
    return float(np.sum(widths * k) / total)


def piaw_capt(b: IntervalBatch, y) -> float:
    """Mean width of the intervals that cover their target; 0 if none do."""
    return _captured_width(b.widths, covered(b, y).astype(float))


def qd_loss(b: IntervalBatch,
            y,
            alpha: float,
            lam: float,
            s: float = 100.0,
            hard: bool = True) -> float:
    """Quality-driven loss.

    ``PIAW_capt + lam * n / (alpha (1 - alpha)) * max(0, (1 - alpha) -
    PICP)^2``. With ``hard=False`` each coverage indicator is replaced by
    ``sigmoid(s (y - L)) * sigmoid(s (U - y))``.
    """
    _check_level(alpha, "alpha")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}.")
    if s <= 0:
        raise ValueError(f"softening must be > 0, got {s}.")
    k = _capture(b, y, s, hard)
    n = k.size
    coverage = float(np.mean(k))
    shortfall = max(0.0, (1.0 - alpha) - coverage)
    penalty = lam * n / (alpha * (1.0 - alpha)) * shortfall**2
    return _captured_width(b.widths, k) + penalty


def evaluate(b: IntervalBatch, y) -> MetricReport:
    """All report metrics for one batch, pinball at alpha/2 and 1-alpha/2."""
    y = _targets(b, y)
    alpha = b.nominal_alpha
    if len(b) == 0:
        return MetricReport(
            picp=0.0,
            piaw=0.0,
            interval_score=0.0,
            pb_low=0.0,
            pb_high=0.0,
            n=0,
            piaw_capt=0.0,
            qd=0.0)
    return MetricReport(
        picp=picp(b, y),
        piaw=piaw(b),
        interval_score=interval_score(b, y),
        pb_low=mean_pinball(b.lower, y, alpha / 2),
        pb_high=mean_pinball(b.upper, y, 1 - alpha / 2),
        n=len(b),
        piaw_capt=piaw_capt(b, y),
        qd=qd_loss(b, y, alpha, lam=1.0, hard=True))
