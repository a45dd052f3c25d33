"""Probability kernels shared by the statistical models."""
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import special

from price_intervals import _logger as log

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _check_probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
        raise ValueError("Probabilities must lie strictly inside (0, 1).")
    return p


def student_t_cdf(x, nu: float):
    """Standard Student-t CDF via the regularized incomplete beta."""
    if nu <= 0:
        raise ValueError(f"nu must be > 0, got {nu}.")
    x = np.asarray(x, dtype=float)
    tail = 0.5 * special.betainc(0.5 * nu, 0.5, nu / (nu + x * x))
    return np.where(x < 0, tail, 1.0 - tail)


def student_t_quantile(p, nu: float):
    """Inverse of :func:`student_t_cdf`.

    ``stdtrit`` inverts the same incomplete-beta CDF by bracketed root
    finding, so both functions round-trip to ~1e-12.
    """
    if nu <= 0:
        raise ValueError(f"nu must be > 0, got {nu}.")
    return special.stdtrit(nu, _check_probs(p))


def student_t_logpdf(x, nu: float):
    x = np.asarray(x, dtype=float)
    return (special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) -
            0.5 * np.log(nu * np.pi) - 0.5 *
            (nu + 1) * np.log1p(x * x / nu))


@dataclass(frozen=True)
class SkewT:
    """Standardized two-piece (Fernandez-Steel) skew Student-t.

    Zero mean and unit variance for every (nu, xi); ``xi = 1`` is the
    standardized symmetric t, ``xi > 1`` skews to the right.
    """
    nu: float
    xi: float = 1.0

    def __post_init__(self):
        if not self.nu > 2:
            raise ValueError(f"SkewT needs nu > 2 for a finite variance, "
                             f"got {self.nu}.")
        if not self.xi > 0:
            raise ValueError(f"SkewT needs xi > 0, got {self.xi}.")

    @cached_property
    def _scale(self) -> float:
        # Maps the unit-variance t onto the standard t argument.
        return np.sqrt(self.nu / (self.nu - 2.0))

    @cached_property
    def _moments(self):
        nu, xi = self.nu, self.xi
        m1 = 2.0 * np.sqrt(nu - 2.0) / ((nu - 1.0) * special.beta(0.5, 0.5 *
                                                                  nu))
        mean = m1 * (xi - 1.0 / xi)
        var = (1.0 - m1**2) * (xi**2 + xi**-2) + 2.0 * m1**2 - 1.0
        return mean, np.sqrt(var)

    def _std_t_cdf(self, z):
        return student_t_cdf(z * self._scale, self.nu)

    def _std_t_quantile(self, p):
        return student_t_quantile(p, self.nu) / self._scale

    def logpdf(self, x):
        mean, sd = self._moments
        xi = self.xi
        w = np.asarray(x, dtype=float) * sd + mean
        z = np.where(w >= 0, w / xi, w * xi)
        return (np.log(sd) + np.log(2.0 / (xi + 1.0 / xi)) +
                student_t_logpdf(z * self._scale, self.nu) +
                np.log(self._scale))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        mean, sd = self._moments
        xi = self.xi
        w = np.asarray(x, dtype=float) * sd + mean
        left = 2.0 / (xi * xi + 1.0) * self._std_t_cdf(w * xi)
        right = 1.0 - 2.0 * xi * xi / (xi * xi + 1.0) * (
            1.0 - self._std_t_cdf(w / xi))
        return np.where(w < 0, left, right)

    def quantile(self, p):
        p = _check_probs(p)
        mean, sd = self._moments
        xi = self.xi
        split = 1.0 / (1.0 + xi * xi)
        p_left = np.minimum(p * (xi * xi + 1.0) / 2.0, 0.5)
        p_right = np.maximum(1.0 - (1.0 - p) * (xi * xi + 1.0) /
                             (2.0 * xi * xi), 0.5)
        w = np.where(p < split,
                     self._std_t_quantile(p_left) / xi,
                     xi * self._std_t_quantile(p_right))
        return (w - mean) / sd

    def rvs(self, size, rng: np.random.Generator):
        """Inverse-transform draws."""
        u = rng.uniform(size=size)
        # uniform() can return exactly 0.
        u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
        return self.quantile(u)


def silverman_bandwidth(sample) -> float:
    sample = np.asarray(sample, dtype=float)
    return 1.06 * float(np.std(sample, ddof=1)) * sample.size**(-0.2)


@dataclass(frozen=True, eq=False)
class KernelMarginal:
    """Gaussian-kernel smoothed distribution of a training sample."""
    sample: np.ndarray
    bandwidth: float

    # Caps the (points x sample) matrices built during evaluation.
    _chunk_elements = 1 << 22
    _grid_size = 4097

    def __post_init__(self):
        sample = np.sort(np.asarray(self.sample, dtype=float).reshape(-1))
        sample.flags.writeable = False
        if sample.size < 10:
            raise ValueError(f"KernelMarginal needs at least 10 observations, "
                             f"got {sample.size}.")
        if not np.all(np.isfinite(sample)):
            raise ValueError("KernelMarginal sample must be finite.")
        if not self.bandwidth > 0:
            raise ValueError(f"Bandwidth must be > 0, got {self.bandwidth}.")
        object.__setattr__(self, "sample", sample)

    @classmethod
    def fit(cls, sample, bandwidth: Optional[float] = None):
        sample = np.asarray(sample, dtype=float)
        if bandwidth is None:
            bandwidth = silverman_bandwidth(sample)
        return cls(sample=sample, bandwidth=float(bandwidth))

    def _mixture(self, x, kernel):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        out = np.empty(flat.size)
        step = max(1, self._chunk_elements // self.sample.size)
        for start in range(0, flat.size, step):
            block = flat[start:start + step, None]
            out[start:start + step] = kernel(
                (block - self.sample[None, :]) / self.bandwidth).mean(axis=1)
        return out.reshape(x.shape)

    def cdf(self, x):
        return self._mixture(x, special.ndtr)

    def pdf(self, x):
        return self._mixture(
            x, lambda z: np.exp(-0.5 * z * z) / _SQRT_2PI) / self.bandwidth

    @cached_property
    def bracket(self):
        """Search interval of :meth:`quantile`: the sample minimum and
        maximum widened by 10 bandwidths on each side.

        The cdf at its ends is within 1e-23 of 0 and 1, so the clamp in
        :meth:`quantile` only applies to probabilities that close to the
        bounds.
        """
        pad = 10.0 * self.bandwidth
        return self.sample[0] - pad, self.sample[-1] + pad

    @cached_property
    def _grid(self):
        lo, hi = self.bracket
        xs = np.linspace(lo, hi, self._grid_size)
        return xs, self.cdf(xs)

    def quantile(self, p, tol: float = 1e-10, max_iter: int = 100):
        """Inverts :meth:`cdf` by safeguarded Newton steps.

        A precomputed grid gives each probability a bracketing cell; Newton
        iterates that leave the cell fall back to bisection.
        """
        p = _check_probs(p)
        shape = p.shape
        p = p.reshape(-1)
        xs, ps = self._grid
        outside = (p < ps[0]) | (p > ps[-1])
        if np.any(outside):
            log.warning(f"{int(outside.sum())} probabilities fall outside "
                        "the kernel quantile bracket; clamping to its ends.")
        idx = np.clip(np.searchsorted(ps, p), 1, xs.size - 1)
        lo, hi = xs[idx - 1], xs[idx]
        span = np.maximum(ps[idx] - ps[idx - 1], np.finfo(float).tiny)
        x = lo + (hi - lo) * np.clip((p - ps[idx - 1]) / span, 0.0, 1.0)
        for _ in range(max_iter):
            f = self.cdf(x) - p
            lo = np.where(f < 0, x, lo)
            hi = np.where(f >= 0, x, hi)
            density = self.pdf(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                candidate = x - f / density
            bad = ~np.isfinite(candidate) | (candidate <= lo) | (candidate
                                                                 >= hi)
            candidate = np.where(bad, 0.5 * (lo + hi), candidate)
            done = np.max(np.abs(candidate - x)) < tol
            x = candidate
            if done:
                break
        x = np.where(p <= ps[0], xs[0], np.where(p >= ps[-1], xs[-1], x))
        return x.reshape(shape)


def kernel_cdf(m: KernelMarginal, x):
    return m.cdf(x)


def kernel_quantile(m: KernelMarginal, p):
    return m.quantile(p)


def pit(m: KernelMarginal, xs):
    """Probability integral transform, kept strictly inside (0, 1)."""
    eps = 1e-12
    return np.clip(m.cdf(xs), eps, 1.0 - eps)
