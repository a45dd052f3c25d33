"""Copula-based Markov model with a t-copula and a kernel marginal.

Observations are mapped to uniforms through a Gaussian-kernel marginal and
the temporal dependence of ``(u_t, u_{t-1}, ..., u_{t-p})`` is a t-copula with
a Toeplitz correlation matrix. Forecasts simulate from the conditional copula
and map the draws back through the marginal quantile function.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg, special, stats
from scipy.optimize import minimize

from price_intervals import _logger as log
from price_intervals.dists import (KernelMarginal, kernel_quantile, pit,
                                   student_t_cdf, student_t_logpdf)
from price_intervals.errors import ModelFitError
from price_intervals.transforms import pacf_to_acf
from price_intervals.util import read_record, write_record

NU_BOUNDS = (2.1, 100.0)
MAX_ORDER = 5
_PACF_BOUND = 0.999
# Keeps mapped uniforms away from the exact ends of (0, 1).
_EDGE = 1e-12


@dataclass(frozen=True, eq=False)
class CopulaParams:
    """Fitted t-copula Markov model.

    Args:
        nu (float): Copula degrees of freedom.
        rho (tuple): Lag correlations rho_1 ... rho_p of the Toeplitz matrix.
        marginal (KernelMarginal): Kernel marginal of the observations.
    """
    nu: float
    rho: Tuple[float, ...]
    marginal: KernelMarginal

    def __post_init__(self):
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        if not 1 <= self.p <= MAX_ORDER:
            raise ValueError(f"Markov order must lie in [1, {MAX_ORDER}], "
                             f"got {self.p}.")
        if not self.nu > 2:
            raise ValueError(f"Copula nu must be > 2, got {self.nu}.")
        try:
            linalg.cholesky(self.sigma, lower=True)
        except linalg.LinAlgError:
            raise ValueError(f"Lag correlations {self.rho} do not form a "
                             "positive definite Toeplitz matrix.")

    @property
    def p(self) -> int:
        return len(self.rho)

    @cached_property
    def sigma(self) -> np.ndarray:
        return linalg.toeplitz(np.r_[1.0, self.rho])

    @cached_property
    def _conditional(self) -> Tuple[np.ndarray, np.ndarray, float]:
        # Partition of sigma into the current value and its p lags.
        s12 = self.sigma[0, 1:]
        s22_inv = np.linalg.inv(self.sigma[1:, 1:])
        weights = s22_inv @ s12
        residual = 1.0 - s12 @ weights
        return weights, s22_inv, float(residual)

    def to_record(self) -> Dict[str, float]:
        record = {"p": self.p, "nu": float(self.nu)}
        record.update({f"rho_{k + 1}": r for k, r in enumerate(self.rho)})
        record.update(
            bandwidth=float(self.marginal.bandwidth),
            n_sample=int(self.marginal.sample.size))
        return record

    @classmethod
    def from_record(cls, record: Dict[str, str],
                    sample: Sequence[float]) -> "CopulaParams":
        p = int(record["p"])
        marginal = KernelMarginal.fit(sample, float(record["bandwidth"]))
        if marginal.sample.size != int(record["n_sample"]):
            raise ValueError(
                f"Marginal sample has {marginal.sample.size} values, the "
                f"record expects {record['n_sample']}.")
        return cls(
            nu=float(record["nu"]),
            rho=tuple(float(record[f"rho_{k + 1}"]) for k in range(p)),
            marginal=marginal)


class IntervalForecast(NamedTuple):
    lower: float
    upper: float


def save(params: CopulaParams, path: str):
    """Writes the parameter record to ``path`` and the marginal sample to
    ``path + ".marginal"``."""
    write_record(path, "copula", params.to_record())
    np.savetxt(path + ".marginal", params.marginal.sample, fmt="%.17g")


def load(path: str) -> CopulaParams:
    record = read_record(path, "copula")
    sample = np.loadtxt(path + ".marginal", dtype=float, ndmin=1)
    return CopulaParams.from_record(record, sample)


def _quantiles(u, nu: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)) or np.any(np.isnan(u)):
        raise ValueError("Copula arguments must lie strictly inside (0, 1).")
    return special.stdtrit(nu, u)


def t_copula_logdensity(u, nu: float, sigma) -> np.ndarray:
    """Log-density of the t-copula with ``nu`` dof and correlation ``sigma``.

    ``u`` is a single point of shape ``(d,)`` or a batch of shape ``(n, d)``;
    the result is a float or an array of length ``n`` respectively.
    """
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0]
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != d:
        raise ValueError(
            f"Expected points of dimension {d}, got {u.shape[1]}.")
    z = _quantiles(u, nu)
    chol = linalg.cholesky(sigma, lower=True)
    w = linalg.solve_triangular(chol, z.T, lower=True)
    quad = np.sum(w * w, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    joint = (special.gammaln(0.5 * (nu + d)) - special.gammaln(0.5 * nu) -
             0.5 * d * np.log(nu * np.pi) - 0.5 * log_det - 0.5 *
             (nu + d) * np.log1p(quad / nu))
    out = joint - np.sum(student_t_logpdf(z, nu), axis=1)
    return float(out[0]) if single else out


def kendall_tau(rho: float) -> float:
    """Kendall's tau of an elliptical copula with correlation ``rho``."""
    return float(2.0 / np.pi * np.arcsin(rho))


def _windows(u: np.ndarray, p: int) -> np.ndarray:
    # Rows (u_t, u_{t-1}, ..., u_{t-p}).
    return sliding_window_view(u, p + 1)[:, ::-1]


def loglik(params: CopulaParams, xs: Sequence[float]) -> float:
    """Copula log-likelihood of ``xs`` under the fitted marginal."""
    u = pit(params.marginal, np.asarray(xs, dtype=float))
    if u.size <= params.p:
        raise ValueError(f"Need more than {params.p} observations, "
                         f"got {u.size}.")
    return float(
        np.sum(t_copula_logdensity(_windows(u, params.p), params.nu,
                                   params.sigma)))


def _sigma_from_pacf(pacf: np.ndarray) -> np.ndarray:
    return linalg.toeplitz(np.r_[1.0, pacf_to_acf(pacf)])


def fit(xs: Sequence[float], p: int = 1) -> CopulaParams:
    """Semiparametric maximum likelihood.

    The marginal is a kernel estimate on all of ``xs``; the copula parameters
    maximize the log-density of consecutive ``(p + 1)``-tuples of PIT values.
    Lag correlations are searched through their partial autocorrelations so
    every candidate matrix is positive definite.

    Raises:
        ModelFitError: Every start ended with a non-finite objective.
    """
    xs = np.asarray(xs, dtype=float)
    if not 1 <= p <= MAX_ORDER:
        raise ValueError(f"Markov order must lie in [1, {MAX_ORDER}], "
                         f"got {p}.")
    if xs.size <= 10 * (p + 2):
        raise ValueError(f"A copula of order {p} needs more than "
                         f"{10 * (p + 2)} observations, got {xs.size}.")
    marginal = KernelMarginal.fit(xs)
    windows = _windows(pit(marginal, xs), p)
    n_obs = windows.shape[0]

    def objective(x):
        try:
            value = t_copula_logdensity(windows, x[0],
                                        _sigma_from_pacf(x[1:]))
        except (ValueError, linalg.LinAlgError):
            return np.inf
        total = float(np.sum(value))
        return -total / n_obs if np.isfinite(total) else np.inf

    tau, _ = stats.kendalltau(windows[:, 0], windows[:, 1])
    rho_start = np.clip(np.sin(0.5 * np.pi * tau), -0.9, 0.9)
    bounds = [NU_BOUNDS] + [(-_PACF_BOUND, _PACF_BOUND)] * p
    best = None
    for nu_start in (8.0, 4.0):
        start = np.r_[nu_start, rho_start, np.zeros(p - 1)]
        with np.errstate(all="ignore"):
            result = minimize(
                objective, start, method="L-BFGS-B", bounds=bounds)
        log.debug(f"copula start nu={nu_start}: objective {result.fun:.6f}")
        if np.isfinite(result.fun) and (best is None or result.fun < best.fun):
            best = result
    if best is None:
        raise ModelFitError(f"t-copula fit of order {p} failed", {
            "n_obs": n_obs,
            "kendall_tau": float(tau)
        })

    nu = float(best.x[0])
    if nu >= NU_BOUNDS[1] - 1e-6:
        log.warning(f"copula nu reached its upper bound {NU_BOUNDS[1]}; the "
                    "dependence is close to Gaussian.")
    params = CopulaParams(
        nu=nu, rho=tuple(pacf_to_acf(best.x[1:])), marginal=marginal)
    log.info(f"fitted t-copula of order {p} on {xs.size} points: nu "
             f"{nu:.3f}, rho_1 {params.rho[0]:.4f}, loglik "
             f"{-best.fun * n_obs:.4f}")
    return params


def _step(params: CopulaParams, z_lags: np.ndarray,
          t_draws: np.ndarray) -> np.ndarray:
    """Maps standard t_{nu+p} draws to the conditional law in z-space."""
    weights, s22_inv, residual = params._conditional
    nu, p = params.nu, params.p
    scale = np.sqrt((nu + z_lags @ s22_inv @ z_lags) / (nu + p) * residual)
    return weights @ z_lags + scale * t_draws


def _uniforms(rng: np.random.Generator, size) -> np.ndarray:
    return np.clip(rng.uniform(size=size), _EDGE, 1.0 - _EDGE)


def conditional_sample(params: CopulaParams,
                       lag_pits: Sequence[float],
                       n: int,
                       seed: Optional[int] = None) -> np.ndarray:
    """Draws ``n`` uniforms from the copula conditional on the last ``p`` PIT
    values, given most recent first.

    The conditional of a multivariate t given some of its components is a
    shifted and rescaled t with ``nu + p`` degrees of freedom.
    """
    lag_pits = np.asarray(lag_pits, dtype=float).reshape(-1)
    if lag_pits.size != params.p:
        raise ValueError(f"Expected {params.p} lag PIT values, "
                         f"got {lag_pits.size}.")
    z_lags = _quantiles(lag_pits, params.nu)
    rng = np.random.default_rng(seed)
    t_draws = special.stdtrit(params.nu + params.p, _uniforms(rng, n))
    z = _step(params, z_lags, t_draws)
    return np.clip(student_t_cdf(z, params.nu), _EDGE, 1.0 - _EDGE)


def forecast_interval(params: CopulaParams,
                      history: Sequence[float],
                      alpha: float,
                      n: int = 10000,
                      seed: Optional[int] = None) -> IntervalForecast:
    """Empirical (alpha/2, 1 - alpha/2) quantiles of ``n`` simulated values.

    The marginal quantile function is monotone, so only the order statistics
    that the interpolated sample quantiles need are mapped through it.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}.")
    history = np.asarray(history, dtype=float)
    if history.size < params.p:
        raise ValueError(f"Need at least {params.p} past values, got "
                         f"{history.size}.")
    lag_pits = pit(params.marginal, history[::-1][:params.p])
    v = np.sort(conditional_sample(params, lag_pits, n, seed))

    position = (n - 1) * np.array([alpha / 2, 1 - alpha / 2])
    below = np.floor(position).astype(int)
    above = np.minimum(below + 1, n - 1)
    mapped = kernel_quantile(params.marginal, np.r_[v[below], v[above]])
    lo_x, hi_x = mapped[:2], mapped[2:]
    lower, upper = lo_x + (position - below) * (hi_x - lo_x)
    return IntervalForecast(lower=float(lower), upper=float(upper))


def simulate_chain(params: CopulaParams,
                   n: int,
                   seed: Optional[int] = None,
                   burn_in: int = 200) -> np.ndarray:
    """Simulates ``n`` observations of the Markov chain after ``burn_in``
    discarded steps."""
    rng = np.random.default_rng(seed)
    p, nu = params.p, params.nu
    total = n + burn_in
    start = special.stdtrit(nu, _uniforms(rng, p))
    t_draws = special.stdtrit(nu + p, _uniforms(rng, total))
    z = np.empty(total + p)
    z[:p] = start
    for t in range(p, total + p):
        z[t] = _step(params, z[t - p:t][::-1], t_draws[t - p])
    v = np.clip(student_t_cdf(z[p + burn_in:], nu), _EDGE, 1.0 - _EDGE)
    return kernel_quantile(params.marginal, v)
