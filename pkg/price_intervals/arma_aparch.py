"""ARMA(p, q) mean with power-1 APARCH(1, 1) volatility and skew-t noise.

The model is

    x_t = mu + sum_i phi_i x_{t-i} + sum_j theta_j eps_{t-j} + eps_t
    eps_t = sigma_t * gamma_t,  gamma_t ~ SkewT(nu, xi)
    sigma_t = a0 + a1 sigma_{t-1} + a2 |eps_{t-1}|

Differencing happens upstream; feed this module already differenced data.
"""
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from statsmodels.tools.numdiff import approx_hess

from price_intervals import _logger as log
from price_intervals.dists import SkewT
from price_intervals.errors import FilterDivergenceError, ModelFitError
from price_intervals.transforms import (ar_is_stationary, ar_to_pacf,
                                        pacf_to_ar)
from price_intervals.util import read_record, write_record

INNOVATIONS = ("skewt", "t")
_PENALTY = 1e10
_MAX_LOG_NU = 6.0
_NU_FLOOR = 2.05


@dataclass(frozen=True)
class ArmaAparchParams:
    """Mean-equation, volatility-equation and innovation parameters.

    ``a1`` and ``a2`` may be exactly 0: a1 = 0 makes sigma_t depend on the
    last shock only and a2 = 0 gives a deterministic volatility path that
    settles at a0 / (1 - a1).
    """
    mu: float
    phi: Tuple[float, ...] = ()
    theta: Tuple[float, ...] = ()
    a0: float = 0.1
    a1: float = 0.1
    a2: float = 0.1
    nu: float = 8.0
    xi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))
        object.__setattr__(self, "theta",
                           tuple(float(v) for v in self.theta))
        if not self.a0 > 0:
            raise ValueError(f"a0 must be > 0, got {self.a0}.")
        if self.a1 < 0 or self.a2 < 0 or not self.a1 + self.a2 < 1:
            raise ValueError("Volatility coefficients need a1, a2 >= 0 and "
                             f"a1 + a2 < 1, got a1={self.a1}, a2={self.a2}.")
        if not ar_is_stationary(self.phi):
            raise ValueError(f"AR coefficients {self.phi} are not stationary.")
        if not self.nu > 2 or not self.xi > 0:
            raise ValueError(f"Innovation needs nu > 2 and xi > 0, got "
                             f"nu={self.nu}, xi={self.xi}.")

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def q(self) -> int:
        return len(self.theta)

    @property
    def innovation(self) -> SkewT:
        return SkewT(self.nu, self.xi)

    def to_record(self) -> Dict[str, float]:
        record = {"mu": self.mu, "p": self.p, "q": self.q}
        record.update({f"phi_{i + 1}": v for i, v in enumerate(self.phi)})
        record.update({f"theta_{j + 1}": v for j, v in enumerate(self.theta)})
        record.update(
            a0=self.a0, a1=self.a1, a2=self.a2, nu=self.nu, xi=self.xi)
        return record

    @classmethod
    def from_record(cls, record: Dict[str, str]) -> "ArmaAparchParams":
        p, q = int(record["p"]), int(record["q"])
        return cls(
            mu=float(record["mu"]),
            phi=tuple(float(record[f"phi_{i + 1}"]) for i in range(p)),
            theta=tuple(float(record[f"theta_{j + 1}"]) for j in range(q)),
            **{
                name: float(record[name])
                for name in ("a0", "a1", "a2", "nu", "xi")
            })


@dataclass(frozen=True, eq=False)
class FilterState:
    residuals: np.ndarray
    sigmas: np.ndarray
    loglik: float
    burn_in: int


class OneStepForecast(NamedTuple):
    lower: float
    upper: float
    sigma: float
    mean: float


class SimulatedPath(NamedTuple):
    values: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray


def filter(params: ArmaAparchParams, xs: Sequence[float]) -> FilterState:
    """Runs the mean and volatility recursions over ``xs``.

    Residuals before max(p, q) are zero, sigma starts at the mean absolute
    deviation of the demeaned data and the first max(p, q) + 1 terms are
    left out of the log-likelihood.
    """
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    r = max(params.p, params.q)
    if n <= r:
        raise ValueError(f"filter needs more than {r} observations, got {n}.")

    u = xs[r:] - params.mu
    for i, phi_i in enumerate(params.phi, start=1):
        u = u - phi_i * xs[r - i:n - i]
    eps = np.zeros(n)
    eps[r:] = lfilter([1.0], np.r_[1.0, params.theta], u)

    sigma0 = float(np.mean(np.abs(xs - xs.mean())))
    if sigma0 <= 0:
        sigma0 = params.a0 / (1.0 - params.a1)
    sigmas = np.empty(n)
    sigmas[0] = sigma0
    if n > 1:
        drive = params.a0 + params.a2 * np.abs(eps[:-1])
        sigmas[1:], _ = lfilter([1.0], [1.0, -params.a1],
                                drive,
                                zi=[params.a1 * sigma0])

    if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(sigmas))):
        raise FilterDivergenceError(
            "ARMA-APARCH recursion produced non-finite values; the "
            "parameters are likely divergent.")

    burn_in = r + 1
    tail_sigmas = sigmas[burn_in:]
    terms = (params.innovation.logpdf(eps[burn_in:] / tail_sigmas) -
             np.log(tail_sigmas))
    loglik = float(np.sum(terms))
    if not np.isfinite(loglik):
        raise FilterDivergenceError(
            "ARMA-APARCH log-likelihood is not finite.")
    return FilterState(
        residuals=eps, sigmas=sigmas, loglik=loglik, burn_in=burn_in)


def loglik(params: ArmaAparchParams, xs: Sequence[float]) -> float:
    return filter(params, xs).loglik


def n_free_params(params: ArmaAparchParams, innovation: str = "skewt") -> int:
    return params.p + params.q + (5 if innovation == "skewt" else 4)


def aic(params: ArmaAparchParams,
        xs: Sequence[float],
        innovation: str = "skewt") -> float:
    """``2 k - 2 loglik`` with k = p + q + 5 free parameters."""
    return 2.0 * n_free_params(params, innovation) - 2.0 * loglik(params, xs)


def _softmax_pair(e1: float, e2: float) -> Tuple[float, float]:
    top = max(e1, e2, 0.0)
    w1, w2, w0 = np.exp(e1 - top), np.exp(e2 - top), np.exp(-top)
    total = w0 + w1 + w2
    return w1 / total, w2 / total


def _unpack(x: np.ndarray, p: int, q: int,
            innovation: str) -> ArmaAparchParams:
    mu = x[0]
    phi = pacf_to_ar(np.tanh(x[1:1 + p]))
    theta = -pacf_to_ar(np.tanh(x[1 + p:1 + p + q]))
    k = 1 + p + q
    a1, a2 = _softmax_pair(x[k + 1], x[k + 2])
    nu = _NU_FLOOR + np.exp(min(x[k + 3], _MAX_LOG_NU))
    xi = np.exp(x[k + 4]) if innovation == "skewt" else 1.0
    return ArmaAparchParams(
        mu=mu,
        phi=tuple(phi),
        theta=tuple(theta),
        a0=float(np.exp(x[k])),
        a1=a1,
        a2=a2,
        nu=nu,
        xi=xi)


def _pack(params: ArmaAparchParams, innovation: str) -> np.ndarray:
    rest = 1.0 - params.a1 - params.a2
    values = [params.mu]
    values += list(np.arctanh(np.clip(ar_to_pacf(params.phi), -0.99, 0.99)))
    values += list(
        np.arctanh(np.clip(ar_to_pacf(-np.asarray(params.theta)), -0.99,
                           0.99)))
    values += [
        np.log(params.a0),
        np.log(max(params.a1, 1e-6) / rest),
        np.log(max(params.a2, 1e-6) / rest),
        np.log(params.nu - _NU_FLOOR)
    ]
    if innovation == "skewt":
        values.append(np.log(params.xi))
    return np.asarray(values, dtype=float)


def _initial_params(z: np.ndarray, p: int, q: int) -> ArmaAparchParams:
    """Moment-based starting point for standardized data."""
    centered = z - z.mean()
    acf1 = float(np.dot(centered[1:], centered[:-1]) / np.dot(
        centered, centered))
    pacf = np.zeros(p)
    if p:
        pacf[0] = np.clip(acf1, -0.9, 0.9)
    a1, a2 = 0.7, 0.2
    sigma_bar = float(np.std(z))
    # E|gamma| of a unit-variance t with nu = 8 is about 0.75.
    a0 = max(sigma_bar * (1.0 - a1 - 0.75 * a2), 1e-3)
    return ArmaAparchParams(
        mu=float(z.mean()) * (1.0 - (pacf[0] if p else 0.0)),
        phi=tuple(pacf_to_ar(pacf)),
        theta=(0.0, ) * q,
        a0=a0,
        a1=a1,
        a2=a2,
        nu=8.0,
        xi=1.0)


def _rescale(params: ArmaAparchParams, scale: float) -> ArmaAparchParams:
    return ArmaAparchParams(
        mu=params.mu * scale,
        phi=params.phi,
        theta=params.theta,
        a0=params.a0 * scale,
        a1=params.a1,
        a2=params.a2,
        nu=params.nu,
        xi=params.xi)


def min_fit_length(p: int, q: int) -> int:
    """Heuristic minimum sample: 10 observations per parameter, > 30."""
    return max(31, 10 * (p + q + 5))


def fit(xs: Sequence[float],
        p: int = 1,
        q: int = 0,
        innovation: str = "skewt",
        n_starts: int = 5,
        seed: int = 0) -> ArmaAparchParams:
    """Maximum-likelihood fit with multi-start simplex + quasi-Newton search.

    The data are divided by their standard deviation before optimizing and
    the location/scale parameters are mapped back afterwards, so rescaling
    the input rescales mu and a0 and leaves everything else unchanged.

    Args:
        xs (list): Observations, typically first price differences.
        p (int): AR order.
        q (int): MA order.
        innovation (str): ``"skewt"`` or ``"t"`` (xi fixed at 1).
        n_starts (int): Number of starting points; the first is the
            moment-based guess, the rest are seeded jitters of it.
        seed (int): Seed of the jitter.

    Raises:
        ModelFitError: No start produced a finite likelihood.
    """
    if innovation not in INNOVATIONS:
        raise ValueError(f"innovation must be one of {INNOVATIONS}, "
                         f"got {innovation!r}.")
    xs = np.asarray(xs, dtype=float)
    needed = min_fit_length(p, q)
    if xs.size < needed:
        raise ValueError(f"ARMA({p},{q})-APARCH needs at least {needed} "
                         f"observations, got {xs.size}.")
    scale = float(np.std(xs))
    if not scale > 0:
        raise ModelFitError("cannot fit a constant series",
                            {"n_obs": xs.size})
    z = xs / scale
    n_obs = z.size

    def objective(x):
        try:
            return -loglik(_unpack(x, p, q, innovation), z) / n_obs
        except (ValueError, FloatingPointError):
            return _PENALTY

    base = _pack(_initial_params(z, p, q), innovation)
    rng = np.random.default_rng(seed)
    best_fun, best_x, messages = np.inf, None, []
    for start_index in range(max(1, n_starts)):
        start = base if start_index == 0 else base + rng.normal(
            0.0, 0.5, size=base.size)
        with np.errstate(all="ignore"):
            simplex = minimize(
                objective,
                start,
                method="Nelder-Mead",
                options={
                    "maxiter": 400 * base.size,
                    "xatol": 1e-6,
                    "fatol": 1e-10,
                    "adaptive": True
                })
            polished = minimize(
                objective, simplex.x, method="BFGS", options={"gtol": 1e-7})
        for result in (simplex, polished):
            messages.append(f"start {start_index}: {result.message}")
            # Strict comparison keeps the earliest start on ties.
            if np.isfinite(result.fun) and result.fun < best_fun:
                best_fun, best_x = float(result.fun), result.x
        log.debug(f"ARMA({p},{q}) start {start_index}: "
                  f"objective {min(simplex.fun, polished.fun):.6f}")

    if best_x is None or best_fun >= _PENALTY:
        raise ModelFitError(
            f"ARMA({p},{q})-APARCH fit failed on all {n_starts} starts",
            {
                "best_objective": best_fun,
                "n_starts": n_starts,
                "messages": messages
            })
    params = _rescale(_unpack(best_x, p, q, innovation), scale)
    log.info(f"fitted ARMA({p},{q})-APARCH on {n_obs} points: "
             f"loglik {loglik(params, xs):.4f}")
    return params


def _natural_vector(params: ArmaAparchParams,
                    innovation: str) -> Tuple[List[str], np.ndarray]:
    names = ["mu"] + [f"phi_{i + 1}" for i in range(params.p)]
    names += [f"theta_{j + 1}" for j in range(params.q)]
    names += ["a0", "a1", "a2", "nu"]
    if innovation == "skewt":
        names.append("xi")
    return names, np.asarray([params.to_record()[n] for n in names], float)


def standard_errors(params: ArmaAparchParams,
                    xs: Sequence[float],
                    innovation: str = "skewt") -> Dict[str, float]:
    """Asymptotic standard errors from the numerical Hessian at ``params``."""
    xs = np.asarray(xs, dtype=float)
    names, vector = _natural_vector(params, innovation)

    def total_loglik(v):
        values = dict(zip(names, v))
        return loglik(
            ArmaAparchParams(
                mu=values["mu"],
                phi=tuple(values[f"phi_{i + 1}"] for i in range(params.p)),
                theta=tuple(
                    values[f"theta_{j + 1}"] for j in range(params.q)),
                a0=values["a0"],
                a1=values["a1"],
                a2=values["a2"],
                nu=values["nu"],
                xi=values.get("xi", 1.0)), xs)

    hessian = approx_hess(vector, total_loglik)
    covariance = np.linalg.inv(-hessian)
    return dict(zip(names, np.sqrt(np.abs(np.diag(covariance)))))


def select_order(xs: Sequence[float],
                 p_max: int = 2,
                 q_max: int = 2,
                 **fit_kwargs) -> Tuple[int, int]:
    """Grid search of (p, q) by AIC.

    Ties go to the smaller p + q, then to the smaller p.
    """
    if p_max > 5 or q_max > 5 or p_max < 0 or q_max < 0:
        raise ValueError(f"Order bounds must lie in [0, 5], got "
                         f"p_max={p_max}, q_max={q_max}.")
    innovation = fit_kwargs.get("innovation", "skewt")
    table = []
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                params = fit(xs, p, q, **fit_kwargs)
            except (ModelFitError, ValueError) as e:
                log.warning(f"ARMA({p},{q}) skipped in order selection: {e}")
                continue
            table.append((aic(params, xs, innovation), p + q, p, q))
    if not table:
        raise ModelFitError(
            "every candidate order failed to fit", {
                "p_max": p_max,
                "q_max": q_max
            })
    table.sort()
    for value, _, p, q in table:
        log.info(f"AIC ARMA({p},{q}): {value:.4f}")
    return table[0][2], table[0][3]


def forecast_interval(params: ArmaAparchParams, history: Sequence[float],
                      alpha: float) -> OneStepForecast:
    """One-step (1 - alpha) interval from the filtered state of ``history``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}.")
    history = np.asarray(history, dtype=float)
    state = filter(params, history)
    eps = state.residuals
    mean = params.mu
    for i, phi_i in enumerate(params.phi, start=1):
        mean += phi_i * history[-i]
    for j, theta_j in enumerate(params.theta, start=1):
        mean += theta_j * eps[-j]
    sigma = params.a0 + params.a1 * state.sigmas[-1] + params.a2 * abs(
        eps[-1])
    lo_q, hi_q = params.innovation.quantile([alpha / 2, 1 - alpha / 2])
    return OneStepForecast(
        lower=float(mean + sigma * lo_q),
        upper=float(mean + sigma * hi_q),
        sigma=float(sigma),
        mean=float(mean))


def simulate_path(params: ArmaAparchParams,
                  n: int,
                  seed: Optional[int] = None,
                  burn_in: int = 500) -> SimulatedPath:
    """Simulates ``n`` observations together with their conditional mean
    and scale, after discarding ``burn_in`` steps."""
    rng = np.random.default_rng(seed)
    total = n + burn_in
    gamma = params.innovation.rvs(total, rng)
    r = max(params.p, params.q)
    phi, theta = params.phi, params.theta

    abs_moment = float(np.mean(np.abs(gamma)))
    sigma = params.a0 / (1.0 - params.a1 - params.a2 * abs_moment)
    level = params.mu / (1.0 - sum(phi))
    x = np.full(total + r, level)
    eps = np.zeros(total + r)
    means = np.empty(total)
    sigmas = np.empty(total)
    for t in range(r, total + r):
        sigma = params.a0 + params.a1 * sigma + params.a2 * abs(eps[t - 1])
        mean = params.mu
        for i in range(len(phi)):
            mean += phi[i] * x[t - 1 - i]
        for j in range(len(theta)):
            mean += theta[j] * eps[t - 1 - j]
        eps[t] = sigma * gamma[t - r]
        x[t] = mean + eps[t]
        means[t - r] = mean
        sigmas[t - r] = sigma
    return SimulatedPath(
        values=x[r + burn_in:],
        means=means[burn_in:],
        sigmas=sigmas[burn_in:])


def simulate(params: ArmaAparchParams,
             n: int,
             seed: Optional[int] = None,
             burn_in: int = 500) -> np.ndarray:
    return simulate_path(params, n, seed, burn_in).values


def save(params: ArmaAparchParams, path: str):
    write_record(path, "arma_aparch", params.to_record())


def load(path: str) -> ArmaAparchParams:
    return ArmaAparchParams.from_record(read_record(path, "arma_aparch"))
