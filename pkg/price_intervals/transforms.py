"""Partial-autocorrelation reparameterizations.

Any vector with entries in (-1, 1) maps to a stationary AR polynomial
(Durbin-Levinson) and to a positive definite Toeplitz correlation sequence,
so optimizers can work in unconstrained space.
"""
from typing import Sequence

import numpy as np


def pacf_to_ar(pacf: Sequence[float]) -> np.ndarray:
    """AR coefficients whose partial autocorrelations are ``pacf``."""
    phi = np.zeros(0)
    for k, r in enumerate(np.asarray(pacf, dtype=float)):
        phi = np.concatenate([phi - r * phi[::-1], [r]]) if k else np.array(
            [r])
    return phi


def ar_to_pacf(phi: Sequence[float]) -> np.ndarray:
    """Inverse of :func:`pacf_to_ar` for stationary coefficients."""
    phi = np.asarray(phi, dtype=float).copy()
    pacf = np.zeros(len(phi))
    for k in range(len(phi) - 1, -1, -1):
        r = phi[k]
        pacf[k] = r
        if k:
            phi = (phi[:k] + r * phi[:k][::-1]) / (1.0 - r * r)
    return pacf


def pacf_to_acf(pacf: Sequence[float]) -> np.ndarray:
    """Autocorrelations rho_1 … rho_p of a process with the given pacf."""
    pacf = np.asarray(pacf, dtype=float)
    rho = np.zeros(len(pacf))
    phi = np.zeros(0)
    for k, r in enumerate(pacf):
        if k == 0:
            rho[0] = r
            phi = np.array([r])
            continue
        # rho_{k+1} from the order-k Yule-Walker coefficients.
        lagged = rho[:k][::-1]
        rho[k] = phi @ lagged + r * (1.0 - phi @ rho[:k])
        phi = np.concatenate([phi - r * phi[::-1], [r]])
    return rho


def acf_to_pacf(rho: Sequence[float]) -> np.ndarray:
    """Durbin-Levinson partial autocorrelations of ``rho``."""
    rho = np.asarray(rho, dtype=float)
    pacf = np.zeros(len(rho))
    phi = np.zeros(0)
    for k in range(len(rho)):
        if k == 0:
            r = rho[0]
        else:
            r = (rho[k] - phi @ rho[:k][::-1]) / (1.0 - phi @ rho[:k])
        pacf[k] = r
        phi = np.concatenate([phi - r * phi[::-1], [r]]) if k else np.array(
            [r])
    return pacf


def ar_is_stationary(phi: Sequence[float]) -> bool:
    """True if all roots of 1 - phi_1 z - … - phi_p z^p lie outside |z|=1."""
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0 or not np.any(phi):
        return True
    roots = np.roots(np.concatenate([-phi[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1.0))
