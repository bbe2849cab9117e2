"""Bessel functions of the first kind by series and Hankel expansion.

Only ``J_nu`` for real ``nu >= 0`` is needed. Below ``r = 12`` the power
series is summed directly; above, the large-argument Hankel expansion is
truncated at its smallest term.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = ["besselj", "SERIES_CUTOFF"]

SERIES_CUTOFF = 12.0
_SERIES_TERMS = 80
_HANKEL_TERMS = 40


def _series(nu: float, r: np.ndarray) -> np.ndarray:
    x2 = -(r * r) / 4.0
    term = np.full_like(r, 1.0 / math.gamma(nu + 1.0))
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * x2 / (k * (k + nu))
        total += term
        if np.all(np.abs(term) <= 1e-18 * np.maximum(np.abs(total), 1e-300)):
            break
    return total * (r / 2.0) ** nu


def _hankel(nu: float, r: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    inv8r = 1.0 / (8.0 * r)
    P = np.ones_like(r)
    Q = np.zeros_like(r)
    a = np.ones_like(r)  # a_k(nu) / (8 r)^k
    last = np.full_like(r, np.inf)
    active = np.ones(r.shape, dtype=bool)
    for k in range(1, _HANKEL_TERMS):
        a = a * (mu - (2 * k - 1) ** 2) / k * inv8r
        mag = np.abs(a)
        # stop each point once terms start growing (asymptotic series)
        active &= mag < last
        last = np.where(active, mag, last)
        contrib = np.where(active, a, 0.0)
        if k % 2 == 1:
            Q += ((-1) ** ((k - 1) // 2)) * contrib
        else:
            P += ((-1) ** (k // 2)) * contrib
        if not active.any():
            break
    chi = r - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * r)) * (P * np.cos(chi) - Q * np.sin(chi))


def besselj(nu: float, r) -> np.ndarray:
    """``J_nu(r)`` for ``nu >= 0`` and ``r >= 0``.

    Parameters
    ----------
    nu : float
        Order.
    r : array_like
        Nonnegative arguments.
    """
    if nu < 0:
        raise DomainError("only nonnegative orders are supported")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise DomainError("Bessel argument must be nonnegative")
    flat = np.atleast_1d(r).ravel()
    out = np.empty_like(flat)
    small = flat < SERIES_CUTOFF
    if small.any():
        out[small] = _series(nu, flat[small])
    if (~small).any():
        out[~small] = _hankel(nu, flat[~small])
    return out.reshape(r.shape) if r.ndim else float(out[0])
