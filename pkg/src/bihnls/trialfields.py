"""Explicit trial fields and the radial Stein-Tomas constant.

Two families give upper bounds on the quotient:

* Knapp fields: Fourier indicator of a thin annular sector around
  the north pole, ``{||xi|-1| <= sqrt(eps), 1 - xi_N/|xi| <= sqrt(eps)}``.
* Annulus fields: ``w(xi/|xi|) / g_eps(|xi|)`` on ``||xi|-1| <= eps^s``.

The radial constant ``C^rad(p) = |S^{N-1}| / ||1_S^vee||_p^2`` uses the
Bessel profile of the extension of the constant density on the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .bessel import besselj
from .errors import DivergentNormError, DomainError, ResolutionError, ValidationError
from .spectral import Field, SpectralGrid
from .symbol import ExponentSet, SymbolParams, symbol_on_grid

__all__ = [
    "KnappParams",
    "AnnulusParams",
    "CstRadResult",
    "sphere_measure",
    "cap_measure",
    "knapp_support",
    "knapp_field",
    "knapp_lower_bound",
    "concentration_mask",
    "annulus_field",
    "rho_epsilon",
    "sphere_extension_radial",
    "cst_rad",
    "theory_exponent",
    "required_points",
]


def sphere_measure(N: int) -> float:
    """Surface measure of the unit sphere in R^N (``2`` for N = 1)."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


@dataclass(frozen=True)
class KnappParams:
    """Geometry of the Knapp construction.

    Parameters
    ----------
    epsilon : float
        In ``(0, 1)``.
    dim : int
        Spatial dimension, sets ``delta0 = pi/(8N)``.
    """

    epsilon: float
    dim: int = 2

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ValidationError(f"Knapp epsilon must lie in (0, 1), got {self.epsilon}")
        if self.dim < 1:
            raise ValidationError("dim must be positive")

    @property
    def annulus_half_width(self) -> float:
        return math.sqrt(self.epsilon)

    @property
    def cap_threshold(self) -> float:
        """Cap is ``{theta : 1 - theta_N <= cap_threshold}``."""
        return math.sqrt(self.epsilon)

    @property
    def cap_half_angle(self) -> float:
        return math.acos(1.0 - self.cap_threshold)

    @property
    def cap_chordal_radius(self) -> float:
        return math.sqrt(2.0 * self.cap_threshold)

    @property
    def delta0(self) -> float:
        return math.pi / (8 * self.dim)

    @property
    def delta(self) -> float:
        return self.delta0 / 2


@dataclass(frozen=True)
class AnnulusParams:
    """Annulus ``||xi| - 1| <= eps^s`` with ``0 < s < 1/2``."""

    epsilon: float
    s: float = 0.15

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ValidationError(f"annulus epsilon must lie in (0, 1), got {self.epsilon}")
        if not (0 < self.s < 0.5):
            raise ValidationError(f"s must lie in (0, 1/2), got {self.s}")

    @property
    def half_width(self) -> float:
        return self.epsilon**self.s


def required_points(grid: SpectralGrid, width: float, shells: int = 4) -> int:
    """Points per axis needed, at the current spacing, for ``shells`` lattice
    steps across a radial band of the given full width."""
    # dxi = 2 pi / (M h)
    m = math.ceil(shells * 2 * math.pi / (grid.spacing * width))
    return m + m % 2


def _check_band(grid: SpectralGrid, width: float, what: str, shells: int = 4):
    if width / grid.dxi < shells:
        need = required_points(grid, width, shells)
        raise ResolutionError(
            f"{what} of width {width:.4g} spans {width / grid.dxi:.3g} lattice steps "
            f"(< {shells}); use points >= {need} at spacing {grid.spacing:.4g} "
            f"(half_width >= {shells * math.pi / width:.4g})",
            min_points=need,
            min_half_width=shells * math.pi / width,
        )
    if grid.nyquist < 1 + width:
        raise ResolutionError(f"Nyquist {grid.nyquist:.3g} does not cover the {what}")


def knapp_support(grid: SpectralGrid, params: KnappParams) -> np.ndarray:
    """Boolean lattice mask of the annular cap sector (FFT order)."""
    rho = grid.frequency_radius
    xiN = grid.frequencies()[-1] + np.zeros(grid.shape)
    band = np.abs(rho - 1.0) <= params.annulus_half_width
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.where(rho > 0, xiN / rho, -1.0)
    return band & (1.0 - cosang <= params.cap_threshold)


def knapp_field(grid: SpectralGrid, params: KnappParams, poles: str = "north") -> Field:
    """Knapp trial field with Fourier transform the cap-sector indicator.

    Parameters
    ----------
    poles : {"north", "both"}
        ``"both"`` adds the mirror cap around ``-e_N`` (an even field).
    """
    if params.dim != grid.dim:
        raise ValidationError("KnappParams.dim must match the grid")
    _check_band(grid, 2 * params.annulus_half_width, "Knapp annulus")
    mask = knapp_support(grid, params)
    if poles == "both":
        mq = Field(grid, fourier=mask.astype(complex)).reflected().fourier.real > 0.5
        mask = mask | mq
    elif poles != "north":
        raise ValidationError(f"poles must be 'north' or 'both', got {poles!r}")
    if not mask.any():
        raise ResolutionError("Knapp support contains no lattice points")
    return Field(
        grid,
        fourier=mask.astype(complex),
        meta={"kind": "knapp", "epsilon": params.epsilon, "poles": poles},
    )


def cap_measure(epsilon: float, N: int) -> float:
    """``|C_eps|`` on ``S^{N-1}``, ``C_eps = {1 - theta_N <= sqrt(eps)}``."""
    if not (0 < epsilon < 1):
        raise DomainError("epsilon must lie in (0, 1)")
    tmax = math.acos(1.0 - math.sqrt(epsilon))
    if N == 1:
        return 1.0
    if N == 2:
        return 2.0 * tmax
    if N == 3:
        return 2.0 * math.pi * math.sqrt(epsilon)
    val, _ = integrate.quad(lambda t: math.sin(t) ** (N - 2), 0.0, tmax, epsabs=0, epsrel=1e-13)
    return sphere_measure(N - 1) * val


def knapp_lower_bound(epsilon: float, N: int) -> float:
    """Pointwise lower bound for ``|u|`` on the concentration set."""
    se = math.sqrt(epsilon)
    return (
        (math.sqrt(3) - 1)
        * (1 - se) ** (N - 1)
        * se
        * cap_measure(epsilon, N)
        / (math.sqrt(2) * (2 * math.pi) ** (N / 2))
    )


def concentration_mask(grid: SpectralGrid, params: KnappParams) -> np.ndarray:
    """Physical-space box ``|x_N| <= delta eps^(-1/2)``, ``|x_i| <= delta eps^(-1/4)``."""
    xs = grid.coordinates()
    e = params.epsilon
    m = np.abs(xs[-1]) <= params.delta * e**-0.5
    for x in xs[:-1]:
        m = m & (np.abs(x) <= params.delta * e**-0.25)
    return np.broadcast_to(m, grid.shape)


def _weight_values(grid: SpectralGrid, weight) -> tuple[np.ndarray | float, float | None]:
    """Weight on the lattice and its ``L^2(S)`` norm squared when known."""
    N = grid.dim
    if weight is None:
        return 1.0, sphere_measure(N)
    if callable(weight):
        rho = grid.frequency_radius
        safe = np.where(rho > 0, rho, 1.0)
        thetas = [xi / safe + np.zeros(grid.shape) for xi in grid.frequencies()]
        vals = np.asarray(weight(*thetas), dtype=complex) + np.zeros(grid.shape)
        return vals, _sphere_l2_squared(weight, N)
    vals = np.asarray(weight, dtype=complex)
    if vals.shape != grid.shape:
        raise ValidationError("custom weight samples must match the grid shape")
    return vals, None


def _sphere_l2_squared(weight: Callable, N: int, n: int = 512) -> float:
    if N == 1:
        return float(abs(weight(np.array([-1.0, 1.0])) ** 2).sum())
    phi = 2 * np.pi * np.arange(n) / n
    if N == 2:
        v = weight(np.sin(phi), np.cos(phi))
        return float(np.mean(np.abs(v) ** 2) * 2 * np.pi)
    t, wt = np.polynomial.legendre.leggauss(n // 2)
    ct = t[:, None]
    st = np.sqrt(1 - ct**2)
    v = weight(st * np.cos(phi)[None, :], st * np.sin(phi)[None, :], ct + 0 * phi[None, :])
    return float(np.sum(wt[:, None] * np.abs(v) ** 2) * 2 * np.pi / n)


def annulus_field(
    grid: SpectralGrid,
    params: AnnulusParams,
    weight: Callable | np.ndarray | None = None,
) -> Field:
    """Annulus trial field ``w(xi/|xi|) / g_eps(|xi|)``.

    Parameters
    ----------
    weight : None, callable or array
        ``None`` is the constant one. A callable receives the components of
        ``xi/|xi|`` (last argument is the polar axis). An array gives the
        weight directly at every lattice point.
    """
    _check_band(grid, 2 * params.half_width, "annulus")
    g = symbol_on_grid(grid, SymbolParams.from_epsilon(params.epsilon))
    w, wnorm2 = _weight_values(grid, weight)
    band = np.abs(grid.frequency_radius - 1.0) <= params.half_width
    U = np.where(band, w / g, 0.0)
    if not np.any(U != 0):
        raise ValidationError("annulus weight vanishes on the annulus (zero field)")
    meta = {"kind": "annulus", "epsilon": params.epsilon, "s": params.s}
    if wnorm2 is not None:
        meta["weightNormSquared"] = wnorm2
    return Field(grid, fourier=U, meta=meta)


def rho_epsilon(epsilon: float, s: float, N: int) -> float:
    """``int_{1-eps^s}^{1+eps^s} r^(N-1) / g_eps(r) dr`` by adaptive quadrature."""
    t = epsilon**s
    f = lambda r: r ** (N - 1) / ((r * r - 1) ** 2 + epsilon)
    se = math.sqrt(epsilon)
    pts = [p for p in (1 - 5 * se, 1 - se, 1.0, 1 + se, 1 + 5 * se) if 1 - t < p < 1 + t]
    val, _ = integrate.quad(f, 1 - t, 1 + t, points=pts, epsabs=0, epsrel=1e-12, limit=400)
    return float(val)


def sphere_extension_radial(r, N: int) -> np.ndarray:
    """Radial profile of the extension of the constant density on ``S^{N-1}``.

    ``(2 pi)^(-N/2) int_S e^{i x.theta} dsigma = r^(-nu) J_nu(r)``,
    ``nu = (N-2)/2``; the value at the origin is ``(2 pi)^(-N/2) |S^{N-1}|``.

    Parameters
    ----------
    r : array_like or SpectralGrid
        Radii, or a grid whose ``|x|`` is used.
    """
    if N < 2:
        raise DomainError("the sphere extension profile needs N >= 2")
    if isinstance(r, SpectralGrid):
        r = r.radius
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    nu = (N - 2) / 2.0
    origin = 1.0 / (2**nu * math.gamma(nu + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, besselj(nu, r) / np.where(r > 0, r, 1.0) ** nu, origin)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CstRadResult:
    value: float
    quad_error: float
    norm_p: float

    def __float__(self):
        return self.value

    def to_dict(self):
        return {"value": self.value, "quadError": self.quad_error, "normP": self.norm_p}


def _bessel_zeros(nu: float, count: int) -> np.ndarray:
    """First ``count`` positive zeros of ``J_nu`` (McMahon start, Newton polish)."""
    m = np.arange(1, count + 1, dtype=float)
    beta = (m + nu / 2 - 0.25) * math.pi
    mu = 4 * nu * nu
    z = beta - (mu - 1) / (8 * beta) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * beta) ** 3)
    for _ in range(8):
        j = besselj(nu, z)
        dj = nu / z * j - besselj(nu + 1, z)
        z = z - j / dj
    return z


def _abs_moment(p: float) -> float:
    """Mean of ``|cos t|^p`` over a period."""
    return math.gamma((p + 1) / 2) / (math.sqrt(math.pi) * math.gamma(p / 2 + 1))


def _profile_integral(p: float, N: int, zeros: int) -> float:
    nu = (N - 2) / 2.0
    z = np.concatenate([[0.0], _bessel_zeros(nu, zeros)])
    t, w = np.polynomial.legendre.leggauss(32)
    a, b = z[:-1, None], z[1:, None]
    r = 0.5 * (b - a) * t[None, :] + 0.5 * (a + b)
    f = np.abs(sphere_extension_radial(r, N)) ** p * r ** (N - 1)
    body = float(np.sum(0.5 * (b - a) * (w[None, :] * f)))
    # beyond the last zero use the mean of the envelope (2/pi)^(p/2) r^(-e)
    e = (p - 2) * (N - 1) / 2
    R = z[-1]
    tail = (2 / math.pi) ** (p / 2) * _abs_moment(p) * R ** (1 - e) / (e - 1)
    return body + tail


def cst_rad(p: float, N: int, zeros: int = 4000) -> CstRadResult:
    """Radial Stein-Tomas constant ``|S^{N-1}| / ||r^-nu J_nu||_p^2``.

    The ``L^p`` norm is a Gauss-Legendre sum over the intervals between
    consecutive Bessel zeros, closed by the averaged asymptotic tail. The
    reported error compares against half as many intervals.
    """
    if N < 2:
        raise DomainError("cst_rad needs N >= 2")
    prad = 2 * N / (N - 1)
    if not p > prad:
        raise DivergentNormError(f"||1_S^vee||_p diverges for p <= {prad:g} (N={N}), got p={p}")
    ExponentSet(N, p)
    omega = sphere_measure(N)
    I1 = _profile_integral(p, N, zeros)
    I0 = _profile_integral(p, N, zeros // 2)
    norm_p = (omega * I1) ** (1 / p)
    value = omega / norm_p**2
    rel = abs(I1 - I0) / I1 * (2 / p)
    return CstRadResult(float(value), float(rel), float(norm_p))


def theory_exponent(p: float, N: int) -> float:
    """Exponent of ``eps`` in the small-``eps`` rate of the full quotient."""
    ex = ExponentSet(N, p)
    if N >= 2 and p >= ex.two_star_st:
        return 0.5
    return 0.75 + 1 / (2 * p) - (N / 2) * (0.5 - 1 / p)
