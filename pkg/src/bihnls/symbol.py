"""Fourier symbol of ``Delta^2 + 2a Delta + b`` and the functionals built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StructuralError, ValidationError
from .spectral import Field, SpectralGrid, lp_norm

__all__ = [
    "SymbolParams",
    "ExponentSet",
    "symbol_value",
    "symbol_on_grid",
    "quadratic_form",
    "energy",
    "least_energy_level",
    "mountain_pass_level",
    "rayleigh_quotient",
]


@dataclass(frozen=True)
class SymbolParams:
    """Coefficients ``(a, b)`` of ``g(r) = r^4 - 2 a r^2 + b``.

    Requires ``a > 0`` and ``b > a^2``. Use :meth:`from_epsilon` for the
    normalized form ``a = 1, b = 1 + eps``.
    """

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValidationError("symbol coefficients must be finite")
        if a <= 0:
            raise ValidationError(f"a must be positive, got {a}")
        if not b > a * a:
            raise ValidationError(f"need b > a^2 for a positive form, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_epsilon(cls, epsilon: float) -> "SymbolParams":
        if not epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {epsilon}")
        return cls(1.0, 1.0 + float(epsilon))

    @property
    def gap(self) -> float:
        """``b - a^2``, the minimum of the symbol."""
        return self.b - self.a * self.a

    @property
    def epsilon(self) -> float:
        """``eps`` of the rescaled problem with ``a = 1``."""
        return self.gap / (self.a * self.a)

    def normalized(self) -> "SymbolParams":
        """Equivalent parameters with ``a = 1``."""
        return SymbolParams.from_epsilon(self.epsilon)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "epsilon": self.epsilon}


@dataclass(frozen=True)
class ExponentSet:
    """Dimension and Lebesgue exponent with the derived critical exponents."""

    N: int
    p: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not (2 < self.p < self.two_star):
            raise ValidationError(f"p must lie in (2, {self.two_star}), got {self.p}")

    @property
    def two_star(self) -> float:
        return 2 * self.N / (self.N - 4) if self.N > 4 else math.inf

    @property
    def two_star_st(self) -> float:
        if self.N < 2:
            raise DomainError("the Stein-Tomas exponent needs N >= 2")
        return (2 * self.N + 2) / (self.N - 1)

    @property
    def two_star_rad(self) -> float:
        if self.N < 2:
            raise DomainError("the radial exponent needs N >= 2")
        return 2 * self.N / (self.N - 1)


def symbol_value(params: SymbolParams, r):
    """``(r^2 - a)^2 + (b - a^2)`` evaluated in completed-square form."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    out = (r * r - params.a) ** 2 + params.gap
    return float(out) if out.ndim == 0 else out


def symbol_on_grid(grid: SpectralGrid, params: SymbolParams) -> np.ndarray:
    """Symbol sampled on the frequency lattice (FFT order)."""
    # |xi|^2 from integers keeps the completed square exact near the sphere
    xi2 = grid.shell_index * grid.dxi**2
    return (xi2 - params.a) ** 2 + params.gap


def quadratic_form(field: Field, params: SymbolParams, grid: SpectralGrid | None = None) -> float:
    """Lattice sum ``sum_k g(|xi_k|) |u^_k|^2 (pi/L)^N``."""
    if grid is not None and grid != field.grid:
        raise StructuralError("field lives on a different grid")
    g = symbol_on_grid(field.grid, params)
    return float(np.sum(g * np.abs(field.fourier) ** 2) * field.grid.dual_cell_volume)


def energy(field: Field, params: SymbolParams, p: float) -> float:
    """``q(u)/2 - ||u||_p^p / p``."""
    if not p > 2:
        raise DomainError(f"p must exceed 2, got {p}")
    return 0.5 * quadratic_form(field, params) - lp_norm(field, p) ** p / p


def least_energy_level(R: float, p: float) -> float:
    """``R^(p/(p-2))``, the level without the ray-maximization prefactor.

    Maximizing ``E(t u)`` over ``t`` directly gives this times
    ``(p-2)/(2p)``; see :func:`mountain_pass_level`.
    """
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    if not p > 2:
        raise DomainError(f"p must exceed 2, got {p}")
    return R ** (p / (p - 2))


def mountain_pass_level(R: float, p: float) -> float:
    """``sup_t E(t u)`` for ``||u||_p = 1`` and ``q(u) = R``.

    Equals ``(p-2)/(2p) * R^(p/(p-2))``.
    """
    return (p - 2) / (2 * p) * least_energy_level(R, p)


def rayleigh_quotient(field: Field, params: SymbolParams, p: float) -> float:
    """``q(u) / ||u||_p^2``."""
    n = lp_norm(field, p)
    if n == 0:
        raise DomainError("quotient of the zero field is undefined")
    return quadratic_form(field, params) / n**2
