"""Pseudo-spectral laboratory for ground states of the biharmonic NLS."""

from .errors import (
    DivergentNormError,
    DomainError,
    InsufficientDataError,
    NumericalFailure,
    ResolutionError,
    StructuralError,
    ValidationError,
)
from .spectral import Field, SpectralGrid, SymmetryReport, default_grid, lp_norm, radialize, symmetry_report
from .symbol import ExponentSet, SymbolParams, quadratic_form, rayleigh_quotient

__version__ = "0.1.0"
