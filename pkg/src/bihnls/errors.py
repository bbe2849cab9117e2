"""Exception hierarchy shared across the package."""


class BihnlsError(Exception):
    """Base class for all package errors."""


class ValidationError(BihnlsError, ValueError):
    """Invalid parameters or configuration."""


class DomainError(BihnlsError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ResolutionError(BihnlsError, ValueError):
    """Grid too coarse to resolve the structure being built.

    Attributes
    ----------
    min_points : int or None
        Smallest admissible points-per-axis at the current spacing.
    min_half_width : float or None
        Smallest admissible box half-width.
    """

    def __init__(self, message, min_points=None, min_half_width=None):
        super().__init__(message)
        self.min_points = min_points
        self.min_half_width = min_half_width


class StructuralError(BihnlsError, ValueError):
    """Objects that must share a grid do not."""


class DivergentNormError(DomainError):
    """Requested L^p norm is infinite."""


class InsufficientDataError(BihnlsError, ValueError):
    """Too few valid points for a fit."""


class NumericalFailure(BihnlsError, RuntimeError):
    """NaN, overflow or breakdown during iteration.

    Attributes
    ----------
    trace : list
        Per-iteration diagnostics collected before the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class UnavailableError(BihnlsError, LookupError):
    """Requested artifact (for example a field dump) does not exist."""
