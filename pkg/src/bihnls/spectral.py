"""Periodic-box discretization of R^N.

The box is ``[-L, L)^N`` sampled at ``x_j = -L + j h`` with ``h = 2L/M``.
Fourier samples live on ``xi_k = (pi/L) k`` in FFT index order. The
transform pair is scaled so that

    sum_j |u_j|^2 h^N = sum_k |u^_k|^2 (pi/L)^N

holds exactly (up to rounding), which makes every quadratic form a plain
lattice sum in frequency space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, ResolutionError, StructuralError, ValidationError

__all__ = [
    "SpectralGrid",
    "Field",
    "SymmetryReport",
    "lp_norm",
    "l2_norm",
    "radialize",
    "symmetry_report",
    "recenter",
    "scaling_map",
    "default_grid",
    "annulus_shell_count",
    "save_field",
    "load_field",
]

BFLD_MAGIC = "BFLD1"
MIN_NYQUIST = 4.0


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid on ``[-L, L)^N``.

    Parameters
    ----------
    dim : int
        Spatial dimension, one of 1, 2, 3.
    half_width : float
        Box half-width ``L``.
    points : int
        Points per axis ``M`` (even, at least 16).
    """

    dim: int
    half_width: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValidationError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise ValidationError(f"half_width must be positive, got {self.half_width}")
        if int(self.points) != self.points or self.points < 16 or self.points % 2:
            raise ValidationError(f"points must be an even integer >= 16, got {self.points}")
        object.__setattr__(self, "points", int(self.points))
        object.__setattr__(self, "half_width", float(self.half_width))
        if self.nyquist < MIN_NYQUIST:
            need = 2 * math.ceil(MIN_NYQUIST * self.half_width / math.pi)
            raise ResolutionError(
                f"Nyquist frequency {self.nyquist:.4g} < {MIN_NYQUIST}; "
                f"need points >= {need} at half_width {self.half_width}",
                min_points=need,
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def dxi(self) -> float:
        """Frequency lattice spacing ``pi/L``."""
        return math.pi / self.half_width

    @property
    def nyquist(self) -> float:
        return math.pi * self.points / (2.0 * self.half_width)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def dual_cell_volume(self) -> float:
        return self.dxi ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Physical coordinates along one axis."""
        return -self.half_width + self.spacing * np.arange(self.points)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer frequency indices along one axis, FFT order."""
        return np.rint(sfft.fftfreq(self.points) * self.points).astype(np.int64)

    @cached_property
    def frequency_axis(self) -> np.ndarray:
        return self.dxi * self.wavenumbers

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Broadcastable physical coordinate arrays."""
        return tuple(_broadcast_axis(self.axis, i, self.dim) for i in range(self.dim))

    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Broadcastable frequency arrays in FFT order."""
        return tuple(_broadcast_axis(self.frequency_axis, i, self.dim) for i in range(self.dim))

    @cached_property
    def radius(self) -> np.ndarray:
        """``|x|`` on the full grid."""
        return np.sqrt(sum(c * c for c in self.coordinates()))

    @cached_property
    def shell_index(self) -> np.ndarray:
        """Squared integer frequency ``|k|^2`` on the full grid."""
        k = self.wavenumbers
        return sum(_broadcast_axis(k, i, self.dim) ** 2 for i in range(self.dim)) + np.zeros(
            self.shape, dtype=np.int64
        )

    @cached_property
    def frequency_radius(self) -> np.ndarray:
        """``|xi|`` on the full lattice, FFT order."""
        return self.dxi * np.sqrt(self.shell_index.astype(float))

    @cached_property
    def _shells(self) -> tuple[np.ndarray, np.ndarray]:
        _, inverse = np.unique(self.shell_index.ravel(), return_inverse=True)
        counts = np.bincount(inverse).astype(float)
        return inverse, counts

    @cached_property
    def _phase_sign(self) -> np.ndarray:
        s = np.where(self.wavenumbers % 2 == 0, 1.0, -1.0)
        out = np.ones(self.shape)
        for i in range(self.dim):
            out = out * _broadcast_axis(s, i, self.dim)
        return out

    @property
    def _scale(self) -> float:
        return (self.spacing / math.sqrt(2.0 * math.pi)) ** self.dim

    def forward(self, u: np.ndarray) -> np.ndarray:
        """Physical samples to Fourier samples."""
        self._check_shape(u)
        return self._scale * self._phase_sign * sfft.fftn(u)

    def inverse(self, uhat: np.ndarray) -> np.ndarray:
        """Fourier samples to physical samples."""
        self._check_shape(uhat)
        return sfft.ifftn(self._phase_sign * uhat) / self._scale

    def _check_shape(self, arr: np.ndarray):
        if arr.shape != self.shape:
            raise StructuralError(f"array shape {arr.shape} does not match grid {self.shape}")

    def to_dict(self) -> dict:
        return {"dim": self.dim, "halfWidth": self.half_width, "pointsPerAxis": self.points}


def _broadcast_axis(v: np.ndarray, i: int, dim: int) -> np.ndarray:
    shape = [1] * dim
    shape[i] = v.size
    return v.reshape(shape)


class Field:
    """Immutable complex grid function with lazy physical/Fourier views.

    Construct with exactly one of ``physical`` or ``fourier``. The other view
    is computed on first access and cached.
    """

    __slots__ = ("grid", "_physical", "_fourier", "sync_state", "meta")

    def __init__(
        self,
        grid: SpectralGrid,
        physical: np.ndarray | None = None,
        fourier: np.ndarray | None = None,
        meta: Mapping[str, Any] | None = None,
    ):
        if (physical is None) == (fourier is None):
            raise ValidationError("give exactly one of physical or fourier")
        self.grid = grid
        self._physical = _frozen(physical, grid) if physical is not None else None
        self._fourier = _frozen(fourier, grid) if fourier is not None else None
        self.sync_state = "physical" if physical is not None else "fourier"
        self.meta = dict(meta or {})

    @classmethod
    def from_physical(cls, grid, values, meta=None) -> "Field":
        return cls(grid, physical=values, meta=meta)

    @classmethod
    def from_fourier(cls, grid, values, meta=None) -> "Field":
        return cls(grid, fourier=values, meta=meta)

    @classmethod
    def from_function(cls, grid, func, meta=None) -> "Field":
        """Sample ``func(*coords)`` on the grid."""
        vals = np.broadcast_to(func(*grid.coordinates()), grid.shape)
        return cls(grid, physical=vals, meta=meta)

    @property
    def physical(self) -> np.ndarray:
        if self._physical is None:
            self._physical = _frozen(self.grid.inverse(self._fourier), self.grid)
        return self._physical

    @property
    def fourier(self) -> np.ndarray:
        if self._fourier is None:
            self._fourier = _frozen(self.grid.forward(self._physical), self.grid)
        return self._fourier

    def with_physical(self, values, **meta) -> "Field":
        return Field(self.grid, physical=values, meta={**self.meta, **meta})

    def with_fourier(self, values, **meta) -> "Field":
        return Field(self.grid, fourier=values, meta={**self.meta, **meta})

    def scaled(self, c: complex) -> "Field":
        if self.sync_state == "fourier":
            return Field(self.grid, fourier=c * self._fourier, meta=self.meta)
        return Field(self.grid, physical=c * self._physical, meta=self.meta)

    def real_part(self) -> "Field":
        return Field(self.grid, physical=self.physical.real.astype(complex), meta=self.meta)

    def imag_part(self) -> "Field":
        return Field(self.grid, physical=self.physical.imag.astype(complex), meta=self.meta)

    def translated(self, shift) -> "Field":
        """Exact spectral translation ``u(x - shift)``."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.grid.dim,))
        phase = sum(xi * s for xi, s in zip(self.grid.frequencies(), shift))
        return Field(self.grid, fourier=self.fourier * np.exp(-1j * phase), meta=self.meta)

    def reflected(self) -> "Field":
        """``u(-x)`` on the periodic lattice."""
        U = self.fourier
        for ax in range(self.grid.dim):
            U = np.roll(np.flip(U, axis=ax), 1, axis=ax)
        return Field(self.grid, fourier=U, meta=self.meta)

    def __repr__(self):
        return f"Field(dim={self.grid.dim}, L={self.grid.half_width}, M={self.grid.points}, sync={self.sync_state})"


def _frozen(arr, grid: SpectralGrid) -> np.ndarray:
    a = np.array(arr, dtype=np.complex128, copy=True)
    if a.shape != grid.shape:
        raise StructuralError(f"array shape {a.shape} does not match grid {grid.shape}")
    a.setflags(write=False)
    return a


def l2_norm(field: Field) -> float:
    return float(np.sqrt(np.sum(np.abs(field.physical) ** 2) * field.grid.cell_volume))


def lp_norm(field: Field, p: float) -> float:
    """Riemann-sum ``L^p`` norm ``(sum_j |u_j|^p h^N)^(1/p)``.

    ``p = inf`` returns the maximum modulus.
    """
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    a = np.abs(field.physical)
    if math.isinf(p):
        return float(a.max())
    top = a.max()
    if top == 0:
        return 0.0
    # factor out the maximum so large p cannot overflow
    return float(top * (np.sum((a / top) ** p) * field.grid.cell_volume) ** (1.0 / p))


def radial_average_fourier(grid: SpectralGrid, uhat: np.ndarray) -> np.ndarray:
    """Average Fourier samples over exact lattice shells ``|k|^2 = n``."""
    inverse, counts = grid._shells
    flat = uhat.ravel()
    re = np.bincount(inverse, flat.real) / counts
    im = np.bincount(inverse, flat.imag) / counts
    return (re + 1j * im)[inverse].reshape(grid.shape)


def radialize(field: Field) -> Field:
    """Orthogonal projection onto lattice-radial fields.

    Fourier coefficients are averaged over each exact lattice shell
    ``{k : |k|^2 = n}``. The map is an orthogonal projection (idempotent,
    L^2 contraction), commutes with every radial Fourier multiplier and fixes
    radial profiles up to lattice anisotropy. In one dimension it returns the
    even part.
    """
    return Field(
        field.grid,
        fourier=radial_average_fourier(field.grid, field.fourier),
        meta=field.meta,
    )


@dataclass(frozen=True)
class SymmetryReport:
    """Radial and parity diagnostics of a field after re-centering.

    Attributes
    ----------
    nonradiality_index : float
        ``||u - P u|| / ||u||`` with ``P`` the lattice radial projection.
    evenness_defect : float
        ``||u(-.) - u|| / (2 ||u||)``.
    centroid : tuple of float
        Centre of ``|u|^2`` mass used for re-centering.
    """

    nonradiality_index: float
    evenness_defect: float
    centroid: tuple = dc_field(default=())

    def to_dict(self) -> dict:
        return {
            "nonradialityIndex": self.nonradiality_index,
            "evennessDefect": self.evenness_defect,
            "centroid": list(self.centroid),
        }


def centroid(field: Field) -> np.ndarray:
    """Periodic centre of ``|u|^2`` mass (circular mean per axis)."""
    grid = field.grid
    w = np.abs(field.physical) ** 2
    total = w.sum()
    if total == 0:
        raise DomainError("centroid of the zero field is undefined")
    k = math.pi / grid.half_width
    out = np.empty(grid.dim)
    for i, xc in enumerate(grid.coordinates()):
        z = np.sum(w * np.exp(1j * k * xc))
        out[i] = np.angle(z) / k if abs(z) > 1e-14 * total else 0.0
    return out


def recenter(field: Field) -> tuple[Field, np.ndarray]:
    """Translate so the ``|u|^2`` centroid sits at the origin."""
    c = centroid(field)
    return field.translated(-c), c


def symmetry_report(field: Field) -> SymmetryReport:
    """Nonradiality index and evenness defect of the re-centered field."""
    U0 = field.fourier
    norm = np.linalg.norm(U0)
    if norm == 0:
        raise DomainError("symmetry report of the zero field is undefined")
    centered, c = recenter(field)
    U = centered.fourier
    nonrad = np.linalg.norm(U - radial_average_fourier(field.grid, U)) / norm
    Ur = centered.reflected().fourier
    even = np.linalg.norm(Ur - U) / (2.0 * norm)
    return SymmetryReport(float(min(nonrad, 1.0)), float(min(even, 1.0)), tuple(float(v) for v in c))


def scaling_map(field: Field, a: float) -> Field:
    """Dilation ``u -> u(./sqrt(a))``.

    The sample array is kept and placed on a grid of half-width
    ``L sqrt(a)``, so the map is exact on the lattice.
    """
    if not a > 0:
        raise DomainError(f"scaling parameter must be positive, got {a}")
    g = field.grid
    new = SpectralGrid(g.dim, g.half_width * math.sqrt(a), g.points)
    return Field(new, physical=field.physical, meta={**field.meta, "scaledBy": a})


def _smooth_even(n: int) -> int:
    m = max(16, int(math.ceil(n)))
    m += m % 2
    while True:
        r = m
        for f in (2, 3, 5):
            while r % f == 0:
                r //= f
        if r == 1:
            return m
        m += 2


def annulus_shell_count(grid: SpectralGrid, epsilon: float) -> int:
    """Distinct lattice radii inside ``||xi| - 1| <= sqrt(eps)``."""
    lo = (1 - math.sqrt(epsilon)) ** 2 / grid.dxi**2
    hi = (1 + math.sqrt(epsilon)) ** 2 / grid.dxi**2
    n = np.unique(grid.shell_index)
    return int(np.count_nonzero((n >= lo) & (n <= hi)))


def default_grid(
    epsilon: float,
    dim: int = 2,
    half_width: float | None = None,
    points: int | None = None,
    min_shells: int = 8,
) -> SpectralGrid:
    """Grid policy for a given epsilon.

    ``L = max(20, 8/sqrt(eps))``; ``M`` starts at 256 (128 for N = 3) and
    grows to the next even 5-smooth size keeping the Nyquist frequency at
    least 4. In one dimension ``L`` is also enlarged until the annulus
    ``||xi|-1| <= sqrt(eps)`` holds ``min_shells`` lattice radii.
    Explicit ``half_width`` / ``points`` override the policy.
    """
    if not (0 < epsilon):
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    L = half_width if half_width is not None else max(20.0, 8.0 / math.sqrt(epsilon))
    if half_width is None and dim == 1:
        # 1-D shells are single lattice points spaced pi/L
        L = max(L, math.pi * (min_shells + 1) / (2.0 * math.sqrt(epsilon)))
    if points is not None:
        return SpectralGrid(dim, L, points)
    base = 128 if dim == 3 else 256
    M = _smooth_even(max(base, 2 * MIN_NYQUIST * L / math.pi))
    return SpectralGrid(dim, L, M)


def save_field(field: Field, path, creation: Mapping[str, Any] | None = None) -> Path:
    """Write a field in the BFLD1 format.

    One JSON header line, then little-endian float64 ``(re, im)`` pairs of
    the physical view in row-major order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": BFLD_MAGIC,
        **field.grid.to_dict(),
        "syncState": field.sync_state,
        "creation": _jsonable({**field.meta, **dict(creation or {})}),
    }
    data = np.ascontiguousarray(field.physical, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(data.tobytes(order="C"))
    return path


def load_field(path) -> Field:
    """Read a BFLD1 file written by :func:`save_field`."""
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed BFLD1 header") from exc
    if header.get("format") != BFLD_MAGIC:
        raise ValidationError(f"{path}: not a BFLD1 file")
    grid = SpectralGrid(header["dim"], header["halfWidth"], header["pointsPerAxis"])
    n = int(np.prod(grid.shape))
    if len(payload) != 16 * n:
        raise StructuralError(f"{path}: expected {16 * n} data bytes, found {len(payload)}")
    vals = np.frombuffer(payload, dtype="<c16").reshape(grid.shape)
    meta = dict(header.get("creation", {}))
    meta["loadedSyncState"] = header.get("syncState")
    return Field(grid, physical=vals, meta=meta)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)
