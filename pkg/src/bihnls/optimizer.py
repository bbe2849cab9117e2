"""Minimization of the Rayleigh quotient ``q_eps(u) / ||u||_p^2``.

The default descent is preconditioned by the symbol: the Fourier gradient
``2 (g U - lam F)`` is divided by ``2 g``, which turns the step

    u <- (1 - 2 tau) u + 2 tau lam T(|u|^{p-2} u),   T = g^{-1}

into a damped power iteration (``tau = 1/2`` is the undamped one). Each
step is followed by renormalization to ``||u||_p = 1`` and accepted only if
it passes an Armijo test, so the quotient sequence is monotone. The plain
Euclidean gradient with step ``1/(2 max g)`` is kept as an option.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field as dc_field, replace
from typing import Any

import numpy as np

from .errors import DomainError, NumericalFailure, ValidationError
from .spectral import (
    Field,
    SpectralGrid,
    SymmetryReport,
    l2_norm,
    lp_norm,
    radial_average_fourier,
    recenter,
    symmetry_report,
)
from .symbol import ExponentSet, SymbolParams, quadratic_form, rayleigh_quotient, symbol_on_grid
from .trialfields import AnnulusParams, KnappParams, annulus_field, knapp_support

__all__ = [
    "MinimizeOptions",
    "GroundStateResult",
    "MassReport",
    "minimize_quotient",
    "minimize_quotient_radial",
    "minimize_mass_constrained",
    "initial_field",
    "quotient_gradient",
    "quotient_directional_derivative",
    "euler_lagrange_residual",
    "phase_defect",
    "align_fields",
]

_MONOTONE_SLACK = 1e-13


@dataclass(frozen=True)
class MinimizeOptions:
    """Controls for the quotient and mass-constrained minimizers.

    Parameters
    ----------
    max_iterations : int
        Iteration cap per restart.
    tolerance : float
        Convergence threshold on the relative Euler-Lagrange residual.
    restarts : int
        Number of starts. Start 0 is the deterministic annulus-plus-caps
        field; later starts use seeded random Fourier phases on the annulus.
    radial : bool
        Project onto lattice-radial fields after every step.
    seed : int
        Base seed for random restarts.
    step_rule : {"backtracking", "fixed"}
    step : float or None
        Initial (or fixed) step. ``None`` selects ``1/2`` for the
        preconditioned flow and ``1/(2 max g)`` for the plain gradient.
    precondition : bool
        Use the symbol-preconditioned direction.
    shrink, sufficient_decrease : float
        Backtracking factor and Armijo constant.
    cap_weight : float
        Relative weight of the cap perturbation in start 0.
    annulus_s : float
        Annulus exponent ``s`` of the starting field.
    trace_every : int
        Record every n-th iteration in the trace (the last one always).
    """

    max_iterations: int = 20000
    tolerance: float = 1e-8
    restarts: int = 1
    radial: bool = False
    seed: int = 0
    step_rule: str = "backtracking"
    step: float | None = None
    precondition: bool = True
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    cap_weight: float = 0.3
    annulus_s: float = 0.25
    trace_every: int = 10

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if int(self.max_iterations) < 1:
            raise ValidationError("max_iterations must be >= 1")
        if int(self.restarts) < 1:
            raise ValidationError("restarts must be >= 1")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValidationError(f"unknown step rule {self.step_rule!r}")
        if not (0 < self.shrink < 1):
            raise ValidationError("shrink must lie in (0, 1)")
        if not (0 <= self.sufficient_decrease < 1):
            raise ValidationError("sufficient_decrease must lie in [0, 1)")
        if self.step is not None and not self.step > 0:
            raise ValidationError("step must be positive")
        if self.cap_weight < 0:
            raise ValidationError("cap_weight must be nonnegative")


@dataclass
class GroundStateResult:
    """Outcome of a minimization.

    ``field`` is normalized to ``||u||_p = 1`` (quotient runs) or to
    ``||u||_2^2 = m`` (mass runs).
    """

    field: Field
    quotient: float
    iterations: int
    residual: float
    converged: bool
    symmetry: SymmetryReport
    restart_spread: float
    phase_defect: float
    multiplier: float
    p: float
    params: SymbolParams | None
    flags: list = dc_field(default_factory=list)
    trace: list = dc_field(default_factory=list)
    restart_quotients: list = dc_field(default_factory=list)
    restart_index: int = 0
    seed: int = 0
    wall_time: float = 0.0
    mass: "MassReport | None" = None

    def to_dict(self) -> dict[str, Any]:
        g = self.field.grid
        out = {
            "quotient": self.quotient,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "symmetry": self.symmetry.to_dict(),
            "restartSpread": self.restart_spread,
            "restartQuotients": list(self.restart_quotients),
            "restartIndex": self.restart_index,
            "phaseDefect": self.phase_defect,
            "multiplier": self.multiplier,
            "p": self.p,
            "grid": g.to_dict(),
            "seed": self.seed,
            "flags": list(self.flags),
            "wallTime": self.wall_time,
        }
        if self.params is not None:
            out["params"] = self.params.to_dict()
        if self.mass is not None:
            out["mass"] = self.mass.to_dict()
        return out


@dataclass(frozen=True)
class MassReport:
    """Multiplier data of a mass-constrained minimizer."""

    mass: float
    energy: float
    kappa: float
    epsilon: float
    in_window: bool

    def to_dict(self):
        return {
            "mass": self.mass,
            "energy": self.energy,
            "kappa": self.kappa,
            "epsilon": self.epsilon,
            "inWindow": self.in_window,
        }


# ---------------------------------------------------------------- helpers


def _nonlinearity(u: np.ndarray, p: float) -> np.ndarray:
    return np.abs(u) ** (p - 2) * u


def _lp(u: np.ndarray, p: float, cell: float) -> float:
    a = np.abs(u)
    top = a.max()
    if top == 0 or not np.isfinite(top):
        return float(top)
    return float(top * (np.sum((a / top) ** p) * cell) ** (1.0 / p))


def quotient_gradient(field: Field, params: SymbolParams, p: float) -> np.ndarray:
    """Fourier-space L^2 gradient of the quotient.

    Returns ``G`` such that the derivative along ``v`` is
    ``Re sum conj(G) V (pi/L)^N``.
    """
    grid = field.grid
    g = symbol_on_grid(grid, params)
    U = field.fourier
    n = lp_norm(field, p)
    q = quadratic_form(field, params)
    F = grid.forward(_nonlinearity(field.physical, p))
    return (2.0 / n**2) * (g * U - (q / n**p) * F)


def quotient_directional_derivative(field: Field, direction: Field, params: SymbolParams, p: float) -> float:
    G = quotient_gradient(field, params, p)
    return float(np.real(np.sum(np.conj(G) * direction.fourier)) * field.grid.dual_cell_volume)


def euler_lagrange_residual(field: Field, params: SymbolParams, p: float, radial: bool = False) -> float:
    """Relative residual of ``g U = lam F(|u|^{p-2} u)``.

    Measured in the dual norm ``(sum |gU - lam F|^2 / g)^(1/2) / q^(1/2)``
    with ``lam = q / ||u||_p^p``.
    """
    grid = field.grid
    g = symbol_on_grid(grid, params)
    U = field.fourier
    q = float(np.sum(g * np.abs(U) ** 2))
    lam = q * grid.dual_cell_volume / lp_norm(field, p) ** p
    F = grid.forward(_nonlinearity(field.physical, p))
    if radial:
        F = radial_average_fourier(grid, F)
    return float(math.sqrt(np.sum(np.abs(g * U - lam * F) ** 2 / g) / q))


def phase_defect(field: Field) -> float:
    """``max |Im(e^{-i theta} u)| / max |u|`` for the least-squares phase."""
    u = field.physical
    theta = 0.5 * np.angle(np.sum(u * u))
    top = np.abs(u).max()
    if top == 0:
        raise DomainError("phase of the zero field is undefined")
    return float(np.abs((np.exp(-1j * theta) * u).imag).max() / top)


def align_fields(a: Field, b: Field) -> float:
    """Relative L^2 distance after re-centering, phase and reflection alignment."""
    ca, _ = recenter(a)
    cb, _ = recenter(b)
    A = ca.fourier
    best = math.inf
    for cand in (cb, cb.reflected()):
        B = cand.fourier
        z = np.sum(np.conj(B) * A)
        ph = z / abs(z) if abs(z) > 0 else 1.0
        best = min(best, float(np.linalg.norm(A - ph * B) / np.linalg.norm(A)))
    return best


def initial_field(
    grid: SpectralGrid,
    epsilon: float,
    opts: MinimizeOptions,
    restart: int = 0,
) -> Field:
    """Starting field for a restart.

    Restart 0: constant-weight annulus field plus ``cap_weight`` times the
    indicator of the two polar caps at ``+-e_N`` (both pieces L^2
    normalized). Radial runs omit the caps. Later restarts put seeded random
    phases on the annulus profile.
    """
    eps = min(epsilon, 0.99)
    ann = annulus_field(grid, AnnulusParams(eps, opts.annulus_s)).fourier
    ann = ann / np.linalg.norm(ann)
    if restart == 0:
        U = ann.astype(complex)
        if not opts.radial and opts.cap_weight > 0:
            kp = KnappParams(eps, grid.dim)
            cap = knapp_support(grid, kp)
            cap = cap | (Field(grid, fourier=cap.astype(complex)).reflected().fourier.real > 0.5)
            if cap.any():
                U = U + opts.cap_weight * cap / math.sqrt(cap.sum())
    else:
        rng = np.random.default_rng([int(opts.seed), int(restart)])
        ph = np.exp(2j * np.pi * rng.random(grid.shape))
        amp = 0.5 + rng.random(grid.shape)
        U = np.abs(ann) * amp * ph
    if opts.radial:
        U = radial_average_fourier(grid, U)
    return Field(grid, fourier=U, meta={"kind": "initial", "restart": restart})


# ------------------------------------------------------------ core descent


@dataclass
class _Run:
    u: np.ndarray
    R: float
    residual: float
    iterations: int
    converged: bool
    flags: list
    trace: list


def _descend(
    grid: SpectralGrid,
    params: SymbolParams,
    p: float,
    start: Field,
    opts: MinimizeOptions,
) -> _Run:
    g = symbol_on_grid(grid, params)
    dv = grid.dual_cell_volume
    cell = grid.cell_volume
    radial = opts.radial
    proj = (lambda U: radial_average_fourier(grid, U)) if radial else (lambda U: U)

    U = proj(start.fourier.copy())
    u = grid.inverse(U)
    n = _lp(u, p, cell)
    if not n > 0:
        raise NumericalFailure("starting field vanishes")
    u, U = u / n, U / n
    q = float(np.sum(g * np.abs(U) ** 2) * dv)
    R = q
    flags: list = []
    trace: list = []

    if opts.step is not None:
        tau0 = opts.step
    else:
        tau0 = 0.5 if opts.precondition else 1.0 / (2.0 * float(g.max()))
    tau = tau0
    res = math.inf
    it = 0
    for it in range(1, opts.max_iterations + 1):
        F = proj(grid.forward(_nonlinearity(u, p)))
        lam = q  # ||u||_p = 1
        E = g * U - lam * F
        res = math.sqrt(float(np.sum(np.abs(E) ** 2 / g)) * dv / q)
        if not np.isfinite(res):
            raise NumericalFailure(f"non-finite residual at iteration {it}", trace)
        if res <= opts.tolerance:
            trace.append((it - 1, R, res, 0.0))
            return _Run(u, R, res, it - 1, True, flags, trace)
        if opts.precondition:
            D = -E / g
            slope = -float(np.sum(np.abs(E) ** 2 / g)) * dv  # dR[D]/2
        else:
            D = -2.0 * E
            slope = -2.0 * float(np.sum(np.abs(E) ** 2)) * dv
        slope *= 2.0
        if opts.step_rule == "backtracking":
            tau = tau0
        accepted = False
        for _ in range(60):
            Un = U + 2.0 * tau * D if opts.precondition else U + tau * D
            un = grid.inverse(Un)
            nn = _lp(un, p, cell)
            if nn > 0 and np.isfinite(nn):
                Rn = float(np.sum(g * np.abs(Un) ** 2) * dv) / nn**2
                step_len = 2.0 * tau if opts.precondition else tau
                if opts.step_rule == "fixed":
                    accepted = np.isfinite(Rn)
                    break
                if Rn <= R + opts.sufficient_decrease * step_len * slope:
                    accepted = True
                    break
                if Rn <= R * (1 + _MONOTONE_SLACK) and tau < 1e-12 * tau0:
                    accepted = True
                    break
            tau *= opts.shrink
        if not accepted:
            flags.append("line-search-stalled")
            trace.append((it, R, res, tau))
            return _Run(u, R, res, it - 1, False, flags, trace)
        if not np.isfinite(Rn):
            raise NumericalFailure(f"non-finite quotient at iteration {it}", trace)
        if opts.step_rule == "backtracking" and Rn > R * (1 + _MONOTONE_SLACK):
            raise NumericalFailure(f"quotient increased at iteration {it}: {R} -> {Rn}", trace)
        u, U = un / nn, Un / nn
        q = R = Rn
        if opts.trace_every and it % opts.trace_every == 0:
            trace.append((it, R, res, tau))

    F = proj(grid.forward(_nonlinearity(u, p)))
    res = math.sqrt(float(np.sum(np.abs(g * U - q * F) ** 2 / g)) * dv / q)
    converged = res <= opts.tolerance
    if not converged:
        flags.append("max-iterations")
    trace.append((it, R, res, tau))
    return _Run(u, R, res, it, converged, flags, trace)


def _validate(params: SymbolParams, p: float, grid: SpectralGrid):
    ExponentSet(grid.dim, p)
    eps = params.epsilon
    width = 2.0 * math.sqrt(eps)
    steps = width * math.sqrt(params.a) / grid.dxi
    if steps < 2:
        from .errors import ResolutionError
        from .trialfields import required_points

        need = required_points(grid, width, 4)
        raise ResolutionError(
            f"annulus of width {width:.3g} spans only {steps:.2g} lattice steps; "
            f"refine to points >= {need} (half_width >= {4 * math.pi / width:.4g})",
            min_points=need,
            min_half_width=4 * math.pi / width,
        )


def _finish(grid, params, p, runs, opts, t0) -> GroundStateResult:
    quotients = [r.R for r in runs]
    # smallest quotient wins; quotients equal within tolerance fall back to the residual
    best_i = min(range(len(runs)), key=lambda i: runs[i].R)
    ties = [i for i in range(len(runs)) if runs[i].R <= runs[best_i].R * (1 + opts.tolerance)]
    best_i = min(ties, key=lambda i: (runs[i].residual, i))
    best = runs[best_i]
    f = Field(grid, physical=best.u, meta={"kind": "minimizer", "p": p, **params.to_dict()})
    R_check = rayleigh_quotient(f, params, p)
    if abs(R_check - best.R) > 1e-10 * abs(best.R):
        raise NumericalFailure(f"quotient self-consistency failed: {best.R} vs {R_check}", best.trace)
    flags = list(best.flags)
    if not best.converged:
        flags.append("not-converged")
    sym = symmetry_report(f)
    return GroundStateResult(
        field=f,
        quotient=R_check,
        iterations=best.iterations,
        residual=best.residual,
        converged=best.converged,
        symmetry=sym,
        restart_spread=float(max(quotients) - min(quotients)),
        phase_defect=phase_defect(f),
        multiplier=R_check,
        p=p,
        params=params,
        flags=flags,
        trace=best.trace,
        restart_quotients=quotients,
        restart_index=best_i,
        seed=opts.seed,
        wall_time=time.perf_counter() - t0,
    )


def minimize_quotient(
    params: SymbolParams,
    p: float,
    grid: SpectralGrid,
    opts: MinimizeOptions | None = None,
    start: Field | None = None,
) -> GroundStateResult:
    """Minimize ``q(u)/||u||_p^2`` over fields on ``grid``.

    Parameters
    ----------
    start : Field, optional
        Warm start replacing restart 0.

    Returns
    -------
    GroundStateResult
        Best run over all restarts. Runs that hit ``max_iterations`` carry
        the ``"not-converged"`` flag.
    """
    opts = opts or MinimizeOptions()
    _validate(params, p, grid)
    t0 = time.perf_counter()
    runs = []
    for r in range(int(opts.restarts)):
        if r == 0 and start is not None:
            if start.grid != grid:
                from .errors import StructuralError

                raise StructuralError("warm start lives on a different grid")
            s = start
        else:
            s = initial_field(grid, params.epsilon, opts, r)
        runs.append(_descend(grid, params, p, s, opts))
    return _finish(grid, params, p, runs, opts, t0)


def minimize_quotient_radial(
    params: SymbolParams,
    p: float,
    grid: SpectralGrid,
    opts: MinimizeOptions | None = None,
    start: Field | None = None,
) -> GroundStateResult:
    """Minimize the quotient over lattice-radial fields."""
    opts = replace(opts or MinimizeOptions(), radial=True)
    res = minimize_quotient(params, p, grid, opts, start)
    if res.symmetry.nonradiality_index >= 1e-8:
        res.flags.append("radial-projection-leak")
    return res


# ------------------------------------------------------- mass constraint


def mass_window(N: int, p: float) -> bool:
    """Whether ``(N, p)`` lies in the window where minimizers are known to
    be ground states with a positive multiplier (N = 2: p < 14/3)."""
    if N == 1:
        return 2 < p < 10
    if N == 2:
        return 2 < p < 14 / 3
    return 2 < p < (2 * N + 2) / (N - 1)


def minimize_mass_constrained(
    m: float,
    p: float,
    grid: SpectralGrid,
    opts: MinimizeOptions | None = None,
    epsilon_guess: float = 0.01,
    start: Field | None = None,
) -> GroundStateResult:
    """Minimize ``E~(u) = <(|xi|^4 - 2|xi|^2) u^, u^> - (2/p) ||u||_p^p`` on
    ``||u||_2^2 = m``.

    The multiplier ``kappa = (||u||_p^p - <D u, u>)/m`` makes the minimizer
    solve ``g_eps u = |u|^{p-2} u`` with ``eps = kappa - 1``. Steps are

        u <- sqrt(m) normalize((1 - tau) u + tau T(|u|^{p-2} u)),

    with ``T`` the inverse symbol at the current multiplier estimate and
    ``tau`` halved until ``E~`` does not increase.
    """
    opts = opts or MinimizeOptions()
    if not m > 0:
        raise DomainError("mass must be positive")
    ExponentSet(grid.dim, p)
    in_window = mass_window(grid.dim, p)
    if not in_window:
        warnings.warn(
            f"p={p} lies outside the validated window for N={grid.dim}; results are unvalidated",
            RuntimeWarning,
            stacklevel=2,
        )
    t0 = time.perf_counter()
    dv = grid.dual_cell_volume
    cell = grid.cell_volume
    xi2 = grid.shell_index * grid.dxi**2
    D = xi2 * xi2 - 2.0 * xi2
    proj = (lambda U: radial_average_fourier(grid, U)) if opts.radial else (lambda U: U)

    def energy_of(U, u):
        return float(np.sum(D * np.abs(U) ** 2) * dv) - (2.0 / p) * _lp(u, p, cell) ** p

    def normalize(U):
        s = math.sqrt(m / (float(np.sum(np.abs(U) ** 2)) * dv))
        return U * s

    if start is None:
        start = initial_field(grid, epsilon_guess, opts, 0)
    U = normalize(proj(start.fourier.copy()))
    u = grid.inverse(U)
    E = energy_of(U, u)
    trace: list = []
    flags: list = []
    converged = False
    res = math.inf
    kappa = math.nan
    it = 0
    floor = 1e-8
    for it in range(1, opts.max_iterations + 1):
        nl = _nonlinearity(u, p)
        F = proj(grid.forward(nl))
        lpp = float(np.sum(np.abs(u) ** p) * cell)
        kappa = (lpp - float(np.sum(D * np.abs(U) ** 2) * dv)) / m
        eps_est = max(kappa - 1.0, floor)
        g = D + 1.0 + eps_est
        Rm = g * U - F
        res = math.sqrt(float(np.sum(np.abs(Rm) ** 2 / g)) / float(np.sum(g * np.abs(U) ** 2)))
        if not np.isfinite(res):
            raise NumericalFailure(f"non-finite residual at iteration {it}", trace)
        if res <= opts.tolerance:
            converged = True
            it -= 1
            break
        W = F / g
        tau = 1.0
        ok = False
        for _ in range(60):
            Un = normalize((1.0 - tau) * U + tau * W)
            un = grid.inverse(Un)
            En = energy_of(Un, un)
            if En <= E + _MONOTONE_SLACK * abs(E):
                ok = True
                break
            tau *= opts.shrink
        if not ok:
            flags.append("line-search-stalled")
            break
        U, u, E = Un, un, En
        if opts.trace_every and it % opts.trace_every == 0:
            trace.append((it, E, res, tau))
    else:
        flags.append("max-iterations")
    trace.append((it, E, res, kappa))
    if not converged:
        flags.append("not-converged")
    f = Field(grid, physical=u, meta={"kind": "mass-minimizer", "mass": m, "p": p})
    eps_m = kappa - 1.0
    params = SymbolParams.from_epsilon(eps_m) if eps_m > 0 else None
    if eps_m <= 0:
        flags.append("nonpositive-multiplier")
    lp_n = lp_norm(f, p)
    quotient = quadratic_form(f, params) / lp_n**2 if params is not None else math.nan
    report = MassReport(mass=m, energy=E, kappa=kappa, epsilon=eps_m, in_window=in_window)
    return GroundStateResult(
        field=f,
        quotient=quotient,
        iterations=it,
        residual=res,
        converged=converged,
        symmetry=symmetry_report(f),
        restart_spread=0.0,
        phase_defect=phase_defect(f),
        multiplier=kappa,
        p=p,
        params=params,
        flags=flags,
        trace=trace,
        restart_quotients=[quotient],
        seed=opts.seed,
        wall_time=time.perf_counter() - t0,
        mass=report,
    )
