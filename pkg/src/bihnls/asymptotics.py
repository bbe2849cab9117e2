"""Epsilon sweeps, log-log exponent fits and analytic cross-checks."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import (
    BihnlsError,
    DomainError,
    InsufficientDataError,
    UnavailableError,
    ValidationError,
)
from .optimizer import MinimizeOptions, minimize_quotient, minimize_quotient_radial
from .spectral import SpectralGrid, default_grid, load_field, lp_norm, l2_norm, save_field
from .symbol import ExponentSet, SymbolParams, quadratic_form, rayleigh_quotient
from .trialfields import AnnulusParams, KnappParams, annulus_field, knapp_field, theory_exponent

__all__ = [
    "SweepRecord",
    "FitReport",
    "DEFAULT_LADDER",
    "run_sweep",
    "sweep_point",
    "fit_exponent",
    "knapp_exponent",
    "lemma_integral",
    "lemma_integral_rescaled",
    "interpolation_alpha",
    "alpha_pq",
    "q_beta",
    "interpolation_crosscheck",
    "write_csv",
    "read_csv",
    "sandwich_violations",
]

DEFAULT_LADDER = tuple(10.0 ** (-k / 2) for k in range(2, 7))
CSV_HEADER = ["epsilon", "p", "N", "r", "r_rad", "knapp_upper", "annulus_upper", "iters", "residual", "flags"]
COLUMN_ALIASES = {
    "r": "r",
    "rEstimate": "r",
    "r_rad": "r_rad",
    "rRadialEstimate": "r_rad",
    "knapp_upper": "knapp_upper",
    "knappUpper": "knapp_upper",
    "annulus_upper": "annulus_upper",
    "annulusUpper": "annulus_upper",
}


@dataclass
class SweepRecord:
    """One epsilon of a sweep.

    ``residual`` is the larger of the two minimizer residuals;
    ``residual_full`` and ``residual_rad`` keep them separately.
    """

    epsilon: float
    p: float
    N: int
    r: float = math.nan
    r_rad: float = math.nan
    knapp_upper: float = math.nan
    annulus_upper: float = math.nan
    iterations: int = 0
    residual: float = math.nan
    residual_full: float = math.nan
    residual_rad: float = math.nan
    nonradiality: float = math.nan
    flags: list = dc_field(default_factory=list)
    field_path: str | None = None
    grid: dict | None = None

    @property
    def allowance(self) -> float:
        """Slack for the sandwich tests, ``R (res_full + res_rad)``."""
        res = sum(x for x in (self.residual_full, self.residual_rad) if np.isfinite(x))
        scale = max(x for x in (self.r, self.r_rad, 0.0) if np.isfinite(x))
        return scale * res + 1e-12 * scale

    def value(self, column: str) -> float:
        return getattr(self, COLUMN_ALIASES[column])

    def csv_row(self) -> list[str]:
        return [
            _fmt(self.epsilon),
            _fmt(self.p),
            str(self.N),
            _fmt(self.r),
            _fmt(self.r_rad),
            _fmt(self.knapp_upper),
            _fmt(self.annulus_upper),
            str(self.iterations),
            _fmt(self.residual),
            ";".join(self.flags),
        ]


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class FitReport:
    """Least-squares fit of ``log(column)`` against ``log(eps)``.

    ``theory_band`` is set when the theory gives a range rather than a value;
    ``discrepancy`` is then the distance from the slope to the band.
    """

    column: str
    slope: float
    intercept: float
    r2: float
    stderr: float
    points_used: int
    theory_slope: float | None
    theory_band: tuple | None
    discrepancy: float
    dropped: tuple = ()

    @property
    def prefactor(self) -> float:
        return math.exp(self.intercept)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theory_band"] = list(self.theory_band) if self.theory_band else None
        d["dropped"] = list(self.dropped)
        return {
            "column": d["column"],
            "slope": d["slope"],
            "intercept": d["intercept"],
            "r2": d["r2"],
            "stderr": d["stderr"],
            "pointsUsed": d["points_used"],
            "theorySlope": d["theory_slope"],
            "theoryBand": d["theory_band"],
            "discrepancy": d["discrepancy"],
            "dropped": d["dropped"],
        }


def knapp_exponent(p: float, N: int) -> float:
    """Exponent of the Knapp-field quotient, ``3/4 + 1/(2p) - N/2 (1/2 - 1/p)``."""
    return 0.75 + 1 / (2 * p) - (N / 2) * (0.5 - 1 / p)


def _theory(column: str, p: float, N: int):
    col = COLUMN_ALIASES[column]
    prad = 2 * N / (N - 1) if N >= 2 else math.inf
    if col == "knapp_upper":
        return knapp_exponent(p, N), None
    if col == "r":
        return theory_exponent(p, N), None
    if col == "annulus_upper":
        return (0.5, None) if p > prad else (None, (1 - N * (0.5 - 1 / p), 1.0))
    if p > prad:
        return 0.5, None
    return None, (1 - N * (0.5 - 1 / p), 1.0)


def fit_exponent(
    records: Sequence[SweepRecord],
    column: str = "r",
    r2_threshold: float = 0.995,
    min_points: int = 4,
) -> FitReport:
    """Fit the log-log slope of a sweep column.

    Non-finite or nonpositive entries are skipped. When ``r2`` falls below
    ``r2_threshold`` and at least ``min_points`` would remain, the largest
    epsilon is dropped once and the fit repeated.
    """
    if column not in COLUMN_ALIASES:
        raise ValidationError(f"unknown column {column!r}")
    valid = [r for r in records if np.isfinite(r.value(column)) and r.value(column) > 0]
    if len(valid) < min_points:
        raise InsufficientDataError(f"need at least {min_points} valid records, have {len(valid)}")
    valid.sort(key=lambda r: -r.epsilon)

    def _fit(rows):
        x = np.log([r.epsilon for r in rows])
        y = np.log([r.value(column) for r in rows])
        lr = stats.linregress(x, y)
        return lr.slope, lr.intercept, lr.rvalue**2, lr.stderr

    slope, intercept, r2, se = _fit(valid)
    dropped = ()
    if r2 < r2_threshold and len(valid) - 1 >= min_points:
        dropped = (valid[0].epsilon,)
        valid = valid[1:]
        slope, intercept, r2, se = _fit(valid)
    ps = {r.p for r in valid}
    Ns = {r.N for r in valid}
    if len(ps) == 1 and len(Ns) == 1:
        ts, band = _theory(column, ps.pop(), Ns.pop())
    else:
        ts, band = None, None
    if ts is not None:
        disc = abs(slope - ts)
    elif band is not None:
        disc = max(band[0] - slope, slope - band[1], 0.0)
    else:
        disc = math.nan
    return FitReport(
        column=COLUMN_ALIASES[column],
        slope=float(slope),
        intercept=float(intercept),
        r2=float(r2),
        stderr=float(se),
        points_used=len(valid),
        theory_slope=ts,
        theory_band=band,
        discrepancy=float(disc),
        dropped=dropped,
    )


# --------------------------------------------------------------- sweeps


GridPolicy = Callable[[float, int], SpectralGrid]


def sweep_point(
    epsilon: float,
    p: float,
    N: int,
    grid: SpectralGrid,
    opts: MinimizeOptions,
    columns: Iterable[str] = ("r", "r_rad", "knapp_upper", "annulus_upper"),
    annulus_s: float = 0.15,
    dump_dir: str | None = None,
) -> SweepRecord:
    """Compute one sweep row; failures become flags."""
    rec = SweepRecord(epsilon=epsilon, p=p, N=N, grid=grid.to_dict())
    params = SymbolParams.from_epsilon(epsilon)
    cols = {COLUMN_ALIASES[c] for c in columns}
    iters = 0
    if "r" in cols:
        try:
            res = minimize_quotient(params, p, grid, replace(opts, radial=False))
            rec.r, rec.residual_full = res.quotient, res.residual
            rec.nonradiality = res.symmetry.nonradiality_index
            iters += res.iterations
            if not res.converged:
                rec.flags.append("r:not-converged")
            if dump_dir is not None:
                path = Path(dump_dir) / f"minimizer_eps{epsilon:.6e}_p{p:g}_N{N}.bfld"
                save_field(res.field, path, {"epsilon": epsilon, "p": p})
                rec.field_path = str(path)
        except BihnlsError as exc:
            rec.flags.append(f"r:{type(exc).__name__}")
    if "r_rad" in cols:
        try:
            res = minimize_quotient_radial(params, p, grid, opts)
            rec.r_rad, rec.residual_rad = res.quotient, res.residual
            iters += res.iterations
            if not res.converged:
                rec.flags.append("r_rad:not-converged")
        except BihnlsError as exc:
            rec.flags.append(f"r_rad:{type(exc).__name__}")
    if "knapp_upper" in cols:
        try:
            f = knapp_field(grid, KnappParams(epsilon, N))
            rec.knapp_upper = rayleigh_quotient(f, params, p)
        except BihnlsError as exc:
            rec.flags.append(f"knapp:{type(exc).__name__}")
    if "annulus_upper" in cols:
        try:
            f = annulus_field(grid, AnnulusParams(epsilon, annulus_s))
            rec.annulus_upper = rayleigh_quotient(f, params, p)
        except BihnlsError as exc:
            rec.flags.append(f"annulus:{type(exc).__name__}")
    rec.iterations = iters
    rr = [x for x in (rec.residual_full, rec.residual_rad) if np.isfinite(x)]
    rec.residual = max(rr) if rr else math.nan
    rec.flags.extend(sandwich_violations(rec))
    return rec


def sandwich_violations(rec: SweepRecord) -> list[str]:
    """Flags for rows breaking ``r <= uppers + slack`` or ``r_rad >= r - slack``."""
    out = []
    slack = rec.allowance
    if np.isfinite(rec.r):
        for name in ("knapp_upper", "annulus_upper"):
            ub = getattr(rec, name)
            if np.isfinite(ub) and rec.r > ub + slack:
                out.append(f"sandwich:{name}")
        if np.isfinite(rec.r_rad) and rec.r_rad < rec.r - slack:
            out.append("sandwich:r_rad")
    return out


def _point_job(args):
    return sweep_point(*args)


def run_sweep(
    epsilons: Sequence[float],
    p: float,
    N: int,
    grid_policy: GridPolicy | None = None,
    opts: MinimizeOptions | None = None,
    columns: Iterable[str] = ("r", "r_rad", "knapp_upper", "annulus_upper"),
    jobs: int = 1,
    annulus_s: float = 0.15,
    dump_dir: str | None = None,
) -> list[SweepRecord]:
    """Run one sweep row per epsilon.

    Parameters
    ----------
    epsilons : sequence of float
        Strictly decreasing, inside ``(0, 1)``.
    grid_policy : callable, optional
        ``(eps, N) -> SpectralGrid``; defaults to :func:`default_grid`.
    jobs : int
        Worker processes. Rows come back in input order either way.
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ValidationError("empty epsilon list")
    if any(not (0 < e < 1) for e in eps):
        raise ValidationError("every epsilon must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("epsilons must be strictly decreasing")
    ExponentSet(N, p)
    opts = opts or MinimizeOptions()
    policy = grid_policy or (lambda e, n: default_grid(e, n))
    cols = tuple(columns)
    tasks = []
    pre_flags = {}
    for i, e in enumerate(eps):
        try:
            grid = policy(e, N)
        except BihnlsError as exc:
            pre_flags[i] = SweepRecord(epsilon=e, p=p, N=N, flags=[f"grid:{type(exc).__name__}"])
            continue
        tasks.append((i, (e, p, N, grid, opts, cols, annulus_s, dump_dir)))
    results: dict[int, SweepRecord] = dict(pre_flags)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            for (i, _), rec in zip(tasks, ex.map(_point_job, [t for _, t in tasks])):
                results[i] = rec
    else:
        for i, t in tasks:
            results[i] = _point_job(t)
    out = [results[i] for i in range(len(eps))]
    if all(_failed(r, cols) for r in out):
        raise BihnlsError("every sweep point failed: " + "; ".join(",".join(r.flags) for r in out))
    return out


def _failed(rec: SweepRecord, cols) -> bool:
    return all(not np.isfinite(rec.value(c)) for c in cols)


def write_csv(records: Sequence[SweepRecord], path=None) -> str:
    """Serialize records as RFC 4180 CSV; returns the text and writes it if
    ``path`` is given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path) -> list[SweepRecord]:
    """Read records written by :func:`write_csv`."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                SweepRecord(
                    epsilon=float(row["epsilon"]),
                    p=float(row["p"]),
                    N=int(row["N"]),
                    r=float(row["r"]),
                    r_rad=float(row["r_rad"]),
                    knapp_upper=float(row["knapp_upper"]),
                    annulus_upper=float(row["annulus_upper"]),
                    iterations=int(row["iters"]),
                    residual=float(row["residual"]),
                    flags=[f for f in row["flags"].split(";") if f],
                )
            )
    return out


# ------------------------------------------------------ analytic checks


def _tau_value(epsilon: float, delta: float, tau, s: float) -> float:
    if tau is None or tau == "constant":
        return delta
    if tau == "eps^s":
        return epsilon**s
    return float(tau)


def lemma_integral(epsilon: float, delta: float = 0.5, tau=None, s: float = 0.25) -> float:
    """``sqrt(eps) * int_{1-tau}^{1+tau} dr / g_eps(r)``.

    Parameters
    ----------
    tau : None, float, "constant" or "eps^s"
        Half-width of the window; ``None``/``"constant"`` use ``delta``.

    Notes
    -----
    The limit as ``eps -> 0`` is ``pi/2``.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not (0 < delta <= 0.9):
        raise DomainError("delta must lie in (0, 0.9]")
    t = _tau_value(epsilon, delta, tau, s)
    if not 0 < t:
        raise DomainError("tau must be positive")
    if t > delta:
        raise DomainError(f"tau={t} exceeds delta={delta}")
    se = math.sqrt(epsilon)
    f = lambda r: 1.0 / ((r * r - 1.0) ** 2 + epsilon)
    pts = sorted({1.0 + k * se for k in (-30, -5, -1, 0, 1, 5, 30) if abs(k * se) < t})
    val, _ = integrate.quad(f, 1 - t, 1 + t, points=pts, epsabs=0, epsrel=1e-12, limit=500)
    return se * val


def lemma_integral_rescaled(epsilon: float, delta: float = 0.5, tau=None, s: float = 0.25) -> float:
    """Same value after ``r = 1 + sqrt(eps) t``:
    ``int_{|t| <= tau/sqrt(eps)} dt / (t^2 (2 + sqrt(eps) t)^2 + 1)``."""
    t = _tau_value(epsilon, delta, tau, s)
    if t > delta:
        raise DomainError(f"tau={t} exceeds delta={delta}")
    se = math.sqrt(epsilon)
    T = t / se
    f = lambda x: 1.0 / ((x * (2.0 + se * x)) ** 2 + 1.0)
    pts = [k for k in (-30.0, -5.0, -1.0, 0.0, 1.0, 5.0, 30.0) if abs(k) < T]
    val, _ = integrate.quad(f, -T, T, points=pts, epsabs=0, epsrel=1e-12, limit=500)
    return val


def interpolation_alpha(p: float, N: int) -> float:
    """``(N+1)(1/2 - 1/p)``: weight of ``L^{2_*}`` in the Hölder split of ``L^p``."""
    return (N + 1) * (0.5 - 1 / p)


def alpha_pq(p: float, q: float) -> float:
    """Interpolation weight with ``1/p = (1-a)/2 + a/q``."""
    return (1 - 2 / p) / (1 - 2 / q)


def q_beta(beta: float, p: float) -> float:
    """``4 (1 - beta) / (1 + 2/p - 2 beta)``."""
    return 4 * (1 - beta) / (1 + 2 / p - 2 * beta)


def interpolation_crosscheck(record, p: float, N: int, slack: float = 1e-10) -> dict:
    """Check the Hölder chain on a stored minimizer.

    ``record`` is a :class:`SweepRecord` with ``field_path``, a path, or a
    :class:`Field`.
    """
    from .spectral import Field

    if isinstance(record, Field):
        f = record
        eps = f.meta.get("epsilon")
    else:
        path = record if isinstance(record, (str, os.PathLike)) else getattr(record, "field_path", None)
        if not path or not Path(path).exists():
            raise UnavailableError("no minimizer dump available for this record")
        f = load_field(path)
        eps = getattr(record, "epsilon", None) or f.meta.get("epsilon")
    if eps is None:
        raise ValidationError("epsilon unknown for the cross-check")
    if N < 2:
        raise DomainError("the Hölder chain needs N >= 2")
    pst = (2 * N + 2) / (N - 1)
    if not (2 < p <= pst):
        raise DomainError(f"need 2 < p <= {pst}")
    a = interpolation_alpha(p, N)
    params = SymbolParams.from_epsilon(eps)
    q = quadratic_form(f, params)
    n2, np_, ns = l2_norm(f), lp_norm(f, p), lp_norm(f, pst)
    holder_rhs = n2 ** (1 - a) * ns**a
    chain_lhs = q / np_**2
    chain_rhs = eps ** (1 - a) * (q / ns**2) ** a
    return {
        "alpha": a,
        "lpNorm": np_,
        "holderBound": holder_rhs,
        "holderHolds": bool(np_ <= holder_rhs * (1 + slack)),
        "quotient": chain_lhs,
        "chainBound": chain_rhs,
        "chainHolds": bool(chain_lhs >= chain_rhs * (1 - slack)),
    }
