import math

import mpmath as mp
import numpy as np
import pytest

from bihnls.asymptotics import (
    DEFAULT_LADDER,
    SweepRecord,
    alpha_pq,
    fit_exponent,
    interpolation_alpha,
    interpolation_crosscheck,
    lemma_integral,
    lemma_integral_rescaled,
    q_beta,
    read_csv,
    run_sweep,
    sandwich_violations,
    write_csv,
)
from bihnls.errors import DomainError, InsufficientDataError, UnavailableError, ValidationError
from bihnls.optimizer import minimize_quotient
from bihnls.spectral import Field, SpectralGrid, lp_norm, l2_norm
from bihnls.symbol import SymbolParams


def _mp_lemma(eps, tau):
    mp.mp.dps = 30
    e = mp.mpf(eps)
    f = lambda r: 1 / ((r * r - 1) ** 2 + e)
    s = mp.sqrt(e)
    pts = [1 - tau, 1 - 10 * s, 1 - s, 1, 1 + s, 1 + 10 * s, 1 + tau]
    return float(s * mp.quad(f, sorted(set(p for p in pts if 1 - tau <= p <= 1 + tau))))


def test_default_ladder():
    assert DEFAULT_LADDER == pytest.approx([1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3])


def test_lemma_against_mpmath():
    for eps, tau in [(1e-6, 0.5), (1e-3, 0.3), (0.1, 0.5)]:
        assert lemma_integral(eps, 0.5, tau) == pytest.approx(_mp_lemma(eps, tau), rel=1e-10)


def test_lemma_limits():
    assert lemma_integral(1e-6, 0.5) == pytest.approx(math.pi / 2, rel=2e-3)
    # with tau = eps^s the window in t = (r-1)/sqrt(eps) is |t| <= eps^(s-1/2),
    # so the value trails pi/2 by about eps^(1/2-s)/2
    v = lemma_integral(1e-6, 0.5, "eps^s", s=0.25)
    assert v == pytest.approx(_mp_lemma(1e-6, 1e-6**0.25), rel=1e-10)
    assert v == pytest.approx(math.atan(2 * 1e-6**-0.25), rel=1e-3)
    assert lemma_integral(1e-6, 0.5, "eps^s", s=0.15) == pytest.approx(math.pi / 2, rel=5e-3)


def test_lemma_substitution_identity():
    for eps, tau in [(1e-6, None), (1e-6, "eps^s"), (0.01, 0.2)]:
        assert lemma_integral_rescaled(eps, 0.5, tau) == pytest.approx(lemma_integral(eps, 0.5, tau), rel=1e-10)


def test_lemma_monotone_in_tau():
    vals = [lemma_integral(1e-4, 0.5, t) for t in (0.01, 0.05, 0.1, 0.3, 0.5)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_lemma_domain():
    with pytest.raises(DomainError):
        lemma_integral(1e-4, 0.3, 0.4)
    with pytest.raises(DomainError):
        lemma_integral(1e-4, 0.95)
    with pytest.raises(DomainError):
        lemma_integral(0.0, 0.5)


def _synthetic(values, eps=(1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3), p=3.0, N=2):
    return [SweepRecord(epsilon=e, p=p, N=N, knapp_upper=v, r=v, r_rad=v, annulus_upper=v) for e, v in zip(eps, values)]


def test_fit_exact_power_law():
    eps = np.array([1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3])
    recs = _synthetic(3 * eps**0.75)
    rep = fit_exponent(recs, "knapp_upper")
    assert rep.slope == pytest.approx(0.75, abs=1e-12)
    assert rep.r2 == pytest.approx(1.0, abs=1e-12)
    assert rep.prefactor == pytest.approx(3.0, rel=1e-10)
    assert rep.theory_slope == pytest.approx(0.75)
    assert rep.discrepancy < 1e-12
    assert rep.points_used == 5 and rep.dropped == ()


def test_fit_drops_preasymptotic_point():
    eps = np.array([1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3])
    vals = eps**0.5
    vals[0] *= 3.0
    rep = fit_exponent(_synthetic(vals), "r")
    assert rep.dropped == (1e-1,)
    assert rep.points_used == 4
    assert rep.slope == pytest.approx(0.5, abs=1e-12)


def test_fit_radial_band():
    eps = np.array([1e-1, 10**-1.5, 1e-2, 10**-2.5])
    rep = fit_exponent(_synthetic(eps**0.7, eps=eps, p=3.0), "rRadialEstimate")
    assert rep.theory_slope is None
    assert rep.theory_band == pytest.approx((2 / 3, 1.0))
    assert rep.discrepancy == 0.0
    rep = fit_exponent(_synthetic(eps**0.5, eps=eps, p=3.0), "r_rad")
    assert rep.discrepancy == pytest.approx(2 / 3 - 0.5)


def test_fit_needs_four_points():
    with pytest.raises(InsufficientDataError):
        fit_exponent(_synthetic([1.0, 0.5, 0.25], eps=(0.1, 0.05, 0.01)), "r")
    with pytest.raises(ValidationError):
        fit_exponent(_synthetic([1.0] * 5), "bogus")


def test_interpolation_arithmetic():
    assert interpolation_alpha(4, 2) == pytest.approx(0.75)
    for p in (3.0, 4.0, 5.5):
        for beta in np.linspace(0.05, 0.45, 9):
            q = q_beta(beta, p)
            assert alpha_pq(p, q) == pytest.approx(2 - 2 * beta, rel=1e-12)


def test_interpolation_crosscheck_on_minimizer(tmp_path):
    eps, p = 1e-2, 4.0
    grid = SpectralGrid(2, 80.0, 256)
    res = minimize_quotient(SymbolParams.from_epsilon(eps), p, grid)
    from bihnls.spectral import save_field

    path = save_field(res.field, tmp_path / "u.bfld", {"epsilon": eps})
    rec = SweepRecord(epsilon=eps, p=p, N=2, field_path=str(path))
    rep = interpolation_crosscheck(rec, p, 2)
    assert rep["holderHolds"] and rep["chainHolds"]
    assert rep["alpha"] == pytest.approx(0.75)
    with pytest.raises(UnavailableError):
        interpolation_crosscheck(SweepRecord(epsilon=eps, p=p, N=2), p, 2)


def test_interpolation_strict_on_single_shell():
    g = SpectralGrid(2, 4 * math.pi, 64)
    f = Field.from_function(g, lambda x, y: np.cos(x) + np.cos(y))
    f.meta["epsilon"] = 0.01
    rep = interpolation_crosscheck(f, 4.0, 2)
    assert rep["lpNorm"] < rep["holderBound"] * (1 - 1e-6)


def test_single_point_sweep():
    recs = run_sweep([0.1], 4.0, 2)
    assert len(recs) == 1
    r = recs[0]
    assert all(np.isfinite(getattr(r, c)) for c in ("r", "r_rad", "knapp_upper", "annulus_upper"))
    assert not r.flags


def test_sweep_validation():
    with pytest.raises(ValidationError):
        run_sweep([0.01, 0.1], 3.0, 2)
    with pytest.raises(ValidationError):
        run_sweep([1.5], 3.0, 2)


def test_sweep_flags_bad_points():
    policy = lambda e, n: SpectralGrid(n, 20.0, 64)
    recs = run_sweep([0.1, 1e-4], 3.0, 2, policy, columns=("knapp_upper", "r"))
    assert not recs[0].flags
    assert any("ResolutionError" in f for f in recs[1].flags)


def test_sweep_parallel_matches_serial():
    eps = [0.1, 10**-1.5]
    a = run_sweep(eps, 3.0, 2, columns=("r", "knapp_upper"))
    b = run_sweep(eps, 3.0, 2, columns=("r", "knapp_upper"), jobs=2)
    assert write_csv(a) == write_csv(b)


def test_sweep_monotone_and_sandwich():
    recs = run_sweep([0.1, 10**-1.5, 1e-2], 3.0, 2)
    rs = [r.r for r in recs]
    assert rs[0] > rs[1] > rs[2]
    for r in recs:
        assert not sandwich_violations(r)


def test_sandwich_flags():
    r = SweepRecord(epsilon=0.1, p=3, N=2, r=1.0, r_rad=0.5, knapp_upper=0.9, annulus_upper=2.0,
                    residual_full=1e-9, residual_rad=1e-9)
    assert set(sandwich_violations(r)) == {"sandwich:knapp_upper", "sandwich:r_rad"}


def test_csv_roundtrip(tmp_path):
    recs = _synthetic([1.0, 0.5, 0.25, 0.125, 1 / 3])
    recs[1].flags = ["a", "b,c"]
    text = write_csv(recs, tmp_path / "s.csv")
    assert text.splitlines()[0] == "epsilon,p,N,r,r_rad,knapp_upper,annulus_upper,iters,residual,flags"
    assert "\r\n" in text
    assert '"a;b,c"' in text
    back = read_csv(tmp_path / "s.csv")
    assert [r.r for r in back] == [r.r for r in recs]
    assert back[1].flags == ["a", "b,c"]
