import math

import numpy as np
import pytest
import scipy.special as sp
from scipy import integrate, stats

from bihnls.bessel import SERIES_CUTOFF, besselj
from bihnls.errors import DivergentNormError, DomainError, ResolutionError, ValidationError
from bihnls.spectral import SpectralGrid, default_grid, l2_norm
from bihnls.symbol import SymbolParams, quadratic_form, rayleigh_quotient
from bihnls.trialfields import (
    AnnulusParams,
    KnappParams,
    annulus_field,
    cap_measure,
    concentration_mask,
    cst_rad,
    knapp_field,
    knapp_lower_bound,
    knapp_support,
    rho_epsilon,
    sphere_extension_radial,
    sphere_measure,
    theory_exponent,
)

from oracles import cst_rad_richardson, j0_trapezoid, sphere_extension_trapezoid_3d


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 1.5, 2.5])
def test_besselj_against_scipy(nu):
    r = np.concatenate([np.linspace(0, 30, 3001), np.linspace(30, 500, 2000)])
    assert np.max(np.abs(besselj(nu, r) - sp.jv(nu, r))) < 2e-12


def test_besselj_crossover_continuity():
    r = SERIES_CUTOFF + np.array([-1e-9, 0.0, 1e-9])
    for nu in (0.0, 0.5, 1.0):
        assert np.max(np.abs(besselj(nu, r) - sp.jv(nu, r))) < 1e-11
    with pytest.raises(DomainError):
        besselj(0.0, -1.0)
    with pytest.raises(DomainError):
        besselj(-0.5, 1.0)


def test_sphere_measure():
    assert sphere_measure(1) == pytest.approx(2.0)
    assert sphere_measure(2) == pytest.approx(2 * math.pi)
    assert sphere_measure(3) == pytest.approx(4 * math.pi)


def test_extension_n2_matches_trapezoid():
    r = np.linspace(0, 100, 5001)
    assert np.max(np.abs(sphere_extension_radial(r, 2) - j0_trapezoid(r))) < 1e-10
    assert sphere_extension_radial(0.0, 2) == 1.0


def test_extension_n3_closed_form():
    r = np.linspace(1e-3, 100, 5001)
    closed = math.sqrt(2 / math.pi) * np.sin(r) / r
    assert np.max(np.abs(sphere_extension_radial(r, 3) - closed)) < 1e-10
    assert np.max(np.abs(sphere_extension_radial(r, 3) - sphere_extension_trapezoid_3d(r))) < 1e-10


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_extension_origin_value(N):
    assert sphere_extension_radial(0.0, N) == pytest.approx((2 * math.pi) ** (-N / 2) * sphere_measure(N), rel=1e-14)


@pytest.mark.parametrize("N", [2, 3])
def test_extension_decay(N):
    r = np.linspace(1, 2000, 20000)
    v = np.abs(sphere_extension_radial(r, N))
    assert np.all(v <= 1.0 * (1 + r) ** (-(N - 1) / 2) * 2)


def test_extension_domain():
    with pytest.raises(DomainError):
        sphere_extension_radial(1.0, 1)
    with pytest.raises(DomainError):
        sphere_extension_radial(-1.0, 2)
    g = SpectralGrid(2, 10.0, 32)
    assert sphere_extension_radial(g, 2).shape == g.shape


def test_cst_rad_values():
    r = cst_rad(6, 2)
    assert r.value == pytest.approx(4.893848640619516, rel=1e-12)
    assert r.value == pytest.approx(cst_rad_richardson(6, 2), rel=1e-6)
    assert r.quad_error < 1e-6
    # sin^4 profile integrates in closed form: ||.||_4^4 = 4, value 2 pi
    assert cst_rad(4, 3).value == pytest.approx(2 * math.pi, rel=1e-10)
    assert cst_rad(8, 2).value == pytest.approx(cst_rad_richardson(8, 2), rel=1e-6)


def test_cst_rad_symbolic_n3():
    # int_0^inf sin^4 r / r^2 dr = pi / 4
    norm4 = (4 * math.pi * (4 / math.pi / math.pi) * math.pi / 4) ** 0.25
    assert norm4 == pytest.approx(math.sqrt(2.0))
    assert cst_rad(4, 3).norm_p == pytest.approx(norm4, rel=1e-10)


def test_cst_rad_rejects_divergent():
    with pytest.raises(DivergentNormError):
        cst_rad(4, 2)
    with pytest.raises(DivergentNormError):
        cst_rad(3, 3)
    with pytest.raises(DomainError):
        cst_rad(6, 1)


def test_theory_exponent_examples():
    assert theory_exponent(6, 2) == 0.5
    assert theory_exponent(3, 2) == pytest.approx(0.75)
    assert theory_exponent(4, 3) == 0.5
    assert theory_exponent(7, 2) == 0.5
    assert theory_exponent(4, 2) == pytest.approx(0.75 + 1 / 8 - 0.25)


def test_knapp_params():
    kp = KnappParams(1e-2, 2)
    assert kp.delta0 == pytest.approx(math.pi / 16)
    assert kp.delta == pytest.approx(math.pi / 32)
    assert kp.annulus_half_width == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        KnappParams(1.0, 2)
    # sampled cap points stay within the chordal radius sqrt(2) eps^(1/4)
    th = np.linspace(-kp.cap_half_angle, kp.cap_half_angle, 1001)
    pts = np.stack([np.sin(th), np.cos(th)], axis=1)
    assert np.all(1 - pts[:, 1] <= kp.cap_threshold + 1e-15)
    chord = np.linalg.norm(pts - np.array([0.0, 1.0]), axis=1)
    assert chord.max() <= math.sqrt(2) * 1e-2**0.25 * (1 + 1e-12)


def test_knapp_field_support():
    g = SpectralGrid(2, 80.0, 512)
    kp = KnappParams(1e-2, 2)
    f = knapp_field(g, kp)
    U = f.fourier
    assert np.max(np.abs(U)) == 1.0
    rho = g.frequency_radius
    xiN = g.frequencies()[1] + 0 * rho
    on = np.abs(U) > 0.5
    assert np.all(np.abs(rho[on] - 1) <= 0.1)
    assert np.all(1 - xiN[on] / rho[on] <= 0.1 + 1e-15)
    assert np.array_equal(on, knapp_support(g, kp))


def test_knapp_quotient_regression():
    g = SpectralGrid(2, 80.0, 512)
    eps = 1e-2
    f = knapp_field(g, KnappParams(eps, 2))
    params = SymbolParams.from_epsilon(eps)
    R = rayleigh_quotient(f, params, 4)
    assert R == pytest.approx(0.5277224460734566, rel=1e-9)
    # lattice sums against the continuum integrals over the same sector
    se = math.sqrt(eps)
    th = KnappParams(eps, 2).cap_half_angle
    qc = 2 * th * integrate.quad(lambda r: ((r * r - 1) ** 2 + eps) * r, 1 - se, 1 + se)[0]
    area = 2 * th * 2 * se
    assert quadratic_form(f, params) == pytest.approx(qc, rel=0.02)
    assert l2_norm(f) ** 2 == pytest.approx(area, rel=0.02)


@pytest.mark.parametrize("eps", [0.1, 10**-1.5, 1e-2, 1e-3])
def test_knapp_pointwise_lower_bound(eps):
    g = default_grid(eps, 2)
    kp = KnappParams(eps, 2)
    f = knapp_field(g, kp)
    mask = concentration_mask(g, kp)
    assert mask.any()
    assert np.abs(f.physical)[mask].min() >= knapp_lower_bound(eps, 2)


def test_knapp_resolution_error():
    g = SpectralGrid(2, 20.0, 64)
    with pytest.raises(ResolutionError) as info:
        knapp_field(g, KnappParams(1e-3, 2))
    assert info.value.min_points > 64
    assert "points >=" in str(info.value)


def test_cap_measure():
    assert cap_measure(0.04, 2) == pytest.approx(2 * math.acos(0.8))
    assert cap_measure(0.04, 3) == pytest.approx(2 * math.pi * 0.2)
    # N = 4 by quadrature against the closed form for sin^2
    t = math.acos(1 - 0.2)
    closed = 4 * math.pi * (t / 2 - math.sin(2 * t) / 4)
    assert cap_measure(0.04, 4) == pytest.approx(closed, rel=1e-12)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_cap_measure_scaling(N):
    eps = np.logspace(-8, -5, 7)
    y = np.log([cap_measure(e, N) for e in eps])
    slope = stats.linregress(np.log(eps), y).slope
    assert abs(slope - (N - 1) / 4) < 0.03


@pytest.mark.parametrize("eps,s", [(0.1, 0.25), (1e-2, 0.15), (1e-6, 0.4)])
def test_rho_epsilon_closed_form_n2(eps, s):
    # u = r^2 turns the N = 2 integral into an arctan difference
    t, se = eps**s, math.sqrt(eps)
    closed = (math.atan(((1 + t) ** 2 - 1) / se) - math.atan(((1 - t) ** 2 - 1) / se)) / (2 * se)
    assert rho_epsilon(eps, s, 2) == pytest.approx(closed, rel=1e-10)


def test_rho_epsilon_limit():
    eps = 1e-10
    assert math.sqrt(eps) * rho_epsilon(eps, 0.25, 2) == pytest.approx(math.pi / 2, rel=5e-3)


def test_annulus_identity_continuum():
    # 2-D polar cubature of w^2 / g on the annulus vs rho_eps * ||w||^2
    eps, s = 1e-2, 0.15
    w = lambda phi: 1 + 0.5 * np.cos(phi) + 0.2 * np.sin(3 * phi)
    t = eps**s
    inner = lambda r: r / ((r * r - 1) ** 2 + eps)
    val, _ = integrate.dblquad(lambda r, phi: w(phi) ** 2 * inner(r), 0, 2 * np.pi, 1 - t, 1 + t, epsabs=0, epsrel=1e-11)
    wn2 = integrate.quad(lambda phi: w(phi) ** 2, 0, 2 * np.pi, epsabs=0, epsrel=1e-13)[0]
    assert val == pytest.approx(rho_epsilon(eps, s, 2) * wn2, rel=1e-6)


@pytest.mark.parametrize("eps,L,M", [(0.1, 40.0, 256), (1e-2, 80.0, 512)])
def test_annulus_identity_lattice(eps, L, M):
    g = SpectralGrid(2, L, M)
    ap = AnnulusParams(eps)
    f = annulus_field(g, ap)
    q = quadratic_form(f, SymbolParams.from_epsilon(eps))
    assert q == pytest.approx(rho_epsilon(eps, ap.s, 2) * 2 * math.pi, rel=1e-3)
    assert f.meta["weightNormSquared"] == pytest.approx(2 * math.pi)


def test_annulus_custom_weight():
    g = SpectralGrid(2, 40.0, 256)
    ap = AnnulusParams(0.1)
    f = annulus_field(g, ap, weight=lambda t1, t2: 1 + 0.5 * t2)
    assert f.meta["weightNormSquared"] == pytest.approx(2 * math.pi * (1 + 0.125), rel=1e-12)
    q = quadratic_form(f, SymbolParams.from_epsilon(0.1))
    assert q == pytest.approx(rho_epsilon(0.1, ap.s, 2) * f.meta["weightNormSquared"], rel=2e-3)
    samples = np.ones(g.shape)
    f2 = annulus_field(g, ap, weight=samples)
    assert np.allclose(f2.fourier, annulus_field(g, ap).fourier)


def test_annulus_zero_weight_rejected():
    g = SpectralGrid(2, 40.0, 256)
    with pytest.raises(ValidationError):
        annulus_field(g, AnnulusParams(0.1), weight=lambda a, b: 0 * a)
    with pytest.raises(ValidationError):
        AnnulusParams(0.1, 0.5)


def test_annulus_quotient_near_radial_limit():
    eps = 1e-3
    lim = 2 / math.pi * cst_rad(6, 2).value
    f = annulus_field(default_grid(eps, 2), AnnulusParams(eps))
    R = rayleigh_quotient(f, SymbolParams.from_epsilon(eps), 6)
    assert R / math.sqrt(eps) == pytest.approx(lim, rel=0.05)
