"""Independent reference computations used by the tests.

None of these call into the package's numerical kernels.
"""

import math

import numpy as np
import scipy.special as sp
from scipy import integrate, optimize
from scipy.integrate import simpson


def j0_trapezoid(r, n=256):
    """J_0 by the n-point trapezoid rule on the circle average of e^{i r cos phi}."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    phi = 2 * np.pi * np.arange(n) / n
    return np.mean(np.exp(1j * r[:, None] * np.cos(phi)[None, :]), axis=1).real


def sphere_extension_trapezoid_3d(r, n=256):
    """(2 pi)^(-3/2) int_{S^2} e^{i r theta_3} dsigma by Gauss-Legendre in cos(theta)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t, w = np.polynomial.legendre.leggauss(n)
    vals = (w[None, :] * np.cos(r[:, None] * t[None, :])).sum(axis=1)
    return 2 * np.pi * vals / (2 * np.pi) ** 1.5


def cst_rad_richardson(p, N, R=1000.0 * math.pi, h=0.02):
    """|S^{N-1}| / ||r^-nu J_nu||_p^2 by composite Simpson at h and h/2,
    Richardson-extrapolated, closed by the mean-envelope tail at R."""
    nu = (N - 2) / 2

    def body(step):
        r = np.arange(0.0, R + step / 2, step)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(r > 0, sp.jv(nu, r) / np.where(r > 0, r, 1.0) ** nu, 1 / (2**nu * math.gamma(nu + 1)))
        return simpson(np.abs(f) ** p * r ** (N - 1), x=r)

    b1, b2 = body(h), body(h / 2)
    b = b2 + (b2 - b1) / 15
    e = (p - 2) * (N - 1) / 2
    mom = math.gamma((p + 1) / 2) / (math.sqrt(math.pi) * math.gamma(p / 2 + 1))
    tail = (2 / math.pi) ** (p / 2) * mom * R ** (1 - e) / (e - 1)
    om = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    return om / (om * (b + tail)) ** (2 / p)


def golden_max(f, a, b, tol=1e-13):
    """Maximize a unimodal f on [a, b] by golden-section search."""
    gr = (math.sqrt(5) - 1) / 2
    c, d = b - gr * (b - a), a + gr * (b - a)
    while abs(b - a) > tol * (1 + abs(a) + abs(b)):
        if f(c) > f(d):
            b, d = d, c
            c = b - gr * (b - a)
        else:
            a, c = c, d
            d = a + gr * (b - a)
    x = 0.5 * (a + b)
    return x, f(x)


def gaussian_quadratic_form_1d(a, b):
    """int ((xi^2 - a)^2 + b - a^2) e^{-xi^2} d xi by adaptive quadrature."""
    val, _ = integrate.quad(lambda x: ((x * x - a) ** 2 + b - a * a) * math.exp(-x * x), -np.inf, np.inf, epsabs=0, epsrel=1e-13)
    return val


def coarse_quotient_minimum(eps, p, L, M, seed=0):
    """Minimize the lattice quotient over real fields with L-BFGS.

    Uses its own transform and symbol code on an N = 2 grid.
    """
    h = 2 * L / M
    k = 2 * np.pi * np.fft.fftfreq(M, h)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    g = (KX**2 + KY**2 - 1) ** 2 + eps
    cell = h * h
    # q = sum g |uhat|^2 dxi^2 with uhat = h^2/(2 pi) fft(u) (phase drops out)
    scale = cell / (2 * np.pi)
    dxi2 = (np.pi / L) ** 2

    def fg(x):
        u = x.reshape(M, M)
        U = scale * np.fft.fft2(u)
        q = np.sum(g * np.abs(U) ** 2) * dxi2
        s = np.sum(np.abs(u) ** p) * cell
        n2 = s ** (2 / p)
        # dq/du = 2 scale^2 dxi2 M^2 ifft(g fft(u)) (real)
        dq = 2 * scale**2 * dxi2 * M * M * np.fft.ifft2(g * np.fft.fft2(u)).real
        ds = p * np.abs(u) ** (p - 2) * u * cell
        dn2 = (2 / p) * s ** (2 / p - 1) * ds
        return q / n2, ((dq * n2 - q * dn2) / n2**2).ravel()

    X, Y = np.meshgrid(-L + h * np.arange(M), -L + h * np.arange(M), indexing="ij")
    rng = np.random.default_rng(seed)
    x0 = (np.cos(X) * np.exp(-(X**2 + Y**2) / 20) + 0.1 * rng.standard_normal((M, M))).ravel()
    res = optimize.minimize(fg, x0, jac=True, method="L-BFGS-B", options={"maxiter": 20000, "gtol": 1e-12, "ftol": 1e-15})
    return res.fun
