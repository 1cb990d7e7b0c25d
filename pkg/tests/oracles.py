"""Independent reference computations used by the test suite.

None of these routines share code with the package: the slab roots come from
the textbook transcendental equations, the graded-profile eigenvalues from a
finite-difference Helmholtz operator, the grating and coupler responses from
direct integration of the coupled-mode ODEs.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq


def slab_te_indices(d, n_core, n_clad, wavelength):
    """Guided effective indices of a symmetric step slab (scalar/TE), descending.

    With u = k0 d/2 sqrt(n1^2 - n^2) and V = k0 d/2 sqrt(n1^2 - n2^2) the even
    modes solve u tan u = sqrt(V^2 - u^2) and the odd ones -u cot u = sqrt(V^2 - u^2).
    """
    k0 = 2 * math.pi / wavelength
    V = 0.5 * k0 * d * math.sqrt(n_core**2 - n_clad**2)
    out = []
    m = 0
    while m * math.pi / 2 < V:
        lo = m * math.pi / 2 + 1e-13
        hi = min((m + 1) * math.pi / 2, V) - 1e-13
        if m % 2 == 0:
            f = lambda u: u * math.sin(u) - math.sqrt(max(V * V - u * u, 0.0)) * math.cos(u)
        else:
            f = lambda u: -u * math.cos(u) - math.sqrt(max(V * V - u * u, 0.0)) * math.sin(u)
        if hi > lo and f(lo) * f(hi) < 0:
            u = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
            out.append(math.sqrt(n_core**2 - (2 * u / (k0 * d)) ** 2))
        m += 1
    return out


def _fd_top(z, n2, k0, count):
    h = z[1] - z[0]
    diag = -2.0 / h**2 + k0**2 * n2
    off = np.full(len(z) - 1, 1.0 / h**2)
    n = len(z)
    vals = eigh_tridiagonal(diag, off, eigvals_only=True, select="i",
                            select_range=(n - count, n - 1))
    return np.sort(np.sqrt(vals) / k0)[::-1]


def fd_indices(n_of_z, a, b, wavelength, count, h):
    """Largest ``count`` effective indices of  E'' + k0^2 n(z)^2 E = beta^2 E.

    Dirichlet walls at z = a and z = b; second-order three-point stencil at
    spacing ``h`` and at ``h/2``, combined by Richardson extrapolation.
    """
    k0 = 2 * math.pi / wavelength
    res = []
    for step in (h, h / 2):
        n = int(round((b - a) / step)) + 1
        z = np.linspace(a, b, n)[1:-1]
        res.append(_fd_top(z, n_of_z(z) ** 2, k0, count))
    return (4 * res[1] - res[0]) / 3


def cmt_grating(kappa, delta, length):
    """Reflection and transmission of a uniform grating from the contra-directional ODE.

    dA/dz = -j delta A - j kappa B,  dB/dz = j kappa A + j delta B; the
    fundamental matrix over [0, L] is integrated numerically and the
    boundary condition B(L) = 0 applied afterwards.
    """
    M = np.array([[-1j * delta, -1j * kappa], [1j * kappa, 1j * delta]])

    def rhs(_, y):
        return (M @ y.reshape(2, 2)).ravel()

    sol = solve_ivp(rhs, (0.0, length), np.eye(2, dtype=complex).ravel(), method="DOP853",
                    rtol=1e-12, atol=1e-14)
    T = sol.y[:, -1].reshape(2, 2)
    r = -T[1, 0] / T[1, 1]
    t = 1.0 / T[1, 1]
    return r, t


def codirectional_transfer(kappa, delta, length):
    """Cross-coupled power of two codirectional guides: kappa^2 sin^2(gL)/g^2, g^2 = kappa^2 + (delta/2)^2."""
    g = math.sqrt(kappa**2 + (delta / 2) ** 2)
    return (kappa / g) ** 2 * math.sin(g * length) ** 2


def sinc_poling_integral(delta_beta, period, length_mm, order=1):
    """int_0^L exp(j x y) dy = L sinc(x L / 2) exp(j x L / 2), x = delta_beta - 2 pi k / Lambda.

    ``delta_beta`` in rad/um, ``period`` in um, ``length_mm`` in mm; result in um.
    """
    L = 1e3 * length_mm
    x = np.asarray(delta_beta, dtype=float) - 2 * math.pi * order / period
    half = 0.5 * x * L
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(half == 0, 1.0, np.sin(half) / np.where(half == 0, 1.0, half))
    return L * s * np.exp(1j * half)
