"""Guided modes of Ti:LiNbO3 channel waveguides by the effective-index method.

Each lateral position gets a depth slab (air cover, diffused substrate)
whose fundamental effective index n_d(x) defines a lateral graded-index
problem. Both 1-D problems are solved with the same transfer-matrix
shooting scheme: the scalar field is propagated layer by layer through a
staircase profile and the mismatch with the decaying solution in the
far half-space is bracketed on a uniform n_eff scan and bisected.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, NumericError
from .material import (
    DiffusionGeometry,
    MaterialParams,
    build_index_profile,
    default_grid,
    depth_shape,
    lateral_shape,
    peak_index_increase,
    resolve_branch,
    resolve_polarization,
)

N_BRACKETS = 200
BISECTION_TOL = 1e-10
MAX_MODES = 2
# Minimum fraction of lateral power inside the computational window for a
# root to count as a guided mode. Roots closer to the substrate index spread
# far beyond the strip, where the effective-index reduction is unreliable.
MIN_CONFINEMENT = 0.99

C_UM_PER_FS = 0.299792458


class ModeTruncationWarning(UserWarning):
    """More than two lateral modes were found; the extra ones were dropped."""


# 1-D layered solver ---------------------------------------------------------

def _layer_step(E, dE, q2, h):
    """Advance (E, E') through a homogeneous layer with E'' = -q2 E."""
    pos = q2 > 0
    r = np.sqrt(np.abs(q2))
    rh = r * h
    c = np.where(pos, np.cos(rh), np.cosh(rh))
    sn = np.where(pos, np.sin(rh), np.sinh(rh))
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(r > 0, sn / r, h)
    t = np.where(pos, -r * sn, r * sn)
    return c * E + s * dE, t * E + c * dE


def _shoot(thickness, n2_layers, k0, neff, n2_top, n2_bot, keep_fields=False):
    """Characteristic function of the layered guide.

    ``n2_layers`` has shape (..., K); ``neff`` has shape (..., M). Returns the
    mismatch F with shape (..., M); F = 0 on a guided mode.
    """
    neff = np.asarray(neff, dtype=float)
    n2eff = neff**2
    g_top = k0 * np.sqrt(np.maximum(n2eff - n2_top, 0.0))
    g_bot = k0 * np.sqrt(np.maximum(n2eff - n2_bot, 0.0))
    E = np.ones_like(neff)
    dE = g_top.copy()
    fields = [E] if keep_fields else None
    scale = np.zeros_like(neff)  # accumulated log of renormalizations
    n2_layers = np.asarray(n2_layers, dtype=float)
    for j in range(n2_layers.shape[-1]):
        q2 = k0 * k0 * (n2_layers[..., j : j + 1] - n2eff)
        E, dE = _layer_step(E, dE, q2, thickness[j])
        norm = np.abs(E) + np.abs(dE) / k0
        E = E / norm
        dE = dE / norm
        if keep_fields:
            scale = scale + np.log(norm)
            fields.append(E * np.exp(scale))
    F = dE + g_bot * E
    if keep_fields:
        return F, np.stack(fields, axis=-1)
    return F


def _refine(shoot, a, b, fa, tol, sections=16):
    """Shrink sign-change brackets [a, b] below ``tol``.

    Each pass evaluates ``sections - 1`` interior points per bracket, which is
    bisection carried out four levels at a time.
    """
    frac = np.linspace(0.0, 1.0, sections + 1)
    for _ in range(60):
        if np.max(b - a) < tol:
            return a, b
        pts = a[:, None] + (b - a)[:, None] * frac[None, :]
        f = np.empty_like(pts)
        f[:, 0] = fa
        f[:, 1:-1] = shoot(pts[:, 1:-1])
        f[:, -1] = -np.sign(fa)
        flip = np.sign(f[:, 1:]) != np.sign(fa)[:, None]
        k = np.argmax(flip, axis=1)
        rows = np.arange(len(a))
        a, b, fa = pts[rows, k], pts[rows, k + 1], f[rows, k]
    raise NumericError(f"bisection did not converge; bracket widths {b - a}")


def _mode_field(thickness, n2_layers, k0, neff, n2_top, n2_bot):
    """Field at the layer edges, shot inward from both half-spaces.

    Shooting through the far cladding from one side amplifies the root error
    exponentially, so each half is taken from the side it decays toward and
    the two are joined at the layer of highest index.
    """
    nf = np.array([neff])
    _, fwd = _shoot(thickness, n2_layers, k0, nf, n2_top, n2_bot, keep_fields=True)
    _, bwd = _shoot(thickness[::-1], n2_layers[::-1], k0, nf, n2_bot, n2_top, keep_fields=True)
    fwd = fwd[0]
    bwd = bwd[0][::-1]
    j = int(np.argmax(n2_layers))
    # join at the edge between layers j and j+1 unless that node is a zero
    if abs(fwd[j]) < 1e-3 * np.max(np.abs(fwd[: j + 1])):
        j = j + 1 if j + 1 < len(fwd) - 1 else j - 1
    bwd = bwd * (fwd[j] / bwd[j])
    return np.concatenate([fwd[: j + 1], bwd[j + 1 :]])


def _find_roots(thickness, n2_layers, k0, lo, hi, n2_top, n2_bot, n_brackets=N_BRACKETS,
                tol=BISECTION_TOL):
    """All sign-change roots of the characteristic function in (lo, hi), descending."""
    if not hi > lo:
        return np.array([])
    grid = np.linspace(lo, hi, n_brackets + 1)
    # keep strictly inside so both half-space decay constants are positive
    grid[0] = lo + 1e-3 * (grid[1] - grid[0])
    grid[-1] = hi - 1e-3 * (grid[-1] - grid[-2])
    F = _shoot(thickness, n2_layers, k0, grid, n2_top, n2_bot)
    sgn = np.sign(F)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if len(idx) == 0:
        return np.array([])
    a, b = _refine(
        lambda n: _shoot(thickness, n2_layers, k0, n, n2_top, n2_bot),
        grid[idx], grid[idx + 1], F[idx], tol,
    )
    return np.sort(0.5 * (a + b))[::-1]


def _layers_from_nodes(grid, n_nodes):
    grid = np.asarray(grid, dtype=float)
    n2 = np.asarray(n_nodes, dtype=float) ** 2
    return np.diff(grid), 0.5 * (n2[..., 1:] + n2[..., :-1])


@dataclass(frozen=True)
class SlabMode:
    n_eff: float
    grid: np.ndarray
    field: np.ndarray  # unit L2 norm on grid (trapezoid rule)
    decay_top: float  # 1/um, field decay constant beyond grid[0]
    decay_bottom: float  # 1/um, beyond grid[-1]

    @property
    def confinement(self) -> float:
        """Fraction of power inside the sampled window (exponential tails outside)."""
        f = self.field
        inside = float(np.trapezoid(f * f, self.grid))
        tail = f[0] ** 2 / (2 * self.decay_top) + f[-1] ** 2 / (2 * self.decay_bottom)
        return inside / (inside + tail)

    @property
    def nodes(self) -> int:
        f = self.field
        big = np.abs(f) > 1e-6 * np.max(np.abs(f))
        s = np.sign(f[big])
        return int(np.count_nonzero(s[1:] != s[:-1]))


def solve_layered(thickness, n_layers, wavelength, n_top, n_bottom, grid=None,
                  n_brackets=N_BRACKETS, tol=BISECTION_TOL):
    """Guided modes of a 1-D stack of homogeneous layers between two half-spaces.

    Parameters
    ----------
    thickness, n_layers : array_like
        Layer thicknesses (um) and refractive indices, listed from the top
        half-space to the bottom one.
    wavelength : float
        Vacuum wavelength in um.
    n_top, n_bottom : float
        Indices of the bounding half-spaces.
    grid : array_like, optional
        Coordinates of the layer edges (len(thickness) + 1). Defaults to
        cumulative thickness starting at zero.

    Returns
    -------
    list of SlabMode, ordered by descending effective index.
    """
    thickness = np.asarray(thickness, dtype=float)
    n2_layers = np.asarray(n_layers, dtype=float) ** 2
    return _solve_n2(thickness, n2_layers, wavelength, n_top, n_bottom, grid, n_brackets, tol)


def _solve_n2(thickness, n2_layers, wavelength, n_top, n_bottom, grid=None,
              n_brackets=N_BRACKETS, tol=BISECTION_TOL):
    k0 = 2 * math.pi / wavelength
    if grid is None:
        grid = np.concatenate([[0.0], np.cumsum(thickness)])
    lo = max(n_top, n_bottom)
    hi = math.sqrt(float(np.max(n2_layers)))
    roots = _find_roots(thickness, n2_layers, k0, lo, hi, n_top**2, n_bottom**2, n_brackets, tol)
    modes = []
    for neff in roots:
        f = _mode_field(thickness, n2_layers, k0, neff, n_top**2, n_bottom**2)
        f = f / math.sqrt(np.trapezoid(f * f, grid))
        if f[np.argmax(np.abs(f))] < 0:
            f = -f
        modes.append(SlabMode(
            n_eff=float(neff),
            grid=np.asarray(grid),
            field=f,
            decay_top=k0 * math.sqrt(neff**2 - n_top**2),
            decay_bottom=k0 * math.sqrt(neff**2 - n_bottom**2),
        ))
    return modes


def solve_profile(grid, n_nodes, wavelength, n_top, n_bottom, **kw):
    """Guided modes of a graded 1-D profile sampled at ``grid`` nodes.

    The profile is replaced by a staircase whose layers carry the mean n**2 of
    their two end nodes.
    """
    thickness, n2 = _layers_from_nodes(grid, n_nodes)
    return _solve_n2(thickness, n2, wavelength, n_top, n_bottom, np.asarray(grid), **kw)


# Effective-index method -----------------------------------------------------

@dataclass(frozen=True)
class GuidedMode:
    wavelength: float
    polarization: str
    mode_number: int
    width: float
    n_eff: float
    beta: float  # rad/um
    x: np.ndarray
    z: np.ndarray
    lateral: np.ndarray  # X(x), unit norm
    depth: np.ndarray  # Z(z), unit norm
    lateral_decay: float  # 1/um outside the lateral window
    n_bulk: float
    delta_n: float
    geometry: DiffusionGeometry = field(repr=False)
    n_depth: np.ndarray = field(repr=False)  # n_d(x) used for the lateral solve

    @cached_property
    def profile(self) -> np.ndarray:
        """Separable field E(x, z) = Z(z) X(x) with shape (len(z), len(x))."""
        return np.outer(self.depth, self.lateral)

    def lateral_field(self, x) -> np.ndarray:
        """X(x) with exponential tails continued beyond the sampled window."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.x, self.lateral)
        left, right = self.x[0], self.x[-1]
        g = self.lateral_decay
        lo = x < left
        hi = x > right
        out = np.where(lo, self.lateral[0] * np.exp(-g * (left - x)), out)
        out = np.where(hi, self.lateral[-1] * np.exp(-g * (x - right)), out)
        return out

    def depth_field(self, z) -> np.ndarray:
        return np.interp(z, self.z, self.depth, right=0.0)


def _depth_indices(geom, n_b, dn, g_values, z, wavelength, n_brackets=N_BRACKETS, chunk=24):
    """Fundamental depth-slab index for each lateral weight g.

    Weights are processed from strongest to weakest; once a whole chunk is
    below the slab cutoff the rest are too and keep n_d = n_b.
    """
    g_values = np.asarray(g_values, dtype=float)
    out = np.full(len(g_values), float(n_b))
    order = np.argsort(-g_values)
    for start in range(0, len(order), chunk):
        sel = order[start : start + chunk]
        vals, guided = _depth_chunk(geom, n_b, dn, g_values[sel], z, wavelength, n_brackets)
        out[sel] = vals
        if not np.any(guided):
            break
    return out


def _depth_chunk(geom, n_b, dn, g_values, z, wavelength, n_brackets):
    k0 = 2 * math.pi / wavelength
    f = depth_shape(z, geom.diffusion_length)
    thickness = np.diff(z)
    n_nodes = n_b + dn * np.outer(g_values, f)
    n2_layers = 0.5 * (n_nodes[:, 1:] ** 2 + n_nodes[:, :-1] ** 2)
    n_top2, n_bot2 = 1.0, n_b**2
    hi = n_b + dn * g_values
    lo = np.full_like(hi, n_b)
    s = np.linspace(0.0, 1.0, n_brackets + 1)
    s[0], s[-1] = 1e-3 / n_brackets, 1 - 1e-3 / n_brackets
    grid = lo[:, None] + (hi - lo)[:, None] * s[None, :]
    F = _shoot(thickness, n2_layers, k0, grid, n_top2, n_bot2)
    out = np.full(len(g_values), float(n_b))
    sgn = np.sign(F)
    change = sgn[:, :-1] * sgn[:, 1:] < 0
    has = change.any(axis=1)
    if not np.any(has):
        return out, has
    # largest-index sign change is the fundamental
    last = change.shape[1] - 1 - np.argmax(change[:, ::-1], axis=1)
    rows = np.nonzero(has)[0]
    a = grid[rows, last[rows]]
    b = grid[rows, last[rows] + 1]
    fa = F[rows, last[rows]]
    sub = n2_layers[rows]
    a, b = _refine(lambda n: _shoot(thickness, sub, k0, n, n_top2, n_bot2), a, b, fa,
                   BISECTION_TOL)
    out[rows] = 0.5 * (a + b)
    return out, has


def depth_mode(geom, mat, wavelength, polarization, z=None):
    """Fundamental depth mode at the strip centre."""
    branch = resolve_branch(polarization)
    if z is None:
        _, z = default_grid(geom)
    n_b = mat.bulk_index(wavelength, branch)
    dn = peak_index_increase(geom, branch, wavelength)
    n_nodes = n_b + dn * depth_shape(z, geom.diffusion_length)
    thickness, n2 = _layers_from_nodes(z, n_nodes)
    modes = _solve_n2(thickness, n2, wavelength, 1.0, n_b, z)
    if not modes:
        return None
    return modes[0]


def effective_depth_index(geom, mat, wavelength, polarization, x=None):
    """n_d(x): fundamental depth-slab index at each lateral grid point."""
    branch = resolve_branch(polarization)
    gx, gz = default_grid(geom)
    x = gx if x is None else np.asarray(x, dtype=float)
    n_b = mat.bulk_index(wavelength, branch)
    dn = peak_index_increase(geom, branch, wavelength)
    g = lateral_shape(x, geom.strip_width, geom.diffusion_length)
    # symmetric profile: solve once per distinct |x|
    ax = np.abs(x)
    uniq, inv = np.unique(np.round(ax, 12), return_inverse=True)
    gu = lateral_shape(uniq, geom.strip_width, geom.diffusion_length)
    nd_u = _depth_indices(geom, n_b, dn, gu, gz, wavelength)
    del g
    return nd_u[inv]


def solve_modes(geom: DiffusionGeometry, mat: MaterialParams, wavelength: float,
                polarization: str, max_modes: int | None = MAX_MODES,
                min_confinement: float = MIN_CONFINEMENT) -> list[GuidedMode]:
    """Lateral guided modes ordered by descending n_eff (empty below cutoff).

    Parameters
    ----------
    max_modes : int or None
        Modes beyond this count are dropped with a ModeTruncationWarning.
        ``None`` keeps all of them.
    min_confinement : float
        Lateral roots with less than this power fraction inside the window
        are treated as cut off.
    """
    pol = resolve_polarization(polarization)
    branch = resolve_branch(pol)
    x, z = default_grid(geom)
    n_b = mat.bulk_index(wavelength, branch)
    dn = peak_index_increase(geom, branch, wavelength)
    zmode = depth_mode(geom, mat, wavelength, pol, z)
    if zmode is None:
        return []
    n_d = effective_depth_index(geom, mat, wavelength, pol, x)
    lateral = solve_profile(x, n_d, wavelength, n_b, n_b)
    lateral = [lm for lm in lateral if lm.confinement >= min_confinement]
    if max_modes is not None and len(lateral) > max_modes:
        warnings.warn(
            f"{len(lateral)} lateral modes at w={geom.strip_width} um, "
            f"lambda={wavelength} um, {pol}; keeping {max_modes}",
            ModeTruncationWarning,
            stacklevel=2,
        )
        lateral = lateral[:max_modes]
    out = []
    for m, lm in enumerate(lateral):
        if lm.nodes != m:
            raise NumericError(
                f"lateral mode {m} has {lm.nodes} nodes at w={geom.strip_width} um, "
                f"lambda={wavelength} um; a root was skipped by the bracket scan"
            )
        X = lm.field.copy()
        # the profile and grid are mirror symmetric, so each mode has parity (-1)^m;
        # project out the bisection-level asymmetry left by the two-sided shooting
        X = 0.5 * (X + (-1) ** m * X[::-1])
        X = X / math.sqrt(np.trapezoid(X * X, x))
        # fix sign: positive lobe on the +x side for odd modes, centre positive for even
        ref = X[np.argmax(np.abs(X) * (x >= 0))]
        if ref < 0:
            X = -X
        out.append(GuidedMode(
            wavelength=float(wavelength),
            polarization=pol,
            mode_number=m,
            width=geom.strip_width,
            n_eff=lm.n_eff,
            beta=2 * math.pi * lm.n_eff / wavelength,
            x=x,
            z=z,
            lateral=X,
            depth=zmode.field,
            lateral_decay=lm.decay_bottom,
            n_bulk=n_b,
            delta_n=dn,
            geometry=geom,
            n_depth=n_d,
        ))
    return out


def beta_vs_width(widths, wavelength, polarization, m, geom=None, mat=None, threads=1):
    """beta(w) in rad/um for lateral mode ``m``; NaN where the mode is absent."""
    geom = geom or DiffusionGeometry()
    mat = mat or MaterialParams()
    widths = [float(w) for w in widths]

    def one(w):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModeTruncationWarning)
            modes = solve_modes(geom.with_width(w), mat, wavelength, polarization)
        return modes[m].beta if m < len(modes) else float("nan")

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            betas = list(ex.map(one, widths))
    else:
        betas = [one(w) for w in widths]
    return np.array(widths), np.array(betas)


def _beta_row(args):
    geom, mat, wavelength, polarization, w = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModeTruncationWarning)
        modes = solve_modes(geom.with_width(w), mat, wavelength, polarization)
    b = [md.beta for md in modes[:MAX_MODES]]
    return b + [float("nan")] * (MAX_MODES - len(b))


def beta_table(widths, wavelength, polarization, geom=None, mat=None, threads=1):
    """(widths, beta_m0, beta_m1) from one solve per width; NaN where a mode is absent.

    The solver is pure Python, so ``threads > 1`` uses worker processes.
    Every width is solved independently and the result does not depend on
    the number of workers.
    """
    geom = geom or DiffusionGeometry()
    mat = mat or MaterialParams()
    widths = [float(w) for w in widths]
    jobs = [(geom, mat, wavelength, polarization, w) for w in widths]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(threads, len(jobs))) as ex:
            rows = list(ex.map(_beta_row, jobs))
    else:
        rows = [_beta_row(j) for j in jobs]
    rows = np.array(rows, dtype=float).reshape(len(widths), MAX_MODES)
    return np.array(widths), rows[:, 0], rows[:, 1]


def write_beta_csv(path, widths, beta_m0, beta_m1, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["w_um", "beta_m0_rad_per_um", "beta_m1_rad_per_um"])
        for row in zip(widths, beta_m0, beta_m1):
            w.writerow([f"{v:.10g}" for v in row])


def _trapz_product(xa, fa, xb, fb):
    if len(xa) == len(xb) and np.allclose(xa, xb, rtol=0, atol=1e-12):
        return float(np.trapezoid(fa * fb, xa))
    grid = xa if (xa[-1] - xa[0]) >= (xb[-1] - xb[0]) else xb
    return float(np.trapezoid(np.interp(grid, xa, fa, 0, 0) * np.interp(grid, xb, fb, 0, 0), grid))


def mode_overlap(a: GuidedMode, b: GuidedMode, lateral_shift: float = 0.0) -> float:
    """Integral of E_a(x - shift, z) E_b(x, z) over the cross-section.

    The fields are separable, so the 2-D trapezoid rule factors into a
    lateral and a depth integral on b's grid.
    """
    xb = b.x
    lat = float(np.trapezoid(a.lateral_field(xb - lateral_shift) * b.lateral, xb))
    dep = _trapz_product(a.z, a.depth, b.z, b.depth)
    return lat * dep


# Cached per-waveguide mode tables ------------------------------------------

class WaveguideModes:
    """Memoized mode solves for one waveguide geometry and material.

    Serves as the mode database for phase matching, spectra and couplers.
    """

    def __init__(self, geom: DiffusionGeometry, mat: MaterialParams | None = None):
        self.geom = geom
        self.mat = mat or MaterialParams()
        self._cache: dict = {}
        self._curves: dict = {}

    @property
    def width(self):
        return self.geom.strip_width

    def modes(self, wavelength: float, polarization: str) -> list[GuidedMode]:
        key = (round(float(wavelength), 12), resolve_polarization(polarization))
        if key not in self._cache:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ModeTruncationWarning)
                self._cache[key] = solve_modes(self.geom, self.mat, key[0], key[1])
        return self._cache[key]

    def mode(self, wavelength: float, polarization: str, m: int) -> GuidedMode:
        ms = self.modes(wavelength, polarization)
        if m >= len(ms):
            raise DomainError(
                f"mode m={m} not guided at w={self.width} um, lambda={wavelength} um, "
                f"{resolve_polarization(polarization)}"
            )
        return ms[m]

    def beta(self, wavelength: float, polarization: str, m: int) -> float:
        return self.mode(wavelength, polarization, m).beta

    def beta_curve(self, polarization: str, m: int, omega_min: float, omega_max: float,
                   nodes: int = 9) -> CubicSpline:
        """Cubic spline of beta (rad/um) as a function of omega (rad/fs)."""
        key = (resolve_polarization(polarization), m, round(omega_min, 12), round(omega_max, 12),
               nodes)
        if key not in self._curves:
            omegas = np.linspace(omega_min, omega_max, nodes)
            lams = 2 * math.pi * C_UM_PER_FS / omegas
            betas = [self.beta(float(lam), polarization, m) for lam in lams]
            self._curves[key] = CubicSpline(omegas, betas)
        return self._curves[key]


def omega_from_wavelength(wavelength_um):
    return 2 * math.pi * C_UM_PER_FS / np.asarray(wavelength_um, dtype=float)


def wavelength_from_omega(omega):
    return 2 * math.pi * C_UM_PER_FS / np.asarray(omega, dtype=float)
