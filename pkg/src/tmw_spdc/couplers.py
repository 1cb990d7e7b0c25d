"""Evanescent directional couplers, S-bends and tapers by coupled-mode theory.

Lengths along the guide are in mm, lateral distances in um, coupling
coefficients and mismatches in rad/mm.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import ConfigError, NumericError
from .material import depth_shape, lateral_shape
from .modes import C_UM_PER_FS, GuidedMode, WaveguideModes

SBEND_LENGTH = 10.0  # mm
SBEND_OFFSET = 127.0  # um
TAPER_LENGTH = 1.5  # mm
KAPPA_FLOOR = 1e-6  # rad/mm
RTOL = 1e-10
ATOL = 1e-12


class CouplerDesignWarning(UserWarning):
    pass


class RadiatedModeWarning(UserWarning):
    """An odd mode reached the narrow end of a taper and was discarded."""


@dataclass(frozen=True)
class SBend:
    length: float = SBEND_LENGTH  # mm
    offset: float = SBEND_OFFSET  # um

    def __post_init__(self):
        if not (self.length > 0 and self.offset >= 0):
            raise ConfigError("S-bend needs a positive length and a non-negative offset")


@dataclass(frozen=True)
class Taper:
    length: float = TAPER_LENGTH  # mm
    w_from: float = 4.0
    w_to: float = 2.2

    def __post_init__(self):
        if self.length < 0:
            raise ConfigError("taper length must be non-negative")


@dataclass(frozen=True)
class CouplerGeometry:
    width_a: float  # um
    width_b: float  # um
    gap: float  # um, edge to edge
    length: float  # mm, straight coupling section
    sbend: SBend | None = None
    taper: Taper | None = None

    def __post_init__(self):
        if not self.gap > 0:
            raise ConfigError("coupler gap must be positive")
        if not (self.width_a > 0 and self.width_b > 0):
            raise ConfigError("coupler widths must be positive")
        if self.length < 0:
            raise ConfigError("coupler length must be non-negative")

    @property
    def total_length(self) -> float:
        return self.length + (self.sbend.length if self.sbend else 0.0)

    def center_separation(self, extra_gap: float = 0.0) -> float:
        return 0.5 * self.width_a + self.gap + extra_gap + 0.5 * self.width_b

    def gap_at(self, y):
        """Edge gap (um) at position y (mm): constant, then the raised-cosine S-bend."""
        y = np.asarray(y, dtype=float)
        if self.sbend is None:
            return np.full(y.shape, self.gap) if y.ndim else float(self.gap)
        s = sbend_separation(self.sbend.length, self.sbend.offset,
                             np.clip(y - self.length, 0.0, self.sbend.length))
        return self.gap + s


def sbend_separation(length: float, offset: float, y):
    """Raised-cosine lateral offset S/2 (1 - cos(π y / L_b)), um."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > length * (1 + 1e-12)):
        raise ConfigError("S-bend position outside [0, L_b]")
    out = 0.5 * offset * (1 - np.cos(math.pi * y / length))
    return float(out) if out.ndim == 0 else out


# Coupling coefficients ---------------------------------------------------------

def _perturbation_overlap(a: GuidedMode, b: GuidedMode, shift: float) -> float:
    """(k0^2 / 2 β_a) ∫∫ δε_b E_a E_b with guide b centred at x = shift (1/um)."""
    h = min(a.x[1] - a.x[0], b.x[1] - b.x[0])
    lo = min(a.x[0], shift + b.x[0])
    hi = max(a.x[-1], shift + b.x[-1])
    x = np.linspace(lo, hi, int(math.ceil((hi - lo) / h)) + 1)
    xa = a.lateral_field(x)
    xb = b.lateral_field(x - shift)
    geo = b.geometry
    g = lateral_shape(x - shift, geo.strip_width, geo.diffusion_length)
    z = a.z
    za = a.depth
    zb = np.interp(z, b.z, b.depth, right=0.0)
    f = depth_shape(z, geo.diffusion_length)
    dn = b.delta_n
    n_b = b.n_bulk
    lin = 2 * n_b * dn * np.trapezoid(f * za * zb, z) * np.trapezoid(g * xa * xb, x)
    quad = dn * dn * np.trapezoid(f * f * za * zb, z) * np.trapezoid(g * g * xa * xb, x)
    k0 = 2 * math.pi / a.wavelength
    return k0 * k0 / (2 * a.beta) * (lin + quad)


def coupling_coefficient(mode_a: GuidedMode, mode_b: GuidedMode, gap: float,
                         separation: float | None = None) -> float:
    """Coupling coefficient between two parallel guides, rad/mm.

    ``gap`` is the edge-to-edge separation; the centre distance is
    w_a/2 + gap + w_b/2 unless ``separation`` is given. The two directional
    overlaps κ_ab and κ_ba are combined as their geometric mean so the
    coupled-mode equations conserve power.
    """
    if abs(mode_a.wavelength - mode_b.wavelength) > 1e-12 or mode_a.polarization != mode_b.polarization:
        raise ConfigError("coupled modes must share wavelength and polarization")
    if separation is None:
        if not gap > 0:
            raise ConfigError("coupler gap must be positive")
        separation = 0.5 * mode_a.width + gap + 0.5 * mode_b.width
    k_ab = _perturbation_overlap(mode_a, mode_b, separation)
    k_ba = _perturbation_overlap(mode_b, mode_a, -separation)
    kappa = 1e3 * math.sqrt(abs(k_ab * k_ba))
    if kappa < KAPPA_FLOOR:
        warnings.warn(f"negligible coupling {kappa:.3g} rad/mm", CouplerDesignWarning, stacklevel=2)
    return kappa


# Coupled-mode propagation ---------------------------------------------------------

@dataclass(frozen=True)
class CoupledAmplitudes:
    y: np.ndarray  # mm
    A: np.ndarray  # shape (len(y), ...) complex
    B: np.ndarray
    labels: tuple = ()

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.A) ** 2 + np.abs(self.B) ** 2

    def write_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y_mm", "abs2_A", "abs2_B"])
            a = np.abs(self.A.reshape(len(self.y), -1)[:, 0]) ** 2
            b = np.abs(self.B.reshape(len(self.y), -1)[:, 0]) ** 2
            for row in zip(self.y, a, b):
                w.writerow([f"{v:.10g}" for v in row])


def propagate(kappa, delta, inputs, length: float, y_start: float = 0.0, y_eval=None,
              rtol: float = RTOL, atol: float = ATOL, labels=()) -> CoupledAmplitudes:
    """Integrate dA/dy = -jκ B e^{jΔy}, dB/dy = -jκ A e^{-jΔy} from y_start to y_start + length.

    Parameters
    ----------
    kappa : float, array or callable
        κ in rad/mm; a callable is evaluated as kappa(y) and may return an
        array broadcast against ``delta``.
    delta : float or array
        Δ = β_a - β_b in rad/mm, one entry per independent problem.
    inputs : (A0, B0)
        Scalars or arrays broadcast against ``delta``.
    length : float
        Signed integration length (negative integrates backward).
    """
    delta = np.asarray(delta, dtype=float)
    a0, b0 = (np.asarray(v, dtype=complex) for v in inputs)
    shape = np.broadcast_shapes(delta.shape, a0.shape, b0.shape)
    d = np.broadcast_to(delta, shape).ravel()
    n = d.size
    kfun = kappa if callable(kappa) else (lambda y, k=np.asarray(kappa, dtype=float): k)

    def rhs(y, u):
        k = np.broadcast_to(kfun(y), shape).ravel()
        ph = np.exp(1j * d * y)
        a, b = u[:n], u[n:]
        return np.concatenate([-1j * k * b * ph, -1j * k * a * np.conj(ph)])

    u0 = np.concatenate([np.broadcast_to(a0, shape).ravel(), np.broadcast_to(b0, shape).ravel()])
    y1 = y_start + length
    if length == 0:
        ys = np.array([y_start])
        return CoupledAmplitudes(ys, u0[:n].reshape((1,) + shape), u0[n:].reshape((1,) + shape), labels)
    if y_eval is None:
        y_eval = np.array([y_start, y1])
    sol = solve_ivp(rhs, (y_start, y1), u0, method="RK45", t_eval=np.asarray(y_eval),
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericError(f"coupled-mode integration failed: {sol.message}")
    u = sol.y.T
    return CoupledAmplitudes(sol.t, u[:, :n].reshape((-1,) + shape), u[:, n:].reshape((-1,) + shape),
                             labels)


def propagate_shared(kappa, delta, inputs, length: float, y_eval=None, rtol: float = RTOL,
                     atol: float = ATOL):
    """Several modes of guide a coupled to one mode of guide b.

    dA_k/dy = -jκ_k B e^{jΔ_k y},  dB/dy = -j Σ_k κ_k A_k e^{-jΔ_k y}.
    The coupling matrix is Hermitian, so Σ|A_k|² + |B|² is conserved.

    Parameters
    ----------
    kappa : callable or array
        κ_k in rad/mm with shape (n, F), or a callable y -> such an array.
    delta : array
        Δ_k = β_{a,k} - β_b in rad/mm, shape (n, F).
    inputs : (A0, B0)
        A0 with shape (n, F), B0 with shape (F,).

    Returns
    -------
    y, A with shape (len(y), n, F), B with shape (len(y), F)
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    n, f = delta.shape
    a0 = np.broadcast_to(np.asarray(inputs[0], dtype=complex), (n, f))
    b0 = np.broadcast_to(np.asarray(inputs[1], dtype=complex), (f,))
    kfun = kappa if callable(kappa) else (lambda y, k=np.asarray(kappa, dtype=float): k)

    def rhs(y, u):
        k = np.broadcast_to(kfun(y), (n, f))
        ph = np.exp(1j * delta * y)
        a = u[: n * f].reshape(n, f)
        b = u[n * f:]
        da = -1j * k * b[None, :] * ph
        db = -1j * np.sum(k * a * np.conj(ph), axis=0)
        return np.concatenate([da.ravel(), db])

    u0 = np.concatenate([a0.ravel(), b0])
    if y_eval is None:
        y_eval = np.array([0.0, length])
    if length == 0:
        return np.array([0.0]), a0[None].copy(), b0[None].copy()
    sol = solve_ivp(rhs, (0.0, length), u0, method="RK45", t_eval=np.asarray(y_eval),
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericError(f"coupled-mode integration failed: {sol.message}")
    u = sol.y.T
    return sol.t, u[:, : n * f].reshape(-1, n, f), u[:, n * f:]


def detuned_transfer(kappa, delta, length):
    """Analytic power transfer κ²/(κ²+(Δ/2)²) sin²(sL), s = sqrt(κ²+(Δ/2)²)."""
    kappa = np.asarray(kappa, dtype=float)
    delta = np.asarray(delta, dtype=float)
    s2 = kappa**2 + 0.25 * delta**2
    return kappa**2 / s2 * np.sin(np.sqrt(s2) * length) ** 2


def transfer_ceiling(kappa, delta):
    return kappa**2 / (kappa**2 + 0.25 * np.asarray(delta) ** 2)


# Frequency-resolved coupler -----------------------------------------------------

class KappaTable:
    """κ(ω, gap) from exact overlaps at a few frequency nodes and gaps.

    log κ is interpolated linearly in gap and by cubic spline in ω; beyond the
    last tabulated gap the last exponential decay rate is continued.
    """

    def __init__(self, omegas, gaps, kappas):
        self.omegas = np.asarray(omegas, dtype=float)
        self.gaps = np.asarray(gaps, dtype=float)
        self.logk = np.log(np.maximum(np.asarray(kappas, dtype=float), 1e-300))
        self._spl = [CubicSpline(self.omegas, self.logk[:, j]) if len(self.omegas) > 1 else None
                     for j in range(len(self.gaps))]

    def log_kappa_nodes(self, omega):
        omega = np.asarray(omega, dtype=float)
        if len(self.omegas) == 1:
            return np.broadcast_to(self.logk[0], omega.shape + self.logk[0].shape)
        return np.stack([s(omega) for s in self._spl], axis=-1)

    def __call__(self, omega, gap):
        lk = self.log_kappa_nodes(omega)
        g = np.asarray(gap, dtype=float)
        gaps = self.gaps
        if len(gaps) == 1:
            return np.exp(lk[..., 0])
        gc = np.clip(g, gaps[0], gaps[-1])
        j = np.clip(np.searchsorted(gaps, gc) - 1, 0, len(gaps) - 2)
        t = (gc - gaps[j]) / (gaps[j + 1] - gaps[j])
        lo = np.take_along_axis(lk, np.broadcast_to(j, lk.shape[:-1])[..., None], -1)[..., 0]
        hi = np.take_along_axis(lk, np.broadcast_to(j + 1, lk.shape[:-1])[..., None], -1)[..., 0]
        val = lo + t * (hi - lo)
        slope = (lk[..., -1] - lk[..., -2]) / (gaps[-1] - gaps[-2])
        val = val + np.maximum(g - gaps[-1], 0.0) * np.minimum(slope, 0.0)
        return np.exp(val)


DEFAULT_EXTRA_GAPS = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.5, 8.0)


class Coupler:
    """Directional coupler between mode (pol, m_a) of guide a and (pol, m_b) of guide b."""

    def __init__(self, geometry: CouplerGeometry, guide_a: WaveguideModes, mode_a: int,
                 guide_b: WaveguideModes, mode_b: int, polarization: str):
        if abs(guide_a.width - geometry.width_a) > 1e-12 or abs(guide_b.width - geometry.width_b) > 1e-12:
            raise ConfigError("coupler widths do not match the mode databases")
        self.geometry = geometry
        self.guide_a, self.guide_b = guide_a, guide_b
        self.mode_a, self.mode_b = mode_a, mode_b
        self.polarization = polarization
        self._tables = {}

    def modes(self, wavelength):
        a = self.guide_a.mode(wavelength, self.polarization, self.mode_a)
        b = self.guide_b.mode(wavelength, self.polarization, self.mode_b)
        return a, b

    def kappa(self, wavelength, extra_gap: float = 0.0) -> float:
        a, b = self.modes(wavelength)
        return coupling_coefficient(a, b, self.geometry.gap + extra_gap)

    def mismatch(self, wavelength) -> float:
        a, b = self.modes(wavelength)
        return 1e3 * (a.beta - b.beta)

    def table(self, omega_min, omega_max, nodes: int = 5, extra_gaps=DEFAULT_EXTRA_GAPS):
        key = (round(omega_min, 12), round(omega_max, 12), nodes)
        if key not in self._tables:
            omegas = np.linspace(omega_min, omega_max, nodes) if nodes > 1 else np.array([omega_min])
            gaps = self.geometry.gap + np.asarray(extra_gaps, dtype=float)
            if self.geometry.sbend is None:
                gaps = gaps[:1]
            kap = np.empty((len(omegas), len(gaps)))
            dl = np.empty(len(omegas))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CouplerDesignWarning)
                for i, w in enumerate(omegas):
                    lam = 2 * math.pi * C_UM_PER_FS / w
                    a, b = self.modes(lam)
                    dl[i] = 1e3 * (a.beta - b.beta)
                    for j, g in enumerate(gaps):
                        kap[i, j] = coupling_coefficient(a, b, g)
            delta = CubicSpline(omegas, dl) if len(omegas) > 1 else (lambda w, v=dl[0]: np.full(np.shape(w), v))
            self._tables[key] = (KappaTable(omegas, gaps, kap), delta)
        return self._tables[key]

    def kappa_profile(self, table: KappaTable, omega):
        """Callable y -> κ(ω, gap(y)) over the straight section and the S-bend."""
        geo = self.geometry
        k_straight = table(omega, geo.gap)
        if geo.sbend is None:
            return lambda y: k_straight

        def k(y):
            if y <= geo.length:
                return k_straight
            return table(omega, geo.gap_at(y))

        return k

    def transfer(self, omega, nodes: int = 5, band=None, y_eval=None):
        """Field transfer over the full coupler for photons entering guide a and guide b.

        Returns (A_from_a, B_from_a, A_from_b, B_from_b) as slowly varying
        envelopes at the coupler end, one entry per frequency in ``omega``.
        """
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        lo, hi = band if band is not None else (float(omega.min()), float(omega.max()))
        if hi - lo < 1e-9:
            nodes = 1
        table, delta_fn = self.table(lo, hi, nodes)
        delta = np.asarray(delta_fn(omega), dtype=float)
        kfun = self.kappa_profile(table, omega)
        both = np.stack([delta, delta])
        inputs = (np.stack([np.ones_like(delta), np.zeros_like(delta)]),
                  np.stack([np.zeros_like(delta), np.ones_like(delta)]))

        def k2(y):
            return np.broadcast_to(kfun(y), delta.shape)[None, :]

        res = propagate(k2, both, inputs, self.geometry.total_length, y_eval=y_eval)
        return res.A[-1, 0], res.B[-1, 0], res.A[-1, 1], res.B[-1, 1]

    def trajectory(self, wavelength: float, inputs=(1.0, 0.0), points: int = 401) -> CoupledAmplitudes:
        w = 2 * math.pi * C_UM_PER_FS / wavelength
        table, delta_fn = self.table(w, w, 1)
        delta = float(delta_fn(w))
        kfun = self.kappa_profile(table, np.asarray(w))
        y = np.linspace(0.0, self.geometry.total_length, points)
        return propagate(lambda yy: float(np.asarray(kfun(yy))), delta, inputs,
                         self.geometry.total_length, y_eval=y,
                         labels=((self.mode_a, self.polarization, wavelength),
                                 (self.mode_b, self.polarization, wavelength)))


class SharedCoupler:
    """Modes of guide a that all couple to the same mode of guide b (one joint solve).

    ``couplers`` are two-mode :class:`Coupler` objects with a common
    geometry, guide b mode and polarization; they supply κ_k(ω, y) and Δ_k(ω).
    """

    def __init__(self, couplers):
        couplers = list(couplers)
        if not couplers:
            raise ConfigError("a shared coupler needs at least one mode pair")
        c0 = couplers[0]
        for c in couplers[1:]:
            if (c.geometry != c0.geometry or c.mode_b != c0.mode_b
                    or c.polarization != c0.polarization or c.guide_b is not c0.guide_b):
                raise ConfigError("shared coupler pairs must share geometry, guide b mode and polarization")
        self.couplers = couplers
        self.modes_a = tuple(c.mode_a for c in couplers)
        self.mode_b = c0.mode_b
        self.polarization = c0.polarization
        self.geometry = c0.geometry
        self._cache = {}

    def transfer(self, omega, nodes: int = 5, band=None):
        """Envelopes at the coupler end for a photon entering each guide-a mode.

        Returns (A, B): A[k, j] is the amplitude in guide-a mode j for input
        mode k, B[k] the amplitude in guide b; each has a frequency axis last.
        """
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        key = (omega.tobytes(), nodes, None if band is None else tuple(band))
        if key in self._cache:
            return self._cache[key]
        lo, hi = band if band is not None else (float(omega.min()), float(omega.max()))
        if hi - lo < 1e-9:
            nodes = 1
        n, f = len(self.couplers), len(omega)
        tabs = [c.table(lo, hi, nodes) for c in self.couplers]
        delta = np.stack([np.asarray(d(omega), dtype=float) for _, d in tabs])
        kfuns = [c.kappa_profile(t, omega) for c, (t, _) in zip(self.couplers, tabs)]

        def kap(y):
            return np.stack([np.broadcast_to(k(y), (f,)) for k in kfuns])

        A = np.empty((n, n, f), dtype=complex)
        B = np.empty((n, f), dtype=complex)
        for k in range(n):
            a0 = np.zeros((n, f), dtype=complex)
            a0[k] = 1.0
            _, a, b = propagate_shared(kap, delta, (a0, np.zeros(f)), self.geometry.total_length)
            A[k], B[k] = a[-1], b[-1]
        self._cache[key] = (A, B)
        return A, B


# Tapers ----------------------------------------------------------------------------

def taper_phase(beta0, beta1, length: float):
    """Phase ½(β0 + β1) L_t accumulated in the taper (β in rad/um, L_t in mm)."""
    return 0.5 * (np.asarray(beta0) + np.asarray(beta1)) * 1e3 * length


def taper_transform(mode_number: int, length: float, beta0, beta1):
    """Adiabatic taper to a single-mode width: (output mode or None, complex factor).

    The even mode passes with phase factor exp(-j ½(β0+β1) L_t); an odd mode
    at the narrow end radiates and is dropped.
    """
    if mode_number == 0:
        return 0, np.exp(-1j * taper_phase(beta0, beta1, length))
    warnings.warn("odd mode radiated at the narrow end of the taper", RadiatedModeWarning, stacklevel=2)
    return None, np.zeros_like(np.asarray(beta0, dtype=complex))


# Length design ----------------------------------------------------------------------

@dataclass(frozen=True)
class CouplerDesign:
    length: float  # mm
    efficiencies: tuple
    kappas: tuple
    deltas: tuple


def design_coupler_length(kappas, deltas=None, length_max: float | None = None,
                          tol: float = 1e-9) -> CouplerDesign:
    """Coupling length maximizing power transfer for one or two targets.

    One target: L* = π / 2s with s = sqrt(κ² + (Δ/2)²). Two targets: L*
    minimizes 2 - T_1(L) - T_2(L) on (0, L_max]; a scan over the analytic
    curves brackets the best minimum, which golden-section search refines.
    """
    kappas = [float(k) for k in np.atleast_1d(kappas)]
    deltas = [0.0] * len(kappas) if deltas is None else [float(d) for d in np.atleast_1d(deltas)]
    if len(kappas) not in (1, 2) or len(deltas) != len(kappas):
        raise ConfigError("design_coupler_length takes one or two (κ, Δ) targets")
    if min(kappas) <= 0:
        raise ConfigError("coupling coefficients must be positive")
    s = [math.sqrt(k * k + 0.25 * d * d) for k, d in zip(kappas, deltas)]
    ceil = [k * k / (x * x) for k, x in zip(kappas, s)]
    for c in ceil:
        if c < 0.5:
            warnings.warn(f"transfer ceiling {c:.3f} below 0.5", CouplerDesignWarning, stacklevel=2)
    if len(kappas) == 1:
        L = math.pi / (2 * s[0])
        return CouplerDesign(L, (ceil[0],), tuple(kappas), tuple(deltas))
    if length_max is None:
        length_max = 2 * math.pi / (2 * min(s))

    def cost(L):
        return 2 - float(np.sum(detuned_transfer(kappas, deltas, L)))

    n = 2000
    grid = np.linspace(length_max / n, length_max, n)
    c = 2 - detuned_transfer(np.array(kappas)[:, None], np.array(deltas)[:, None], grid[None, :]).sum(0)
    i = int(np.argmin(c))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n - 1)]
    g = (math.sqrt(5) - 1) / 2
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = cost(x1), cost(x2)
    while b - a > tol:
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = cost(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = cost(x2)
    L = 0.5 * (a + b)
    eff = tuple(float(v) for v in detuned_transfer(kappas, deltas, L))
    for e in eff:
        if e < 0.5:
            warnings.warn(f"transfer efficiency {e:.3f} below 0.5 at the best length",
                          CouplerDesignWarning, stacklevel=2)
    return CouplerDesign(L, eff, tuple(kappas), tuple(deltas))
