"""Holographic Bragg gratings: reflection spectra and frequency splitting of photon pairs.

Grating periods are in nm, lengths in mm, coupling constants in rad/um
unless noted otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, ResolutionError
from .material import depth_shape, lateral_shape
from .modes import C_UM_PER_FS, GuidedMode, WaveguideModes
from .spdc import BACKWARD, FORWARD, BiphotonState, StateTerm

DEFAULT_INDEX_MODULATION = 5e-4
DEFAULT_KAPPA_LENGTH = 3.0  # κ_g L_g when no stop-band width is requested


def bragg_wavelength(period_nm: float, n_eff: float) -> float:
    """λ = 2 n_eff Λ_B, nm."""
    if not (period_nm > 0 and n_eff > 0):
        raise ConfigError("Bragg period and effective index must be positive")
    return 2.0 * n_eff * period_nm


def bragg_period(wavelength_nm: float, n_eff: float) -> float:
    """Period (nm) that reflects ``wavelength_nm`` for a mode of index ``n_eff``."""
    if not (wavelength_nm > 0 and n_eff > 0):
        raise ConfigError("wavelength and effective index must be positive")
    return wavelength_nm / (2.0 * n_eff)


def confinement_factor(mode: GuidedMode) -> float:
    """η = ∫∫ |E|² g f over the cross-section: modal overlap with the Ti profile."""
    geo = mode.geometry
    g = lateral_shape(mode.x, geo.strip_width, geo.diffusion_length)
    f = depth_shape(mode.z, geo.diffusion_length)
    return float(np.trapezoid(mode.lateral**2 * g, mode.x) * np.trapezoid(mode.depth**2 * f, mode.z))


def grating_coupling(delta_n: float, eta: float, wavelength_um: float) -> float:
    """κ_g = π δn_g η / λ, rad/um."""
    return math.pi * delta_n * eta / wavelength_um


@dataclass(frozen=True)
class Hologram:
    period: float  # nm
    length: float  # mm
    delta_n: float = DEFAULT_INDEX_MODULATION
    mode: int = 0  # mode the period was designed for

    def __post_init__(self):
        if not (self.period > 0 and self.length > 0 and self.delta_n > 0):
            raise ConfigError("hologram period, length and index modulation must be positive")


@dataclass(frozen=True)
class GratingSpec:
    """Multiplexed holograms, recorded one after another as consecutive segments."""

    holograms: tuple

    def __post_init__(self):
        hs = tuple(self.holograms)
        if not hs:
            raise ConfigError("a grating needs at least one hologram")
        object.__setattr__(self, "holograms", hs)

    @property
    def length(self) -> float:
        return sum(h.length for h in self.holograms)


def segment_matrix(kappa, delta, length_um):
    """expm(L [[-jδ, -jκ], [jκ, jδ]]) for real κ, vectorized over δ (rad/um)."""
    delta = np.asarray(delta, dtype=float)
    g2 = kappa * kappa - delta * delta + 0j
    g = np.sqrt(g2)
    gl = g * length_um
    small = np.abs(gl) < 1e-8
    c = np.cosh(gl)
    s = np.where(small, length_um, np.sinh(gl) / np.where(small, 1.0, g))
    m = np.empty(delta.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = c - 1j * delta * s
    m[..., 0, 1] = -1j * kappa * s
    m[..., 1, 0] = 1j * kappa * s
    m[..., 1, 1] = c + 1j * delta * s
    return m


def uniform_reflection(kappa, delta, length_um):
    """Closed-form r and t of one uniform segment (rotating frame)."""
    delta = np.asarray(delta, dtype=float)
    g = np.sqrt(kappa * kappa - delta * delta + 0j)
    gl = g * length_um
    small = np.abs(gl) < 1e-8
    gs = np.where(small, 1.0, g)
    # deep inside the stop band cosh/sinh overflow; divide through by cosh there
    big = gl.real > 20.0
    glc = np.where(big, 0.0, gl)
    s = np.where(small, length_um, np.sinh(glc) / gs)
    den = np.cosh(glc) + 1j * delta * s
    r = -1j * kappa * s / den
    t = 1.0 / den
    if np.any(big):
        glb = np.where(big, gl, 0.0)
        th = np.tanh(glb) / gs
        e = np.exp(-glb)
        den_b = 1 + 1j * delta * th
        r = np.where(big, -1j * kappa * th / den_b, r)
        t = np.where(big, 2 * e / (1 + e * e) / den_b, t)
    return r, t


@dataclass(frozen=True)
class SpectralResponse:
    omega: np.ndarray  # rad/fs
    r: dict  # (m, pol) -> complex array
    t: dict

    @property
    def wavelength_nm(self):
        return 1e3 * 2 * math.pi * C_UM_PER_FS / self.omega

    def reflectance(self, key):
        return np.abs(self.r[key]) ** 2

    def transmittance(self, key):
        return np.abs(self.t[key]) ** 2

    def write_csv(self, path, pol: str, header_lines=()):
        lam = self.wavelength_nm
        order = np.argsort(lam)
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda_nm", "R_m0", "R_m1", "T_m0", "T_m1"])
            cols = [lam]
            for fn in (self.reflectance, self.transmittance):
                for m in (0, 1):
                    key = (m, pol)
                    cols.append(fn(key) if key in self.r else np.full(len(lam), np.nan))
            for i in order:
                w.writerow([f"{c[i]:.10g}" for c in cols])


class Grating:
    """A grating in one waveguide; answers r(ω), t(ω) for each guided mode."""

    def __init__(self, spec: GratingSpec, guide: WaveguideModes):
        self.spec = spec
        self.guide = guide
        self._kappa = {}

    def kappa(self, hologram: Hologram, wavelength: float, pol: str, m: int) -> float:
        mode = self.guide.mode(wavelength, pol, m)
        return grating_coupling(hologram.delta_n, confinement_factor(mode), wavelength)

    def _kappa_at(self, h, omega_ref, pol, m):
        key = (h, round(omega_ref, 12), pol, m)
        if key not in self._kappa:
            self._kappa[key] = self.kappa(h, 2 * math.pi * C_UM_PER_FS / omega_ref, pol, m)
        return self._kappa[key]

    def coefficients(self, omega, pol: str, m: int, beta=None, kappa_omega=None):
        """r(ω), t(ω) for mode (m, pol) through every hologram in recording order.

        ``beta`` may be a callable or array for β(ω) in rad/um (default: a
        spline over the span of ``omega``); κ_g is evaluated once per
        hologram at ``kappa_omega`` (default: centre of the span).
        """
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        lo, hi = float(omega.min()), float(omega.max())
        if beta is None:
            if hi - lo < 1e-12:
                b = np.full(omega.shape, self.guide.beta(2 * math.pi * C_UM_PER_FS / lo, pol, m))
            else:
                b = self.guide.beta_curve(pol, m, lo, hi, 9)(omega)
        else:
            b = beta(omega) if callable(beta) else np.asarray(beta, dtype=float)
        w_ref = 0.5 * (lo + hi) if kappa_omega is None else kappa_omega
        total = np.broadcast_to(np.eye(2, dtype=complex), omega.shape + (2, 2)).copy()
        for h in self.spec.holograms:
            k_g = 2 * math.pi / (1e-3 * h.period)  # rad/um
            delta = b - 0.5 * k_g
            kap = self._kappa_at(h, w_ref, pol, m)
            L = 1e3 * h.length
            seg = segment_matrix(kap, delta, L)
            ph = np.exp(-0.5j * k_g * L)
            seg[..., 0, :] *= ph
            seg[..., 1, :] /= ph
            total = seg @ total
        r = -total[..., 1, 0] / total[..., 1, 1]
        t = 1.0 / total[..., 1, 1]
        return r, t

    def response(self, omega, pol: str, modes=(0, 1)) -> SpectralResponse:
        rs, ts = {}, {}
        for m in modes:
            rs[(m, pol)], ts[(m, pol)] = self.coefficients(omega, pol, m)
        return SpectralResponse(np.asarray(omega, dtype=float), rs, ts)


def stopband_fwhm(x, reflectance) -> float:
    """FWHM of the main reflection band, in the units of ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(reflectance, dtype=float)
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    j, k = i, i
    while j > 0 and y[j] > half:
        j -= 1
    while k < len(y) - 1 and y[k] > half:
        k += 1
    if y[j] > half or y[k] > half or k - j < 4:
        raise ResolutionError("stop band is not resolved by the frequency grid")

    def cross(a, b):
        return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a])

    return float(abs(cross(k - 1, k) - cross(j, j + 1)))


def delta_fwhm(kappa: float, length_um: float) -> float:
    """Stop-band FWHM in detuning δ (rad/um) of a uniform segment."""
    peak = math.tanh(kappa * length_um) ** 2

    def f(d):
        r, _ = uniform_reflection(kappa, d, length_um)
        return float(abs(r) ** 2) - 0.5 * peak

    # strong gratings have side lobes above half the peak, so bracket the
    # first crossing from the band centre outward
    hi = 2 * kappa + 4 * math.pi / length_um
    n = int(min(400001, max(257, 64 * hi * length_um / math.pi)))
    d = np.linspace(0.0, hi, n)
    r, _ = uniform_reflection(kappa, d, length_um)
    below = np.nonzero(np.abs(r) ** 2 < 0.5 * peak)[0]
    if len(below) == 0:
        raise ResolutionError("stop-band edge not found")
    j = int(below[0])
    return 2 * brentq(f, d[j - 1], d[j], xtol=1e-14 * hi)


def length_for_bandwidth(kappa: float, width_delta: float) -> float:
    """Segment length (mm) whose stop band has FWHM ``width_delta`` (rad/um).

    Changing L also changes κ_g L and with it the peak reflectance.
    """
    lo, hi = 1e-3 / kappa, 1e3 / kappa
    if not (delta_fwhm(kappa, hi) < width_delta < delta_fwhm(kappa, lo)):
        raise ConfigError("requested stop-band width is not reachable for this coupling")
    return 1e-3 * brentq(lambda L: delta_fwhm(kappa, L) - width_delta, lo, hi, rtol=1e-12)


def design_hologram(guide: WaveguideModes, wavelength_um: float, pol: str, m: int,
                    delta_n: float = DEFAULT_INDEX_MODULATION, length: float | None = None,
                    bandwidth_nm: float | None = None) -> Hologram:
    """Hologram reflecting mode (m, pol) at ``wavelength_um``.

    Without a length or bandwidth the length gives κ_g L_g = 3.
    """
    mode = guide.mode(wavelength_um, pol, m)
    period = bragg_period(1e3 * wavelength_um, mode.n_eff)
    kap = grating_coupling(delta_n, confinement_factor(mode), wavelength_um)
    if length is None:
        if bandwidth_nm is None:
            length = 1e-3 * DEFAULT_KAPPA_LENGTH / kap
        else:
            # dδ/dλ from β at λ ± half the band
            d = 0.5e-3 * bandwidth_nm
            b1 = guide.beta(wavelength_um - d, pol, m)
            b2 = guide.beta(wavelength_um + d, pol, m)
            length = length_for_bandwidth(kap, abs(b1 - b2))
    return Hologram(period, length, delta_n, m)


# Splitting photon pairs ------------------------------------------------------

def split_state(state: BiphotonState, coefficients, drop_zero: bool = True) -> BiphotonState:
    """Route each photon of every term through a grating.

    ``coefficients(omega, mode, pol)`` returns (r, t). A photon is either
    transmitted (keeps its direction) or reflected (direction flips to
    backward); each input term becomes up to four direction-tagged terms.
    Terms whose amplitude vanishes identically are dropped.
    """
    out = []
    wh = state.frequencies("high")
    wl = state.frequencies("low")
    for term in state.terms:
        rh, th = coefficients(wh, term.high.mode, term.high.pol)
        rl, tl = coefficients(wl, term.low.mode, term.low.pol)
        for fh, dh in ((th, term.high.direction), (rh, _flip(term.high.direction))):
            for fl, dl in ((tl, term.low.direction), (rl, _flip(term.low.direction))):
                amp = term.amplitude * fh * fl
                if drop_zero and not np.any(amp):
                    continue
                out.append(StateTerm(amp, term.high.replace(direction=dh),
                                     term.low.replace(direction=dl), term.channel))
    return BiphotonState(state.omega_p, state.offsets, tuple(out))


def _flip(direction: str) -> str:
    return BACKWARD if direction == FORWARD else FORWARD


def partition_by_direction(state: BiphotonState):
    """(terms with the low-frequency photon reflected, all other terms)."""
    refl = tuple(t for t in state.terms if t.low.direction == BACKWARD)
    rest = tuple(t for t in state.terms if t.low.direction != BACKWARD)
    return refl, rest


def ideal_splitter(cutoff_omega: float):
    """r = 1 below ``cutoff_omega``, t = 1 above: the lossless ideal frequency splitter."""

    def coefficients(omega, mode, pol):
        omega = np.asarray(omega, dtype=float)
        low = omega < cutoff_omega
        return low.astype(complex), (~low).astype(complex)

    return coefficients

