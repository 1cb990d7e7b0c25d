"""Hong-Ou-Mandel coincidence curves, arm phase filters and the dispersion factor.

Frequencies in rad/fs, delays in fs, lengths in mm, β in rad/um.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .modes import C_UM_PER_FS
from .spdc import JointSpectrum, mirror

TWO_PI = 2 * math.pi
LN2 = math.log(2.0)


def bandpass_filter(center_nm: float, fwhm_nm: float):
    """Gaussian amplitude filter in wavelength; ``fwhm_nm`` is the intensity FWHM.

    Returns a function of angular frequency (rad/fs).
    """
    if not fwhm_nm > 0:
        raise ConfigError("filter FWHM must be positive")

    def amplitude(omega):
        lam = 1e3 * TWO_PI * C_UM_PER_FS / np.asarray(omega, dtype=float)
        return np.exp(-2 * LN2 * ((lam - center_nm) / fwhm_nm) ** 2)

    amplitude.center_nm = center_nm
    amplitude.fwhm_nm = fwhm_nm
    return amplitude


@dataclass(frozen=True)
class ArmFilters:
    """Path lengths from the source to the 3-dB coupler (mm) and β(ω) of both modes.

    ``beta0``/``beta1`` are callables ω -> β (rad/um) of the even and odd
    modes of the two-mode guide for the photons' polarization.
    """

    arm: float  # l, 3-dB coupler arm
    even: float  # l_e
    odd: float  # l_o
    taper: float  # L_t
    beta0: object = field(repr=False)
    beta1: object = field(repr=False)

    def __post_init__(self):
        for name in ("arm", "even", "odd", "taper"):
            if getattr(self, name) < 0:
                raise ConfigError(f"arm length {name} must be non-negative")

    @classmethod
    def balanced(cls, even: float, taper: float, beta0, beta1, arm: float = 0.0):
        """l_o = l_e + L_t, the setting that cancels dispersion at the design point."""
        return cls(arm, even, even + taper, taper, beta0, beta1)


@dataclass(frozen=True)
class TransferMatrix2:
    omega: np.ndarray
    T: np.ndarray  # shape (len(omega), 2, 2)

    def element(self, u: int, v: int) -> np.ndarray:
        """T_uv with 1-based row and column indexes."""
        return self.T[:, u - 1, v - 1]


def arm_transfer_matrix(filters: ArmFilters, omega) -> TransferMatrix2:
    """T = diag(H, H) [[1, j], [j, 1]] diag(H H_o, H H_e)."""
    omega = np.asarray(omega, dtype=float)
    b0 = 1e3 * np.asarray(filters.beta0(omega), dtype=float)
    b1 = 1e3 * np.asarray(filters.beta1(omega), dtype=float)
    H = np.exp(-1j * b1 * filters.arm)
    Ho = np.exp(-1j * b1 * filters.odd)
    He = np.exp(-1j * b1 * filters.taper / 2 - 1j * b0 * (filters.even + filters.taper / 2))
    T = np.empty(omega.shape + (2, 2), dtype=complex)
    T[..., 0, 0] = H * H * Ho
    T[..., 0, 1] = 1j * H * H * He
    T[..., 1, 0] = 1j * H * H * Ho
    T[..., 1, 1] = H * H * He
    return TransferMatrix2(omega, T)


# With all lengths zero T is the bare splitter and T11* T22* T21 T12 = j·j = -1;
# D is reported relative to that value so a dispersion-free interferometer gives 1.
BARE_SPLITTER_D = -1.0


def dispersion_factor(T: TransferMatrix2, omega_p: float | None = None) -> np.ndarray:
    """D(ω_s) = T11*(ω_s) T22*(ω_i) T21(ω_i) T12(ω_s), relative to the bare splitter.

    ``T.omega`` must be symmetric about ω_p/2 so that ω_i = ω_p - ω_s is the
    mirrored grid point.
    """
    w = T.omega
    if omega_p is not None:
        if np.max(np.abs(mirror(w) - (omega_p - w))) > 1e-12 * omega_p:
            raise ConfigError("dispersion factor needs a grid symmetric about ω_p/2")
    t11, t12, t21, t22 = T.element(1, 1), T.element(1, 2), T.element(2, 1), T.element(2, 2)
    d = np.conj(t11) * np.conj(mirror(t22)) * mirror(t21) * t12
    return d / BARE_SPLITTER_D


def dispersion_phase(filters: ArmFilters, omega_s, omega_p: float):
    """Closed form of arg D: [β1(ω_s)-β1(ω_i)](l_o - L_t/2) - [β0(ω_s)-β0(ω_i)](l_e + L_t/2)."""
    ws = np.asarray(omega_s, dtype=float)
    wi = omega_p - ws
    d1 = 1e3 * (filters.beta1(ws) - filters.beta1(wi))
    d0 = 1e3 * (filters.beta0(ws) - filters.beta0(wi))
    return d1 * (filters.odd - filters.taper / 2) - d0 * (filters.even + filters.taper / 2)


@dataclass(frozen=True)
class CoincidenceCurve:
    tau: np.ndarray  # fs
    R: np.ndarray
    visibility: float
    dip: float  # fs
    dip_uncertainty: float  # fs, one grid step

    def write_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_fs", "R"])
            for t, r in zip(self.tau, self.R):
                w.writerow([f"{t:.10g}", f"{r:.10g}"])

    def summary(self) -> dict:
        return {"visibility": round(float(self.visibility), 12), "dip_fs": round(float(self.dip), 9)}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _weights(n, h):
    w = np.full(n, h)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _dip(tau, R):
    i = int(np.argmin(R))
    if 0 < i < len(R) - 1:
        y0, y1, y2 = R[i - 1], R[i], R[i + 1]
        den = y0 - 2 * y1 + y2
        off = 0.5 * (y0 - y2) / den if den > 0 else 0.0
        off = max(-1.0, min(1.0, off))
        h = tau[i + 1] - tau[i]
        return float(tau[i] + off * h), float(y1 - 0.25 * (y0 - y2) * off)
    return float(tau[i]), float(R[i])


def hom_curve(spectrum: JointSpectrum, tau, filters=None, dispersion=None, key=None,
              chunk: int = 256) -> CoincidenceCurve:
    """Normalized HOM coincidence rate for the (m_s, m_i) = (0, 1) channel.

    R(τ) = ∫ |Φ(Ω)|² - Φ(Ω) Φ*(-Ω) D(Ω) exp(-2jΩτ) dΩ, divided by ∫ |Φ|²,
    with Ω = ω_s - ω_p/2 (so ω_p - 2ω_s = -2Ω).

    Parameters
    ----------
    filters : pair of callables, optional
        Amplitude transmissions in front of the two detectors. A pair with
        ω_p/2 + Ω at the first detector is weighted by
        F(Ω) = |f1(ω_p/2 + Ω) f2(ω_p/2 - Ω)|² in both alternatives, and the
        first term becomes ∫ F (|Φ(Ω)|² + |Φ(-Ω)|²) / 2. Identical filters
        reduce to filtering Φ at the signal and idler frequencies.
    dispersion : array, optional
        D(ω_s) on the spectrum grid (see :func:`dispersion_factor`).
    """
    grid = spectrum.grid
    if key is None:
        ps, pi = (spectrum.source.polarization_pairs()[0] if spectrum.source is not None
                  else (spectrum.keys()[0][1], spectrum.keys()[0][3]))
        key = (0, ps, 1, pi)
    phi = np.array(spectrum[key], dtype=complex)
    om = grid.offsets
    w = _weights(len(om), grid.step)
    a2 = np.abs(phi) ** 2
    if filters is not None:
        fa, fb = filters
        w = w * np.abs(fa(grid.omega_s) * fb(grid.omega_p - grid.omega_s)) ** 2
        a2 = 0.5 * (a2 + mirror(a2))
    norm = float(np.sum(w * a2))
    if not norm > 0:
        raise NumericError("coincidence normalization vanishes (zero total rate)")
    g = phi * np.conj(mirror(phi))
    if dispersion is not None:
        g = g * np.asarray(dispersion)
    g = w * g
    tau = np.asarray(tau, dtype=float)
    inter = np.empty(len(tau), dtype=complex)
    for s in range(0, len(tau), chunk):
        t = tau[s : s + chunk]
        inter[s : s + chunk] = np.exp(-2j * np.outer(t, om)) @ g
    # unequal filters weight ±Ω differently and leave an imaginary part that
    # drops out of the rate; otherwise it flags a grid that is not symmetric
    if filters is None and np.max(np.abs(inter.imag)) > 1e-8 * norm:
        raise NumericError("interference term is not real; spectrum grid is not symmetric")
    R = 1.0 - inter.real / norm
    R = np.maximum(R, 0.0)
    dip, rmin = _dip(tau, R)
    step = float(tau[1] - tau[0]) if len(tau) > 1 else 0.0
    return CoincidenceCurve(tau, R, float(1.0 - rmin), dip, step)


def default_delays(spectrum: JointSpectrum, points: int = 2001, span: float | None = None):
    """Symmetric τ grid; the default span is 12 coherence times ±."""
    if span is None:
        a = np.abs(spectrum[spectrum.keys()[0]]) ** 2
        om = spectrum.grid.offsets
        mean = np.sum(a * om) / np.sum(a)
        rms = math.sqrt(float(np.sum(a * (om - mean) ** 2) / np.sum(a)))
        span = 12.0 / max(rms, 1e-12)
    return np.linspace(-span, span, points)


def oscillation_period(tau, R) -> float:
    """Dominant period of R(τ) - 1 from the power spectrum (fs)."""
    y = np.asarray(R) - 1.0
    tau = np.asarray(tau)
    h = tau[1] - tau[0]
    n = len(y)
    pad = 1 << int(math.ceil(math.log2(16 * n)))
    spec = np.abs(np.fft.rfft(y * np.hanning(n), pad))
    freqs = np.fft.rfftfreq(pad, h)
    spec[0] = 0.0
    i = int(np.argmax(spec))
    if 0 < i < len(spec) - 1:
        y0, y1, y2 = np.log(spec[i - 1 : i + 2] + 1e-300)
        den = y0 - 2 * y1 + y2
        off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    else:
        off = 0.0
    f = freqs[i] + off * (freqs[1] - freqs[0])
    return float(1.0 / f)
