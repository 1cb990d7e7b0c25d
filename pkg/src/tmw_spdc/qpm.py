"""Quasi-phase matching: mismatches, poling-period design and chirped poling.

Frequencies are angular, in rad/fs; propagation constants in rad/um;
poling periods in um; device lengths in mm.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, NoPhaseMatchingError
from .material import resolve_polarization
from .modes import C_UM_PER_FS, WaveguideModes

TWO_PI = 2 * math.pi
POL_SHORT = {"TE": "o", "TM": "e"}


def omega_of(wavelength_um: float) -> float:
    return TWO_PI * C_UM_PER_FS / wavelength_um


def wavelength_of(omega: float) -> float:
    return TWO_PI * C_UM_PER_FS / omega


@dataclass(frozen=True)
class InteractionChannel:
    """One SPDC path: pump (m_p, pol_p) -> signal (m_s, pol_s) + idler (m_i, pol_i).

    The signal is the photon above the degenerate frequency at the design
    point; ``d_eff`` is a relative nonlinear weight.
    """

    signal_mode: int
    idler_mode: int
    signal_pol: str = "TM"
    idler_pol: str = "TM"
    pump_mode: int = 1
    pump_pol: str = "TM"
    d_eff: float = 1.0

    def __post_init__(self):
        for name in ("signal_mode", "idler_mode", "pump_mode"):
            if getattr(self, name) not in (0, 1):
                raise ConfigError(f"{name} must be 0 or 1")
        for name in ("signal_pol", "idler_pol", "pump_pol"):
            object.__setattr__(self, name, resolve_polarization(getattr(self, name)))

    @property
    def type_label(self) -> str:
        pols = {self.signal_pol, self.idler_pol, self.pump_pol}
        return "Type-0" if len(pols) == 1 else "Type-II"

    @property
    def key(self) -> tuple:
        """(m_s, pol_s, m_i, pol_i), the label of the spectral amplitude."""
        return (self.signal_mode, self.signal_pol, self.idler_mode, self.idler_pol)

    def partner(self) -> "InteractionChannel":
        """Same pair with signal and idler labels exchanged."""
        return InteractionChannel(self.idler_mode, self.signal_mode, self.idler_pol,
                                  self.signal_pol, self.pump_mode, self.pump_pol, self.d_eff)

    @property
    def notation(self) -> str:
        """Polarization triple (above-degenerate, below-degenerate, pump), e.g. (o,e,o)."""
        return "({},{},{})".format(*(POL_SHORT[p] for p in
                                     (self.signal_pol, self.idler_pol, self.pump_pol)))


def channel_key_str(key) -> str:
    ms, ps, mi, pi = key
    return f"{ms}{mi}{POL_SHORT[ps]}{POL_SHORT[pi]}"


@dataclass(frozen=True)
class PhaseMatchTarget:
    """Pump wavelength and preselected signal frequency; the idler is derived."""

    pump_wavelength: float  # um
    signal_omega: float  # rad/fs

    @classmethod
    def from_wavelengths(cls, pump_wavelength: float, signal_wavelength: float | None = None):
        if signal_wavelength is None:
            signal_wavelength = 2 * pump_wavelength
        return cls(pump_wavelength, omega_of(signal_wavelength))

    @property
    def pump_omega(self) -> float:
        return omega_of(self.pump_wavelength)

    @property
    def idler_omega(self) -> float:
        return self.pump_omega - self.signal_omega

    @property
    def signal_wavelength(self) -> float:
        return wavelength_of(self.signal_omega)

    @property
    def idler_wavelength(self) -> float:
        return wavelength_of(self.idler_omega)

    @property
    def detuning(self) -> float:
        """Signal offset from the degenerate frequency, rad/fs."""
        return self.signal_omega - 0.5 * self.pump_omega


@dataclass(frozen=True)
class PolingProfile:
    """Sign pattern of the nonlinearity along y in [0, L] (mm).

    ``periods`` holds Λ (um) at the positions ``positions`` (mm) for the
    user-supplied kind; uniform and linear-chirp kinds use ``period_start``
    and ``period_end``.
    """

    length: float  # mm
    period_start: float  # um
    period_end: float | None = None
    order: int = 1
    kind: str = "uniform"
    positions: np.ndarray | None = field(default=None, repr=False, compare=False)
    periods: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError("poling length must be positive")
        if not isinstance(self.order, (int, np.integer)) or self.order < 1:
            raise ConfigError("QPM order must be a positive integer")
        if self.kind not in ("uniform", "linear-chirp", "user"):
            raise ConfigError(f"unknown poling kind {self.kind!r}")
        if self.period_end is None:
            object.__setattr__(self, "period_end", self.period_start)
        if self.kind == "user":
            if self.positions is None or self.periods is None:
                raise ConfigError("user poling needs positions and periods")
            pos = np.asarray(self.positions, dtype=float)
            per = np.asarray(self.periods, dtype=float)
            if pos[0] != 0 or abs(pos[-1] - self.length) > 1e-12 or np.any(np.diff(pos) <= 0):
                raise ConfigError("user poling positions must increase from 0 to L")
            if np.any(per <= 0):
                raise ConfigError("poling periods must be positive")
        elif not (self.period_start > 0 and self.period_end > 0):
            raise ConfigError("poling periods must be positive")

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform" or (
            self.kind == "linear-chirp" and self.period_start == self.period_end
        )

    def period(self, y_mm):
        """Local period Λ(y) in um."""
        y = np.asarray(y_mm, dtype=float)
        if self.kind == "user":
            return np.interp(y, self.positions, self.periods)
        return self.period_start + (self.period_end - self.period_start) * y / self.length

    def phase(self, y_mm):
        """Grating phase k * integral of 2π/Λ from 0 to y (rad)."""
        y = np.asarray(y_mm, dtype=float)
        y_um = 1e3 * y
        k = self.order
        if self.kind == "user":
            fine = np.linspace(0.0, self.length, 20001)
            rate = TWO_PI / self.period(fine)
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(fine))])
            return k * 1e3 * np.interp(y, fine, cum)
        l0 = self.period_start
        a = (self.period_end - self.period_start) / (1e3 * self.length)
        if a == 0:
            return k * TWO_PI * y_um / l0
        return k * TWO_PI / a * np.log1p(a * y_um / l0)

    def wavevector_range(self) -> tuple[float, float]:
        """Min and max of 2πk/Λ(y), rad/um."""
        if self.kind == "user":
            per = np.asarray(self.periods)
        else:
            per = np.array([self.period_start, self.period_end])
        kk = TWO_PI * self.order / per
        return float(kk.min()), float(kk.max())


def uniform_profile(period: float, length: float, order: int = 1) -> PolingProfile:
    return PolingProfile(length=length, period_start=period, order=order, kind="uniform")


def chirp_profile(period_start: float, period_end: float, length: float, order: int = 1) -> PolingProfile:
    """Linear chirp Λ(y) = Λ_start + (Λ_end - Λ_start) y / L."""
    if not (period_start > 0 and period_end > 0):
        raise ConfigError("poling periods must be positive")
    kind = "uniform" if period_start == period_end else "linear-chirp"
    return PolingProfile(length=length, period_start=period_start, period_end=period_end,
                         order=order, kind=kind)


def efficiency_factor(k: int) -> float:
    """Relative conversion efficiency of k-th order QPM."""
    if k < 1:
        raise ConfigError("QPM order must be >= 1")
    return 1.0 / k**2


def _betas(channel: InteractionChannel, omega_s: float, omega_p: float, db: WaveguideModes):
    lam_p = wavelength_of(omega_p)
    b_p = db.beta(lam_p, channel.pump_pol, channel.pump_mode)
    b_s = db.beta(wavelength_of(omega_s), channel.signal_pol, channel.signal_mode)
    b_i = db.beta(wavelength_of(omega_p - omega_s), channel.idler_pol, channel.idler_mode)
    return b_p, b_s, b_i


def phase_mismatch(channel: InteractionChannel, target: PhaseMatchTarget, omega_s: float | None,
                   db: WaveguideModes) -> float:
    """Δβ = β_p(ω_p) - β_s(ω_s) - β_i(ω_p - ω_s), rad/um.

    ``omega_s`` defaults to the target's preselected signal frequency.
    """
    if omega_s is None:
        omega_s = target.signal_omega
    b_p, b_s, b_i = _betas(channel, omega_s, target.pump_omega, db)
    # the pair sum is formed symmetrically so exchanged channels agree to the bit
    return b_p - (b_s + b_i)


@dataclass(frozen=True)
class QpmDesign:
    period: float  # um
    order: int
    channels: tuple
    delta_beta: tuple  # rad/um, per channel at the preselected frequencies
    residuals: tuple  # rad/um, Δβ - 2πk/Λ per channel
    target: PhaseMatchTarget
    width: float

    @property
    def grating_wavevector(self) -> float:
        return TWO_PI * self.order / self.period


def design_uniform_period(channels, target: PhaseMatchTarget, k: int, db: WaveguideModes) -> QpmDesign:
    """Uniform period for one channel, or the averaged period for two.

    With two channels the shared grating wavevector equals the mean of the
    two mismatches, so the residuals are equal and opposite.
    """
    if isinstance(channels, InteractionChannel):
        channels = [channels]
    channels = list(channels)
    if len(channels) not in (1, 2):
        raise ConfigError("design_uniform_period takes one or two channels")
    if k < 1:
        raise ConfigError("QPM order must be >= 1")
    dbs = [phase_mismatch(c, target, None, db) for c in channels]
    avg = dbs[0] if len(dbs) == 1 else 0.5 * (dbs[0] + dbs[1])
    if not avg > 0:
        raise NoPhaseMatchingError(
            f"phase mismatch {avg:.6g} rad/um is not positive; no QPM period exists"
        )
    period = TWO_PI * k / avg
    kg = TWO_PI * k / period
    res = tuple(d - kg for d in dbs)
    return QpmDesign(period, k, tuple(channels), tuple(dbs), res, target, db.width)


def coherence_length_bound(design: QpmDesign) -> list[float]:
    """π/|δ| per channel in mm; infinite when the residual vanishes."""
    out = []
    for r in design.residuals:
        out.append(math.inf if r == 0 else math.pi / abs(r) / 1e3)
    return out


def phase_matched_omega(channel: InteractionChannel, period: float, k: int, pump_wavelength: float,
                        db: WaveguideModes, band: tuple[float, float], tol: float = 1e-9) -> float:
    """Signal frequency in ``band`` (rad/fs) where Δβ = 2πk/Λ, by bisection."""
    target = PhaseMatchTarget(pump_wavelength, 0.5 * omega_of(pump_wavelength))
    kg = TWO_PI * k / period

    def f(w):
        return phase_mismatch(channel, target, w, db) - kg

    a, b = band
    fa, fb = f(a), f(b)
    if fa * fb > 0:
        raise DomainError("no phase-matched frequency inside the band")
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm * fa > 0:
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def design_report_rows(design: QpmDesign):
    """Rows (w1_um, lambda_s_nm, lambda_i_nm, type, k, Lambda_um, residual_01, residual_10, Lmax_mm)."""
    t = design.target
    lmax = coherence_length_bound(design)
    res = list(design.residuals) + [design.residuals[0]] * (2 - len(design.residuals))
    lm = min(lmax)
    return [(
        design.width,
        1e3 * t.signal_wavelength,
        1e3 * t.idler_wavelength,
        design.channels[0].type_label,
        design.order,
        design.period,
        res[0],
        res[1],
        lm,
    )]


def write_design_csv(path, designs, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["w1_um", "lambda_s_nm", "lambda_i_nm", "type", "k", "Lambda_um",
                    "residual_01_rad_per_um", "residual_10_rad_per_um", "Lmax_mm"])
        for d in designs:
            for row in design_report_rows(d):
                w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(v)
    if math.isinf(v):
        return "inf"
    return f"{v:.10g}"
