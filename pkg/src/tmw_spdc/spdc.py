"""Joint spectral amplitudes of the SPDC channels and the biphoton states built on them.

Spectra live on a grid of offsets Ω from the degenerate frequency that is
symmetric to the bit (Ω[::-1] == -Ω). The signal frequency is ω_p/2 + Ω
and the idler ω_p/2 - Ω. A channel with labels (m_s, σ_s, m_i, σ_i) and
its partner (m_i, σ_i, m_s, σ_s) describe the same photon pair seen from
the two sides of degeneracy, so the partner is stored as the mirror image
of the computed channel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, DomainError, InvalidStateError, NoPhaseMatchingError, ResolutionError
from .modes import C_UM_PER_FS, WaveguideModes
from .qpm import InteractionChannel, PhaseMatchTarget, PolingProfile, omega_of, wavelength_of

TWO_PI = 2 * math.pi
D33 = 1.0
D31_OVER_D33 = 0.16
DEFAULT_POINTS = 4097
MIN_LOBE_POINTS = 16
LOBES_EACH_SIDE = 6
SPLINE_NODES = 11
MAX_BAND_FRACTION = 0.12  # largest spline band half-width, relative to ω_p/2


def nonlinear_weight(channel_type: str, d31_over_d33: float = D31_OVER_D33) -> float:
    """Relative d_eff: d33 for Type-0 (e,e,e), d31 for the Type-II processes."""
    return D33 if channel_type == "Type-0" else D33 * d31_over_d33


def transverse_overlap(pump, signal, idler, d_eff: float = 1.0) -> float:
    """d_eff times the cross-section integral of E_p E_s E_i.

    All three modes belong to the same guide, so the separable fields share
    the lateral grid; depth fields are resampled onto the pump's grid if the
    depth grids differ.
    """
    x = pump.x
    if not (len(signal.x) == len(x) and len(idler.x) == len(x)):
        xs = signal.lateral_field(x)
        xi = idler.lateral_field(x)
    else:
        xs, xi = signal.lateral, idler.lateral
    lat = np.trapezoid(pump.lateral * xs * xi, x)
    z = pump.z
    zs = np.interp(z, signal.z, signal.depth, right=0.0)
    zi = np.interp(z, idler.z, idler.depth, right=0.0)
    dep = np.trapezoid(pump.depth * zs * zi, z)
    return float(d_eff * lat * dep)


@dataclass(frozen=True)
class SourceSpec:
    """Periodically poled two-mode guide and the channels it is designed for."""

    width: float  # um
    poling: PolingProfile
    pump_wavelength: float  # um
    channels: tuple  # InteractionChannel, sharing the pump
    signal_wavelength: float | None = None  # preselected, um; default degenerate

    def __post_init__(self):
        chans = tuple(self.channels)
        if not chans:
            raise ConfigError("a source needs at least one interaction channel")
        pumps = {(c.pump_mode, c.pump_pol) for c in chans}
        if len(pumps) != 1:
            raise ConfigError("all channels of a source must share the pump mode and polarization")
        object.__setattr__(self, "channels", chans)
        if self.signal_wavelength is None:
            object.__setattr__(self, "signal_wavelength", 2 * self.pump_wavelength)

    @property
    def length(self) -> float:
        return self.poling.length

    @property
    def pump_mode(self) -> int:
        return self.channels[0].pump_mode

    @property
    def pump_pol(self) -> str:
        return self.channels[0].pump_pol

    @property
    def target(self) -> PhaseMatchTarget:
        return PhaseMatchTarget.from_wavelengths(self.pump_wavelength, self.signal_wavelength)

    def polarization_pairs(self) -> list[tuple[str, str]]:
        seen = []
        for c in self.channels:
            p = (c.signal_pol, c.idler_pol)
            if p not in seen:
                seen.append(p)
        return seen

    def state_keys(self) -> list[tuple]:
        """(m_s, σ_s, m_i, σ_i) of every term the source state carries."""
        keys = []
        for ps, pi in self.polarization_pairs():
            keys += [(0, ps, 1, pi), (1, ps, 0, pi)]
        return keys

    def channel_for(self, key) -> InteractionChannel:
        ms, ps, mi, pi = key
        d = next((c.d_eff for c in self.channels
                  if {c.signal_pol, c.idler_pol} == {ps, pi}), self.channels[0].d_eff)
        return InteractionChannel(ms, mi, ps, pi, self.pump_mode, self.pump_pol, d)


@dataclass(frozen=True)
class SpectrumGrid:
    omega_p: float  # rad/fs
    offsets: np.ndarray  # Ω, rad/fs, symmetric to the bit

    @property
    def step(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    @property
    def omega_s(self) -> np.ndarray:
        return 0.5 * self.omega_p + self.offsets

    @property
    def lambda_s_nm(self) -> np.ndarray:
        return 1e3 * TWO_PI * C_UM_PER_FS / self.omega_s

    @property
    def center(self) -> int:
        return (len(self.offsets) - 1) // 2


def symmetric_grid(omega_p: float, half_span: float, n_points: int = DEFAULT_POINTS) -> SpectrumGrid:
    """Odd-count grid Ω_k = h (k - (N-1)/2) with Ω_{N-1-k} = -Ω_k exactly."""
    if n_points < 3 or n_points % 2 == 0:
        raise ConfigError("spectrum grid needs an odd number of points >= 3")
    if not half_span > 0:
        raise ConfigError("spectrum half-span must be positive")
    m = (n_points - 1) // 2
    h = half_span / m
    k = np.arange(-m, m + 1, dtype=float)
    return SpectrumGrid(omega_p, h * k)


def mirror(values: np.ndarray) -> np.ndarray:
    """f(-Ω) on a bit-symmetric grid."""
    return values[::-1]


@dataclass(frozen=True)
class JointSpectrum:
    grid: SpectrumGrid
    channels: dict  # key (m_s, σ_s, m_i, σ_i) -> complex amplitude on the full grid
    source: SourceSpec | None = None
    mismatch: dict = field(default_factory=dict, repr=False)  # key -> δ(Ω), rad/um
    scale: float = 1.0  # factor removed by the peak normalization

    def __getitem__(self, key) -> np.ndarray:
        return self.channels[key]

    def keys(self):
        return list(self.channels)

    @property
    def lambda_s_nm(self):
        return self.grid.lambda_s_nm

    def peak_wavelength_nm(self, key) -> float:
        a = np.abs(self.channels[key]) ** 2
        i = int(np.argmax(a))
        if 0 < i < len(a) - 1:
            y0, y1, y2 = a[i - 1], a[i], a[i + 1]
            den = y0 - 2 * y1 + y2
            off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        else:
            off = 0.0
        omega = self.grid.omega_s[i] + off * self.grid.step
        return 1e3 * TWO_PI * C_UM_PER_FS / omega

    def peak_wavelengths_nm(self, key, rel_height: float = 0.5) -> list[float]:
        """Local maxima of |Φ|² above ``rel_height`` of the channel maximum, nm."""
        a = np.abs(self.channels[key]) ** 2
        top = float(np.max(a))
        out = []
        for i in range(1, len(a) - 1):
            if a[i] > a[i - 1] and a[i] >= a[i + 1] and a[i] >= rel_height * top:
                y0, y1, y2 = a[i - 1], a[i], a[i + 1]
                den = y0 - 2 * y1 + y2
                off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
                omega = self.grid.omega_s[i] + off * self.grid.step
                out.append(1e3 * TWO_PI * C_UM_PER_FS / omega)
        return sorted(out)

    def fwhm(self, key) -> float:
        """Intensity FWHM of |Φ|^2 around its peak, rad/fs."""
        return _fwhm(self.grid.offsets, np.abs(self.channels[key]) ** 2)

    def write_csv(self, path, pol_pair, header_lines=()):
        ps, pi = pol_pair
        a = self.channels[(0, ps, 1, pi)]
        b = self.channels[(1, ps, 0, pi)]
        lam = self.lambda_s_nm
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda_s_nm", "abs2_phi_01", "abs2_phi_10", "arg_phi_01_rad",
                        "arg_phi_10_rad"])
            for row in zip(lam, np.abs(a) ** 2, np.abs(b) ** 2, np.angle(a), np.angle(b)):
                w.writerow([f"{v:.10g}" for v in row])


def _fwhm(x, y):
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    j = i
    while j > 0 and y[j] > half:
        j -= 1
    k = i
    while k < len(y) - 1 and y[k] > half:
        k += 1
    if y[j] > half or y[k] > half:
        raise ResolutionError("peak is not contained in the grid; cannot measure its width")

    def cross(a, b):
        return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a])

    return float(cross(k - 1, k) - cross(j, j + 1)) if k > j else 0.0


# Phase-matching integral -----------------------------------------------------

def poling_integral(delta_beta, profile: PolingProfile, method: str = "auto", chunk: int = 256):
    """Integral over the poled length of exp(j[Δβ y - φ(y)]), in um.

    ``method`` is 'closed' (uniform poling only), 'quadrature', or 'auto'.
    The quadrature uses panels on which the phase is taken as linear and
    integrated exactly, with at least 8 panels per local oscillation period.
    """
    db = np.asarray(delta_beta, dtype=float)
    L = 1e3 * profile.length
    if method == "auto":
        method = "closed" if profile.is_uniform else "quadrature"
    if method == "closed":
        if not profile.is_uniform:
            raise ConfigError("closed-form integral needs uniform poling")
        d = db - TWO_PI * profile.order / profile.period_start
        return L * np.sinc(d * L / (2 * math.pi)) * np.exp(0.5j * d * L)
    if method != "quadrature":
        raise ConfigError(f"unknown integration method {method!r}")
    kmin, kmax = profile.wavevector_range()
    rate = np.maximum(np.abs(db - kmin), np.abs(db - kmax))
    n_panels = int(max(64, math.ceil(8 * float(np.max(rate)) * L / TWO_PI)))
    y = np.linspace(0.0, profile.length, n_panels + 1)
    phi = profile.phase(y)
    y_um = 1e3 * y
    h = L / n_panels
    out = np.empty(db.shape, dtype=complex)
    flat = db.ravel()
    res = out.ravel()
    for s in range(0, len(flat), chunk):
        d = flat[s : s + chunk, None]
        p = d * y_um[None, :] - phi[None, :]
        dp = np.diff(p, axis=1)
        mid = 0.5 * (p[:, 1:] + p[:, :-1])
        res[s : s + chunk] = h * np.sum(np.exp(1j * mid) * np.sinc(dp / (2 * math.pi)), axis=1)
    return out


# Spectrum assembly -------------------------------------------------------------------

class _Curves:
    """β(ω) splines for the (polarization, mode) pairs a source needs."""

    def __init__(self, db: WaveguideModes, omega_c: float, half_band: float, nodes: int):
        self.db = db
        self.lo = omega_c - half_band
        self.hi = omega_c + half_band
        self.nodes = nodes
        self._s = {}

    def get(self, pol, m):
        if (pol, m) not in self._s:
            self._s[(pol, m)] = self.db.beta_curve(pol, m, self.lo, self.hi, self.nodes)
        return self._s[(pol, m)]


def _channel_mismatch(curves, beta_p, key, omega_s):
    ms, ps, mi, pi = key
    bs = curves.get(ps, ms)(omega_s)
    bi = mirror(curves.get(pi, mi)(omega_s))
    return beta_p - (bs + bi)


def _canonical_keys(keys):
    out = []
    for k in keys:
        partner = (k[2], k[3], k[0], k[1])
        if k not in out and partner not in out:
            out.append(k)
    return out


def _overlap_profile(src, db, key, offsets, detuning):
    """O(Ω) anchored at ±Ω̄ and interpolated linearly between the anchors."""
    ms, ps, mi, pi = key
    chan = src.channel_for(key)
    wp = src.target.pump_omega
    pump = db.mode(src.pump_wavelength, src.pump_pol, src.pump_mode)

    def at(w_s):
        s = db.mode(wavelength_of(w_s), ps, ms)
        i = db.mode(wavelength_of(wp - w_s), pi, mi)
        return transverse_overlap(pump, s, i, chan.d_eff)

    o_plus = at(0.5 * wp + detuning)
    if detuning == 0:
        return np.full(len(offsets), o_plus)
    o_minus = at(0.5 * wp - detuning)
    d = abs(detuning)
    t = np.clip(offsets / d, -1.0, 1.0)
    if detuning < 0:
        o_plus, o_minus = o_minus, o_plus
    return 0.5 * (o_plus + o_minus) + 0.5 * t * (o_plus - o_minus)


def _probe_band(db, src, keys, wc, detuning, nodes):
    """Largest symmetric band (rad/fs) on which every needed mode is guided."""
    half = MAX_BAND_FRACTION * wc
    half = max(half, 1.3 * abs(detuning))
    pols = {(k[1], k[0]) for k in keys} | {(k[3], k[2]) for k in keys}
    for _ in range(12):
        ok = True
        for w in (wc - half, wc + half):
            lam = wavelength_of(w)
            try:
                for pol, m in pols:
                    db.mode(lam, pol, m)
            except DomainError:
                ok = False
                break
        if ok:
            return half
        half *= 0.8
    raise DomainError("interaction modes are not guided across the down-conversion band")


def joint_spectrum(src: SourceSpec, db: WaveguideModes, n_points: int = DEFAULT_POINTS,
                   half_span: float | None = None, method: str = "auto",
                   spline_nodes: int = SPLINE_NODES, check_resolution: bool = True) -> JointSpectrum:
    """Channel amplitudes Φ(Ω) for every term of the source state.

    Parameters
    ----------
    half_span : float, optional
        Grid half-width in rad/fs. By default the grid covers six main-lobe
        widths on either side of every phase-matched region, limited to the
        band on which all modes are guided.
    method : str
        Passed to :func:`poling_integral`.
    """
    if abs(db.width - src.width) > 1e-12:
        raise ConfigError("mode database width does not match the source width")
    wp = omega_of(src.pump_wavelength)
    wc = 0.5 * wp
    detuning = src.target.detuning
    keys = src.state_keys()
    canon = _canonical_keys(keys)
    band = _probe_band(db, src, canon, wc, detuning, spline_nodes)
    if half_span is not None and half_span > band:
        raise DomainError(f"requested half-span {half_span} exceeds the guided band {band:.4g} rad/fs")
    curves = _Curves(db, wc, band, spline_nodes)
    beta_p = db.beta(src.pump_wavelength, src.pump_pol, src.pump_mode)
    L = 1e3 * src.length
    kmin, kmax = src.poling.wavevector_range()
    if half_span is None:
        probe = symmetric_grid(wp, band, 8193)
        reach = 0.0
        window = 4 * math.pi * LOBES_EACH_SIDE / L
        for key in canon:
            d = _channel_mismatch(curves, beta_p, key, probe.omega_s)
            dist = np.maximum(0.0, np.maximum(kmin - d, d - kmax))
            inside = np.nonzero(dist <= window)[0]
            if len(inside) == 0:
                raise NoPhaseMatchingError(
                    f"channel {key} is not phase matched anywhere in the guided band"
                )
            reach = max(reach, float(np.max(np.abs(probe.offsets[inside]))))
        half_span = min(band, max(reach, 4 * probe.step))
    grid = symmetric_grid(wp, half_span, n_points)
    amps, mism = {}, {}
    for key in canon:
        d = _channel_mismatch(curves, beta_p, key, grid.omega_s)
        if check_resolution:
            dist = np.maximum(0.0, np.maximum(kmin - d, d - kmax))
            lobe = np.count_nonzero(dist * L / 2 < math.pi)
            if lobe < MIN_LOBE_POINTS:
                raise ResolutionError(
                    f"only {lobe} grid points inside the main lobe of channel {key}; "
                    f"need {MIN_LOBE_POINTS}"
                )
        o = _overlap_profile(src, db, key, grid.offsets, detuning)
        phi = o * poling_integral(d, src.poling, method)
        amps[key] = phi
        mism[key] = d - kmax if src.poling.is_uniform else d
        partner = (key[2], key[3], key[0], key[1])
        if partner != key:
            amps[partner] = mirror(phi)
            mism[partner] = mirror(mism[key])
    peak = max(float(np.max(np.abs(a))) for a in amps.values())
    if peak == 0:
        raise NoPhaseMatchingError("all channel amplitudes vanish")
    amps = {k: amps[k] / peak for k in keys}
    mism = {k: mism[k] for k in keys}
    return JointSpectrum(grid, amps, src, mism, peak)


# Biphoton states -----------------------------------------------------------------------

HIGH, LOW = "high", "low"
FORWARD, BACKWARD = "forward", "backward"


@dataclass(frozen=True)
class PhotonLabel:
    port: str
    mode: int
    pol: str
    role: str  # 'high' (ω_p/2 + Ω) or 'low' (ω_p/2 - Ω)
    direction: str = FORWARD

    def replace(self, **kw) -> "PhotonLabel":
        d = dict(port=self.port, mode=self.mode, pol=self.pol, role=self.role,
                 direction=self.direction)
        d.update(kw)
        return PhotonLabel(**d)


@dataclass(frozen=True)
class StateTerm:
    amplitude: np.ndarray  # on the half grid Ω >= 0
    high: PhotonLabel
    low: PhotonLabel
    channel: tuple | None = None

    @property
    def labels(self):
        return (self.high, self.low)


def half_grid_weights(offsets: np.ndarray) -> np.ndarray:
    w = np.full(len(offsets), offsets[1] - offsets[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass(frozen=True)
class BiphotonState:
    """Two-photon state over Ω >= 0: each term pairs a high- and a low-frequency photon."""

    omega_p: float
    offsets: np.ndarray  # Ω >= 0, starting at 0
    terms: tuple

    def __post_init__(self):
        labels = [t.labels for t in self.terms]
        if len(set(labels)) != len(labels):
            raise InvalidStateError("two state terms carry identical photon labels")
        for t in self.terms:
            if t.high.role != HIGH or t.low.role != LOW:
                raise InvalidStateError("term photons must carry roles 'high' and 'low'")
            if t.amplitude.shape != self.offsets.shape:
                raise InvalidStateError("term amplitude does not match the frequency grid")

    @property
    def weights(self) -> np.ndarray:
        return half_grid_weights(self.offsets)

    def term_probability(self, term: StateTerm) -> float:
        return float(np.sum(self.weights * np.abs(term.amplitude) ** 2))

    def norm(self) -> float:
        return sum(self.term_probability(t) for t in self.terms)

    def frequencies(self, role: str) -> np.ndarray:
        return 0.5 * self.omega_p + (self.offsets if role == HIGH else -self.offsets)

    def normalized(self) -> "BiphotonState":
        n = self.norm()
        if n == 0:
            raise InvalidStateError("state has zero norm")
        s = 1 / math.sqrt(n)
        return BiphotonState(self.omega_p, self.offsets,
                             tuple(StateTerm(t.amplitude * s, t.high, t.low, t.channel)
                                   for t in self.terms))


def assemble_state(spectrum: JointSpectrum, distinguishing_dof: str = "mode", labels=None,
                   keys=None) -> BiphotonState:
    """Biphoton state from the channel spectra, restricted to Ω >= 0.

    Parameters
    ----------
    distinguishing_dof : {'mode', 'frequency', 'path'}
        For 'path' every term is given its own pair of output ports.
    labels : dict, optional
        Channel key -> (high_port, low_port). Defaults: all photons at port
        'source' for 'mode' and 'frequency'; ports ('1', '3') and ('2', '4')
        for the (0, 1) and (1, 0) terms for 'path'.
    keys : list, optional
        Channel keys to include (default: the source's state keys, or both
        mode orders of every polarization pair present).
    """
    if distinguishing_dof not in ("mode", "frequency", "path"):
        raise ConfigError(f"unknown distinguishing degree of freedom {distinguishing_dof!r}")
    if keys is None:
        if spectrum.source is not None:
            keys = spectrum.source.state_keys()
        else:
            keys = [k for k in spectrum.keys()]
    keys = list(keys)
    if len(keys) not in (2, 4):
        raise InvalidStateError(f"a source state has 2 or 4 terms, got {len(keys)}")
    c = spectrum.grid.center
    offsets = spectrum.grid.offsets[c:]
    terms = []
    for key in keys:
        ms, ps, mi, pi = key
        if labels is not None and key in labels:
            hp, lp = labels[key]
        elif distinguishing_dof == "path":
            hp, lp = ("1", "3") if ms == 0 else ("2", "4")
        else:
            hp = lp = "source"
        terms.append(StateTerm(
            amplitude=np.array(spectrum[key][c:]),
            high=PhotonLabel(str(hp), ms, ps, HIGH),
            low=PhotonLabel(str(lp), mi, pi, LOW),
            channel=key,
        ))
    return BiphotonState(spectrum.grid.omega_p, offsets, tuple(terms)).normalized()


# Spectral indistinguishability -----------------------------------------------------

def delay_scan(g: np.ndarray, offsets: np.ndarray, weights: np.ndarray | None = None,
               max_delay: float | None = None):
    """max over τ of |Σ w g(Ω) exp(2jΩτ)|, with the maximizing τ (fs).

    A zero-padded FFT locates the best bin; a bounded scalar search refines it.
    """
    h = offsets[1] - offsets[0]
    w = np.full(len(g), h) if weights is None else weights
    if max_delay is None:
        max_delay = math.pi / (4 * h)
    pad = 1 << int(math.ceil(math.log2(8 * len(g))))
    # bin q of the inverse FFT is exp(2jΩτ) at τ = π q / (pad h), up to a constant phase
    spec = np.fft.ifft(w * g, pad) * pad
    taus = math.pi * np.fft.fftfreq(pad) * pad / (pad * h)
    mag = np.abs(spec)
    mag[np.abs(taus) > max_delay] = -1.0
    t0 = float(taus[int(np.argmax(mag))])
    dt = math.pi / (pad * h)

    def neg(t):
        return -abs(np.sum(w * g * np.exp(2j * offsets * t)))

    r = minimize_scalar(neg, bounds=(t0 - dt, t0 + dt), method="bounded",
                        options={"xatol": 1e-9 * dt})
    return float(-r.fun), float(r.x)


def entanglement_quality(spectrum: JointSpectrum, keys=None, max_delay: float | None = None) -> float:
    """Modal entanglement of the (0,1)/(1,0) pair, in [0, 1].

    2 |∫ Φ_01^* Φ_10 exp(2jΩτ) dΩ| / (‖Φ_01‖² + ‖Φ_10‖²) over Ω >= 0 (the
    high-frequency photon's band), maximized over the relative delay τ,
    which a circuit can compensate. This is the concurrence of the modal
    qubit pair and equals the unfiltered HOM visibility.
    """
    if keys is None:
        ps, pi = (spectrum.source.polarization_pairs()[0] if spectrum.source is not None
                  else (spectrum.keys()[0][1], spectrum.keys()[0][3]))
        keys = ((0, ps, 1, pi), (1, ps, 0, pi))
    c = spectrum.grid.center
    om = spectrum.grid.offsets[c:]
    a = spectrum[keys[0]][c:]
    b = spectrum[keys[1]][c:]
    w = half_grid_weights(om)
    na = float(np.sum(w * np.abs(a) ** 2))
    nb = float(np.sum(w * np.abs(b) ** 2))
    if na == 0 or nb == 0:
        raise DomainError("entanglement quality is undefined for a zero-norm channel")
    best, _ = delay_scan(np.conj(a) * b, om, w, max_delay)
    return min(1.0, 2 * best / (na + nb))
