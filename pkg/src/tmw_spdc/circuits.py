"""Circuit composition: route each photon of a biphoton state through linear stages.

Photons are routed independently (every stage after the source is linear).
A photon is identified by (port, mode, polarization, direction); frequency
enters only through the stage amplitudes. Amplitudes that end outside a
terminal port are reported as leakage.
"""

from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .couplers import Coupler, CouplerGeometry, SBend, SharedCoupler, taper_phase
from .errors import ConfigError
from .grating import Grating, GratingSpec, Hologram, ideal_splitter
from .material import DiffusionGeometry, MaterialParams
from .modes import C_UM_PER_FS, WaveguideModes
from .spdc import BACKWARD, FORWARD, BiphotonState, PhotonLabel

SOURCE_PORT = "source"


def _key(label: PhotonLabel):
    return (label.port, label.mode, label.pol, label.direction)


class Stage:
    """Linear single-photon stage. Labels a stage does not act on pass unchanged."""

    kind = "identity"

    def acts_on(self, label: PhotonLabel) -> bool:
        return False

    def route(self, label: PhotonLabel, omega: np.ndarray):
        """List of (output label, amplitude array) for a photon entering with ``label``."""
        return [(label, np.ones(len(omega), dtype=complex))]

    def describe(self) -> dict:
        return {"kind": self.kind, "name": getattr(self, "name", self.kind)}


class IdentityStage(Stage):
    def __init__(self, name="identity"):
        self.name = name


@dataclass
class CouplerStage(Stage):
    """Directional coupler from ``port_a`` to ``port_b``.

    ``couplings`` maps (pol, mode_a) -> (mode_b, coupler). The coupler is a
    :class:`Coupler`, a :class:`SharedCoupler` (several guide-a modes solved
    jointly), or None for the ideal coupler (complete transfer, CMT phase -j).
    """

    name: str
    port_a: str
    port_b: str
    couplings: dict
    direction: str = FORWARD
    band: tuple | None = None
    kind: str = field(default="coupler", init=False)

    def acts_on(self, label):
        return (label.port == self.port_a and label.direction == self.direction
                and (label.pol, label.mode) in self.couplings)

    def route(self, label, omega):
        if not self.acts_on(label):
            return Stage.route(self, label, omega)
        mode_b, coupler = self.couplings[(label.pol, label.mode)]
        cross = label.replace(port=self.port_b, mode=mode_b)
        if coupler is None:
            return [(cross, np.full(len(omega), -1j, dtype=complex))]
        if isinstance(coupler, SharedCoupler):
            A, B = coupler.transfer(omega, band=self.band)
            k = coupler.modes_a.index(label.mode)
            out = [(label.replace(mode=m), A[k, j]) for j, m in enumerate(coupler.modes_a)]
            return out + [(cross, B[k])]
        a, b, _, _ = coupler.transfer(omega, band=self.band)
        return [(label, np.asarray(a)), (cross, np.asarray(b))]

    def describe(self):
        return {"kind": self.kind, "name": self.name, "from": self.port_a, "to": self.port_b,
                "direction": self.direction,
                "couplings": sorted(f"{p}:m{m}->m{mb}{'' if c is not None else ' (ideal)'}"
                                    for (p, m), (mb, c) in self.couplings.items())}


@dataclass
class TaperStage(Stage):
    """Adiabatic taper on ``port``: the even mode continues to ``out_port``; odd modes radiate.

    ``betas`` maps pol -> (β0(ω), β1(ω)) callables of the wide guide for the
    ½(β0+β1)L_t phase; None keeps unit amplitude.
    """

    name: str
    port: str
    out_port: str
    length: float
    betas: dict | None = None
    direction: str = FORWARD
    kind: str = field(default="taper", init=False)

    def acts_on(self, label):
        return label.port == self.port and label.direction == self.direction

    def route(self, label, omega):
        if not self.acts_on(label):
            return Stage.route(self, label, omega)
        if label.mode != 0:
            return []  # radiated at the narrow end
        out = label.replace(port=self.out_port)
        if self.betas is None:
            return [(out, np.ones(len(omega), dtype=complex))]
        b0, b1 = self.betas[label.pol]
        return [(out, np.exp(-1j * taper_phase(b0(omega), b1(omega), self.length)))]

    def describe(self):
        return {"kind": self.kind, "name": self.name, "port": self.port, "to": self.out_port,
                "length_mm": self.length}


@dataclass
class GratingStage(Stage):
    """Bragg grating on ``port``: transmitted photons continue, reflected ones reverse."""

    name: str
    port: str
    coefficients: object  # (omega, mode, pol) -> (r, t)
    direction: str = FORWARD
    kind: str = field(default="grating", init=False)

    def acts_on(self, label):
        return label.port == self.port and label.direction == self.direction

    def route(self, label, omega):
        if not self.acts_on(label):
            return Stage.route(self, label, omega)
        r, t = self.coefficients(omega, label.mode, label.pol)
        back = BACKWARD if label.direction == FORWARD else FORWARD
        out = []
        if np.any(t):
            out.append((label, np.asarray(t, dtype=complex)))
        if np.any(r):
            out.append((label.replace(direction=back), np.asarray(r, dtype=complex)))
        return out


@dataclass(frozen=True)
class Terminal:
    """Output port: photons with these (port, direction) and an allowed mode end here."""

    name: str
    port: str
    direction: str = FORWARD
    modes: tuple = (0, 1)

    def matches(self, key) -> bool:
        port, mode, _pol, direction = key
        return port == self.port and direction == self.direction and mode in self.modes


@dataclass
class CircuitGraph:
    kind: str
    stages: list
    terminals: tuple
    source_port: str = SOURCE_PORT
    source: object = None  # SourceSpec used to build the state, if any
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [t.name for t in self.terminals]
        if len(set(names)) != len(names):
            raise ConfigError("terminal names must be unique")
        seen_grating = False
        for s in self.stages:
            if isinstance(s, GratingStage):
                seen_grating = True
            elif getattr(s, "direction", FORWARD) == BACKWARD and not seen_grating:
                raise ConfigError(f"backward stage {s.name!r} precedes every grating")

    def terminal_of(self, key):
        for t in self.terminals:
            if t.matches(key):
                return t.name
        return None

    def describe(self) -> dict:
        return {"kind": self.kind, "stages": [s.describe() for s in self.stages],
                "terminals": [t.name for t in self.terminals]}


def route_photon(graph: CircuitGraph, label: PhotonLabel, omega: np.ndarray):
    """Ordered mapping key -> (label, amplitude) after all stages."""
    cur = OrderedDict({_key(label): (label, np.ones(len(omega), dtype=complex))})
    for stage in graph.stages:
        nxt = OrderedDict()
        for lab, amp in cur.values():
            for out, a in stage.route(lab, omega):
                k = _key(out)
                if k in nxt:
                    nxt[k] = (nxt[k][0], nxt[k][1] + amp * a)
                else:
                    nxt[k] = (out, amp * a)
        cur = nxt
    return cur


@dataclass(frozen=True)
class PortState:
    """One coincident output pair: amplitude over Ω >= 0 and the two photon labels."""

    high_port: str
    low_port: str
    high: PhotonLabel
    low: PhotonLabel
    amplitude: np.ndarray

    def probability(self, weights) -> float:
        return float(np.sum(weights * np.abs(self.amplitude) ** 2))


@dataclass(frozen=True)
class CircuitResult:
    state_in: BiphotonState
    pairs: tuple  # PortState
    leakage: float
    leakage_detail: dict
    terminals: tuple  # names

    @property
    def weights(self):
        return self.state_in.weights

    def total_probability(self) -> float:
        return sum(p.probability(self.weights) for p in self.pairs)


def propagate(graph: CircuitGraph, state: BiphotonState) -> CircuitResult:
    """Route both photons of every term; sum amplitudes coherently per output label pair."""
    wh = state.frequencies("high")
    wl = state.frequencies("low")
    w = state.weights
    norm = state.norm()
    acc = OrderedDict()
    for term in state.terms:
        hi = route_photon(graph, term.high, wh)
        lo = route_photon(graph, term.low, wl)
        for kh, (lh, ah) in hi.items():
            for kl, (ll, al) in lo.items():
                amp = term.amplitude * ah * al
                key = (kh, kl)
                if key in acc:
                    acc[key] = (lh, ll, acc[key][2] + amp)
                else:
                    acc[key] = (lh, ll, amp)
    pairs = []
    leak = {}
    captured = 0.0
    for (kh, kl), (lh, ll, amp) in acc.items():
        th, tl = graph.terminal_of(kh), graph.terminal_of(kl)
        p = float(np.sum(w * np.abs(amp) ** 2))
        if th is not None and tl is not None:
            pairs.append(PortState(th, tl, lh, ll, amp))
            captured += p
        else:
            name = "radiated/unrouted:" + ",".join(
                f"{k[0]}/m{k[1]}/{k[3]}" for k, t in ((kh, th), (kl, tl)) if t is None)
            leak[name] = leak.get(name, 0.0) + p
    # radiated photons (tapers) removed amplitude without an output label
    radiated = max(0.0, norm - captured - sum(leak.values()))
    if radiated > 0:
        leak["radiated"] = radiated
    return CircuitResult(state, tuple(pairs), sum(leak.values()) / norm if norm else 0.0,
                         {k: v / norm for k, v in leak.items()}, tuple(t.name for t in graph.terminals))


def port_coincidences(result: CircuitResult):
    """(terminal names, symmetric matrix) of pair probabilities, normalized to the input norm.

    Off-diagonal entries count a pair once (either photon order) and are
    mirrored; the upper triangle plus the leakage sums to 1.
    """
    names = list(result.terminals)
    idx = {n: i for i, n in enumerate(names)}
    m = np.zeros((len(names), len(names)))
    norm = result.state_in.norm()
    for p in result.pairs:
        i, j = idx[p.high_port], idx[p.low_port]
        v = p.probability(result.weights) / norm
        if i == j:
            m[i, i] += v
        else:
            m[i, j] += v
            m[j, i] += v
    return names, m


def write_port_csv(path, result: CircuitResult, port: str, header_lines=()):
    """Per-port single-photon spectra: (lambda_nm, abs2_amplitude, m, sigma)."""
    om = result.state_in.offsets
    wp = result.state_in.omega_p
    rows = []
    for p in result.pairs:
        for lab, role_sign, tname in ((p.high, 1, p.high_port), (p.low, -1, p.low_port)):
            if tname != port:
                continue
            lam = 1e3 * 2 * math.pi * C_UM_PER_FS / (0.5 * wp + role_sign * om)
            a2 = np.abs(p.amplitude) ** 2
            for x, y in zip(lam, a2):
                rows.append((x, y, lab.mode, lab.pol))
    rows.sort(key=lambda r: (r[2], r[3], r[0]))
    # merge identical (λ, m, σ) entries from different partners
    merged = OrderedDict()
    for x, y, m, s in rows:
        k = (round(x, 9), m, s)
        merged[k] = merged.get(k, 0.0) + y
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["lambda_nm", "abs2_amplitude", "m", "sigma"])
        for (x, m, s), y in merged.items():
            wr.writerow([f"{x:.10g}", f"{y:.10g}", m, s])


def coincidence_json(result: CircuitResult) -> dict:
    names, m = port_coincidences(result)
    return {
        "ports": names,
        "matrix": [[round(float(v), 12) for v in row] for row in m],
        "leakage": round(float(result.leakage), 12),
        "leakage_detail": {k: round(float(v), 12) for k, v in sorted(result.leakage_detail.items())},
    }


def write_coincidence_json(path, result: CircuitResult):
    with open(path, "w") as fh:
        json.dump(coincidence_json(result), fh, indent=2, sort_keys=True)
        fh.write("\n")


# Circuit builders -------------------------------------------------------------

class GuideLibrary:
    """Shared mode databases keyed by strip width."""

    def __init__(self, geom: DiffusionGeometry | None = None, mat: MaterialParams | None = None):
        self.geom = geom or DiffusionGeometry()
        self.mat = mat or MaterialParams()
        self._db = {}

    def __call__(self, width: float) -> WaveguideModes:
        k = round(float(width), 9)
        if k not in self._db:
            self._db[k] = WaveguideModes(self.geom.with_width(width), self.mat)
        return self._db[k]


def _require(cfg: dict, *names):
    for n in names:
        if n not in cfg or cfg[n] is None:
            raise ConfigError(f"circuit configuration is missing field {n!r}")
    return [cfg[n] for n in names]


def _pols(cfg):
    pols = cfg.get("polarizations", ("TM",))
    if isinstance(pols, str):
        pols = (pols,)
    return tuple(pols)


def _sbend(cfg):
    sb = cfg.get("sbend", {})
    if sb is None:
        return None
    return SBend(sb.get("length", 10.0), sb.get("offset", 127.0))


def _mode_pair_stage(prefix, port, cfg, lib, ideal, direction, band, out_odd, out_even):
    """Odd-mode coupler, even-mode coupler and taper on one branch (Circuit I layout)."""
    w1, w2, L2, L3, b1, b2 = _require(cfg, "w1", "w2", "L2", "L3", "b1", "b2")
    lt = cfg.get("Lt", 1.5)
    pols = _pols(cfg)
    smw_port = f"{prefix}smw"
    tmw2_port = f"{prefix}tmw2"
    odd_c, even_c = {}, {}
    for p in pols:
        if ideal:
            odd_c[(p, 1)] = (0, None)
            even_c[(p, 0)] = (0, None)
        else:
            g_odd = CouplerGeometry(w1, w2, b1, L2, _sbend(cfg))
            g_even = CouplerGeometry(w1, w1, b2, L3, None)
            # both TMW modes couple to the SMW mode; one joint solve keeps the stage unitary
            shared = SharedCoupler([Coupler(g_odd, lib(w1), m, lib(w2), 0, p) for m in (0, 1)])
            odd_c[(p, 0)] = (0, shared)
            odd_c[(p, 1)] = (0, shared)
            even_c[(p, 0)] = (0, Coupler(g_even, lib(w1), 0, lib(w1), 0, p))
    betas = None
    if not ideal:
        betas = {}
        for p in pols:
            db = lib(w1)
            lo, hi = band
            betas[p] = (db.beta_curve(p, 0, lo, hi, 9), db.beta_curve(p, 1, lo, hi, 9))
    stages = [
        CouplerStage(f"{prefix}odd-mode coupler", port, smw_port, odd_c, direction, band),
        CouplerStage(f"{prefix}even-mode coupler", port, tmw2_port, even_c, direction, band),
        TaperStage(f"{prefix}taper", tmw2_port, f"{prefix}taper-out", lt, betas, direction),
    ]
    terminals = (
        Terminal(out_odd, smw_port, direction, (0,)),
        Terminal(out_even, f"{prefix}taper-out", direction, (0,)),
    )
    return stages, terminals


def build_circuit(kind: str, config: dict, library: GuideLibrary | None = None) -> CircuitGraph:
    """Assemble Circuit I, II or III from a parameter dictionary.

    Lengths: widths and gaps in um, coupler and taper lengths in mm. Set
    ``ideal`` to replace every stage by its ideal routing; otherwise
    ``band`` = (ω_min, ω_max) in rad/fs must cover the photon frequencies.
    ``ideal_grating`` keeps the physical couplers but splits frequencies
    with the ideal grating.
    """
    kind = str(kind).upper()
    cfg = dict(config)
    ideal = bool(cfg.get("ideal", False))
    lib = library or GuideLibrary()
    band = None
    if not ideal:
        (band,) = _require(cfg, "band")
        band = (float(band[0]), float(band[1]))
    if kind == "I":
        stages, terms = _mode_pair_stage("", SOURCE_PORT, cfg, lib, ideal, FORWARD, band, "1", "2")
        return CircuitGraph("I", stages, terms, notes={"outputs": "two single-mode guides"})
    if kind in ("II", "III"):
        (omega_p,) = _require(cfg, "omega_p")
        if ideal or cfg.get("ideal_grating", False):
            coeff = ideal_splitter(0.5 * omega_p)
        else:
            (w1,) = _require(cfg, "w1")
            holos = _require(cfg, "holograms")[0]
            gr = Grating(GratingSpec(tuple(Hologram(**h) if isinstance(h, dict) else h for h in holos)),
                         lib(w1))

            def coeff(omega, mode, pol, gr=gr):
                return gr.coefficients(omega, pol, mode)

        stages = [GratingStage("Bragg grating", SOURCE_PORT, coeff)]
        if kind == "II":
            w1, L2, L3, b1, b2 = _require(cfg, "w1", "L2", "L3", "b1", "b2")
            low_c, high_c = {}, {}
            for p in _pols(cfg):
                for m in (0, 1):
                    if ideal:
                        low_c[(p, m)] = (m, None)
                        high_c[(p, m)] = (m, None)
                    else:
                        low_c[(p, m)] = (m, Coupler(CouplerGeometry(w1, w1, b1, L2), lib(w1), m, lib(w1), m, p))
                        high_c[(p, m)] = (m, Coupler(CouplerGeometry(w1, w1, b2, L3), lib(w1), m, lib(w1), m, p))
            stages += [
                CouplerStage("high-frequency coupler", SOURCE_PORT, "tmw-high", high_c, FORWARD, band),
                CouplerStage("low-frequency coupler", SOURCE_PORT, "tmw-low", low_c, BACKWARD, band),
            ]
            terms = (Terminal("high", "tmw-high", FORWARD), Terminal("low", "tmw-low", BACKWARD))
            return CircuitGraph("II", stages, terms, notes={"outputs": "two two-mode guides"})
        fwd, tf = _mode_pair_stage("fwd-", SOURCE_PORT, cfg, lib, ideal, FORWARD, band, "2", "1")
        bwd, tb = _mode_pair_stage("bwd-", SOURCE_PORT, cfg, lib, ideal, BACKWARD, band, "3", "4")
        terms = tuple(sorted(tf + tb, key=lambda t: t.name))
        return CircuitGraph("III", stages + fwd + bwd, terms,
                            notes={"outputs": "four single-mode guides, ports 1-4"})
    raise ConfigError(f"unknown circuit kind {kind!r}; use I, II or III")

