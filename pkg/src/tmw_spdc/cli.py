"""Command-line frontend: ``tmw-spdc <command> [--preset NAME] [--config FILE] [--out DIR]``.

Every command resolves a run configuration (defaults, preset, user JSON),
writes CSV/JSON files atomically into the output directory and prints a
JSON summary on standard output. Exit codes: 0 ok, 2 configuration error,
3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as C
from .circuits import GuideLibrary, build_circuit, coincidence_json, port_coincidences, propagate, write_port_csv
from .couplers import (Coupler, CouplerDesignWarning, CouplerGeometry, SBend, design_coupler_length,
                       transfer_ceiling)
from .errors import ConfigError, DomainError, NumericError
from .grating import Grating, GratingSpec, design_hologram
from .interference import ArmFilters, arm_transfer_matrix, bandpass_filter, default_delays, \
    dispersion_factor, hom_curve, oscillation_period
from .material import resolve_polarization
from .modes import C_UM_PER_FS, beta_table, write_beta_csv
from .qpm import (InteractionChannel, PhaseMatchTarget, chirp_profile, coherence_length_bound,
                  design_uniform_period, omega_of, uniform_profile, write_design_csv)
from .spdc import SourceSpec, assemble_state, entanglement_quality, joint_spectrum, nonlinear_weight

FIGURES = ("fig2", "fig4", "fig5", "fig7", "fig8")
COMMANDS = ("modes", "design", "spectrum", "coupler", "grating", "hom", "circuit", "figure")


# Output handling -------------------------------------------------------------------

class Run:
    """Resolved configuration plus the output directory and the file log."""

    def __init__(self, command: str, cfg: dict, out: Path, threads: int = 1):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.threads = threads
        self.sha = C.config_hash(cfg)
        self.files = []
        self.lib = GuideLibrary(C.geometry(cfg, cfg["source"]["width_m"]) if "source" in cfg
                                else C.geometry(cfg, 4e-6), C.material(cfg))

    def header(self, *extra) -> list[str]:
        lines = [f"tmw-spdc {self.command}", f"preset: {self.cfg.get('preset', 'none')}",
                 f"config_sha256: {self.sha}"]
        return lines + [str(e) for e in extra]

    def write(self, name: str, writer, subdir: str | None = None) -> Path:
        """Call ``writer(tmp_path)`` and move the result into place."""
        d = self.out / subdir if subdir else self.out
        d.mkdir(parents=True, exist_ok=True)
        path = d / name
        tmp = d / f".{name}.tmp"
        try:
            writer(tmp)
            os.replace(tmp, path)
        finally:
            if tmp.exists():
                tmp.unlink()
        self.files.append(str(path.relative_to(self.out)))
        return path

    def write_json(self, name: str, data: dict, subdir: str | None = None) -> Path:
        payload = dict(data)
        payload["config_sha256"] = self.sha

        def w(p):
            with open(p, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")

        return self.write(name, w, subdir)


def _num(x):
    """JSON-friendly rounding, so summaries do not depend on the last bit."""
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(f"{x:.10g}")
    if isinstance(x, np.integer):
        return int(x)
    return x


def _tag(lam_um: float) -> str:
    return f"{1e3 * lam_um:.1f}nm".replace(".", "p")


# Model builders ----------------------------------------------------------------------

def _guide(run: Run, width_um=None):
    w = C.um(run.cfg["source"]["width_m"]) if width_um is None else width_um
    return run.lib(w)


def _channel_sets(run: Run):
    """Channels per process: (0,1) alone when degenerate and co-polarized, else (0,1) and (1,0)."""
    src = C.section(run.cfg, "source")
    pm = C.field_of(src, "pump_mode", "source")
    pp = resolve_polarization(C.field_of(src, "pump_pol", "source"))
    ratio = run.cfg["material"]["d31_over_d33"]
    sets = []
    for p in C.field_of(src, "processes", "source"):
        ps, pi = resolve_polarization(p["signal_pol"]), resolve_polarization(p["idler_pol"])
        a = InteractionChannel(0, 1, ps, pi, pm, pp)
        d = nonlinear_weight(a.type_label, ratio)
        a = InteractionChannel(0, 1, ps, pi, pm, pp, d)
        if C.degenerate(run.cfg) and ps == pi:
            sets.append((a,))
        else:
            sets.append((a, InteractionChannel(1, 0, ps, pi, pm, pp, d)))
    return sets


def _target(run: Run) -> PhaseMatchTarget:
    src = run.cfg["source"]
    ls = src.get("signal_wavelength_m")
    return PhaseMatchTarget.from_wavelengths(C.um(src["pump_wavelength_m"]),
                                             None if ls is None else C.um(ls))


def _designs(run: Run):
    order = run.cfg["source"].get("order", 1)
    db = _guide(run)
    return [design_uniform_period(chs, _target(run), order, db) for chs in _channel_sets(run)]


def _poling(run: Run, designs=None):
    src = run.cfg["source"]
    pol = C.field_of(src, "poling", "source")
    L = C.mm(C.field_of(src, "length_m", "source"))
    order = src.get("order", 1)
    kind = pol["kind"]
    if kind == "uniform":
        return uniform_profile(C.um(C.field_of(pol, "period_m", "source.poling")), L, order)
    if kind == "linear-chirp":
        return chirp_profile(C.um(C.field_of(pol, "period_start_m", "source.poling")),
                             C.um(C.field_of(pol, "period_end_m", "source.poling")), L, order)
    designs = designs if designs is not None else _designs(run)
    if kind == "design":
        if len(designs) != 1:
            raise ConfigError("poling kind 'design' takes one process; use 'design-chirp' for two")
        return uniform_profile(designs[0].period, L, order)
    margin = C.um(pol.get("margin_m", 0.0))
    periods = [d.period for d in designs]
    return chirp_profile(min(periods) - margin, max(periods) + margin, L, order)


def _source(run: Run, designs=None) -> SourceSpec:
    src = run.cfg["source"]
    chans = tuple(c for s in _channel_sets(run) for c in s)
    ls = src.get("signal_wavelength_m")
    return SourceSpec(C.um(src["width_m"]), _poling(run, designs), C.um(src["pump_wavelength_m"]),
                      chans, None if ls is None else C.um(ls))


def _spectrum(run: Run):
    sp = run.cfg["spectrum"]
    src = _source(run)
    return joint_spectrum(src, _guide(run), sp["points"], sp.get("half_span_rad_per_fs"))


def _pol_pairs(spectrum):
    return spectrum.source.polarization_pairs()


# Commands ----------------------------------------------------------------------------

def cmd_modes(run: Run, width_range=None, wavelength=None, pol=None, subdir=None):
    m = run.cfg["modes"]
    if width_range is not None:
        a, b, step = width_range
    else:
        a, b, step = C.um(m["width_start_m"]), C.um(m["width_stop_m"]), C.um(m["width_step_m"])
    if not (step > 0 and b >= a > 0):
        raise ConfigError("width range needs 0 < start <= stop and a positive step")
    n = int(round((b - a) / step)) + 1
    widths = np.round(a + step * np.arange(n), 9)
    if wavelength is not None or pol is not None:
        curves = [(wavelength if wavelength is not None else C.um(m["curves"][0]["wavelength_m"]),
                   resolve_polarization(pol if pol is not None else m["curves"][0]["pol"]))]
    else:
        if "curves" not in m:
            raise ConfigError("configuration is missing field modes.curves")
        curves = [(C.um(c["wavelength_m"]), resolve_polarization(c["pol"])) for c in m["curves"]]
    ann = [C.um(w) for w in m.get("annotate_widths_m", [])]
    geom = C.geometry(run.cfg, 4e-6)
    mat = C.material(run.cfg)
    summary = []
    for lam, p in curves:
        w, b0, b1 = beta_table(widths, lam, p, geom, mat, run.threads)
        counts = {f"{x:g}": int(np.isfinite(b0[i])) + int(np.isfinite(b1[i]))
                  for x in ann for i in np.nonzero(np.abs(w - x) < 1e-9)[0]}
        hdr = run.header(f"wavelength_nm: {1e3 * lam:g}", f"polarization: {p}",
                         "annotated_widths_um: " + ", ".join(f"{x:g}" for x in ann))
        name = f"beta_vs_width_{_tag(lam)}_{p}.csv"
        run.write(name, lambda t, w=w, b0=b0, b1=b1, hdr=hdr: write_beta_csv(t, w, b0, b1, hdr), subdir)
        summary.append({"wavelength_nm": 1e3 * lam, "pol": p, "rows": len(w),
                        "annotated_widths_um": ann, "mode_count_at_annotated": counts})
    return {"curves": summary}


def cmd_design(run: Run, subdir=None):
    designs = _designs(run)
    src = run.cfg["source"]
    quoted = {k.replace("_m", "_um"): C.um(v) for k, v in src.get("quoted", {}).items()}
    profile = _poling(run, designs)
    hdr = run.header("poling: " + profile.kind,
                     f"poling_period_start_um: {profile.period_start:.10g}",
                     f"poling_period_end_um: {profile.period_end:.10g}",
                     *[f"quoted_{k}: {v:g}" for k, v in quoted.items()])
    run.write("qpm_design.csv", lambda t: write_design_csv(t, designs, hdr), subdir)
    out = {"designs": [], "poling": {"kind": profile.kind, "period_start_um": profile.period_start,
                                     "period_end_um": profile.period_end,
                                     "length_mm": profile.length}, "quoted": quoted}
    for d in designs:
        c = d.channels[0]
        item = {"process": c.notation,
                "type": c.type_label, "period_um": d.period, "residuals_rad_per_um": list(d.residuals),
                "coherence_bound_mm": coherence_length_bound(d)}
        if "period_um" in quoted:
            item["deviation_from_quoted"] = d.period / quoted["period_um"] - 1
        out["designs"].append(item)
    return out


def cmd_spectrum(run: Run, subdir=None, js=None):
    js = js if js is not None else _spectrum(run)
    out = {"points": len(js.grid.offsets), "half_span_rad_per_fs": float(js.grid.offsets[-1]),
           "pol_pairs": []}
    for ps, pi in _pol_pairs(js):
        hdr = run.header(f"signal_pol: {ps}", f"idler_pol: {pi}", f"peak_scale: {js.scale:.10g}")
        run.write(f"spectrum_{ps}_{pi}.csv", lambda t, pp=(ps, pi), h=hdr: js.write_csv(t, pp, h), subdir)
        k01, k10 = (0, ps, 1, pi), (1, ps, 0, pi)
        out["pol_pairs"].append({
            "signal_pol": ps, "idler_pol": pi,
            "peak_nm": {"phi_01": js.peak_wavelength_nm(k01), "phi_10": js.peak_wavelength_nm(k10)},
            "local_peaks_nm": {"phi_01": js.peak_wavelengths_nm(k01),
                               "phi_10": js.peak_wavelengths_nm(k10)},
            "entanglement_quality": entanglement_quality(js, (k01, k10)),
        })
    return out


def _coupler_specs(run: Run):
    """(panel, label, Coupler, photon) for every coupler/photon pair of the circuit."""
    cp = C.section(run.cfg, "couplers")
    kind = run.cfg.get("circuit", {}).get("kind", "I")
    w1 = C.um(run.cfg["source"]["width_m"])
    L2, L3 = C.mm(C.field_of(cp, "L2_m", "couplers")), C.mm(C.field_of(cp, "L3_m", "couplers"))
    b1, b2 = C.um(C.field_of(cp, "b1_m", "couplers")), C.um(C.field_of(cp, "b2_m", "couplers"))
    ph = C.photons(run.cfg)
    specs = []
    if kind == "II":
        for role, lam, p in ph:
            name, L, b = ("low", L2, b1) if role == "idler" else ("high", L3, b2)
            for m in (0, 1):
                g = CouplerGeometry(w1, w1, b, L)
                specs.append((name, f"{name}_{_tag(lam)}_{p}_m{m}",
                              Coupler(g, run.lib(w1), m, run.lib(w1), m, p), lam, L))
        return specs
    w2 = C.um(C.field_of(cp, "w2_m", "couplers"))
    sb = SBend(C.mm(cp["sbend_length_m"]), C.um(cp["sbend_offset_m"]))
    for role, lam, p in ph:
        odd = Coupler(CouplerGeometry(w1, w2, b1, L2, sb), run.lib(w1), 1, run.lib(w2), 0, p)
        even = Coupler(CouplerGeometry(w1, w1, b2, L3), run.lib(w1), 0, run.lib(w1), 0, p)
        specs.append(("odd", f"odd_{_tag(lam)}_{p}", odd, lam, L2))
        specs.append(("even", f"even_{_tag(lam)}_{p}", even, lam, L3))
    return specs


def cmd_coupler(run: Run, subdir=None, panels=None):
    points = run.cfg["couplers"].get("points", 401)
    specs = _coupler_specs(run)
    out = {"couplers": []}
    files = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CouplerDesignWarning)
        for panel, label, cpl, lam, Lq in specs:
            if panels is not None and panel not in panels:
                continue
            k, d = cpl.kappa(lam), cpl.mismatch(lam)
            tr = cpl.trajectory(lam, points=points)
            hdr = run.header(f"coupler: {panel}", f"wavelength_nm: {1e3 * lam:g}",
                             f"polarization: {cpl.polarization}",
                             f"modes: a=m{cpl.mode_a} (w={cpl.geometry.width_a:g} um) "
                             f"b=m{cpl.mode_b} (w={cpl.geometry.width_b:g} um)",
                             f"kappa_rad_per_mm: {k:.10g}", f"delta_rad_per_mm: {d:.10g}")
            run.write(f"coupler_{label}.csv", lambda t, tr=tr, h=hdr: tr.write_csv(t, h), subdir)
            files.setdefault(panel, []).append(f"coupler_{label}.csv")
            des = design_coupler_length(k, d)
            out["couplers"].append({
                "coupler": panel, "wavelength_nm": 1e3 * lam, "pol": cpl.polarization,
                "mode_a": cpl.mode_a, "mode_b": cpl.mode_b, "kappa_rad_per_mm": k,
                "delta_rad_per_mm": d, "ceiling": transfer_ceiling(k, d),
                "designed_length_mm": des.length, "configured_length_mm": Lq,
                "length_ratio": des.length / Lq if Lq > 0 else None,
                "transfer_at_end": float(abs(tr.B[-1]) ** 2),
            })
    out["_files"] = files
    return out


def _hologram_targets(run: Run):
    g = run.cfg["grating"]
    lam_i = [lam for role, lam, p in C.photons(run.cfg) if role == "idler"]
    if not lam_i:  # degenerate co-polarized source: the photon below 2 λ_p is the idler
        lam_i = [C.photons(run.cfg)[0][1]]
    lam = lam_i[0]
    if g["targets"]:
        return [(lam, resolve_polarization(t["pol"]), t["mode"]) for t in g["targets"]]
    pols = []
    for role, lm, p in C.photons(run.cfg):
        if role == "idler" and p not in pols:
            pols.append(p)
    return [(lam, p, m) for p in (pols or [C.photons(run.cfg)[0][2]]) for m in (0, 1)]


def _holograms(run: Run):
    g = run.cfg["grating"]
    db = _guide(run)
    return [design_hologram(db, lam, p, m, g["delta_n"]) for lam, p, m in _hologram_targets(run)]


def cmd_grating(run: Run, subdir=None):
    g = run.cfg["grating"]
    targets = _hologram_targets(run)
    holos = _holograms(run)
    gr = Grating(GratingSpec(tuple(holos)), _guide(run))
    lam = targets[0][0]
    span = 1e6 * g["span_m"]
    lam_grid = np.linspace(lam - span / 2, lam + span / 2, g["points"])
    omega = np.sort(2 * math.pi * C_UM_PER_FS / lam_grid)
    quoted = [1e9 * q for q in g.get("quoted_periods_m", [])]
    out = {"holograms": [], "quoted_periods_nm": quoted, "responses": []}
    for (lt, p, m), h in zip(targets, holos):
        out["holograms"].append({"target_nm": 1e3 * lt, "pol": p, "mode": m, "period_nm": h.period,
                                 "length_mm": h.length, "delta_n": h.delta_n})
    for p in sorted({t[1] for t in targets}):
        resp = gr.response(omega, p)
        hdr = run.header(f"polarization: {p}",
                         "holograms_period_nm: " + ", ".join(f"{h.period:.6f}" for h in holos),
                         "quoted_periods_nm: " + ", ".join(f"{q:g}" for q in quoted))
        run.write(f"grating_{p}.csv", lambda t, r=resp, pp=p, hh=hdr: r.write_csv(t, pp, hh), subdir)
        peaks = {}
        for m in (0, 1):
            R = resp.reflectance((m, p))
            i = int(np.argmax(R))
            peaks[f"m{m}"] = {"peak_R": float(R[i]), "peak_nm": float(resp.wavelength_nm[i])}
        out["responses"].append({"pol": p, "peaks": peaks})
    return out


def _filters(run: Run, filters=None):
    if filters is not None:
        return filters
    f = run.cfg["hom"]["filters"]
    if f is None:
        return None
    return tuple((1e9 * x["center_m"], 1e9 * x["fwhm_m"]) for x in f)


def _hom(run: Run, js, filters, tau):
    h = run.cfg["hom"]
    fpair = None
    if filters is not None:
        (c1, w1), (c2, w2) = filters
        fpair = (bandpass_filter(c1, w1), bandpass_filter(c2, w2))
    D = None
    if h.get("arms") is not None:
        ps, pi = _pol_pairs(js)[0]
        if ps != pi:
            raise ConfigError("hom.arms needs co-polarized photons")
        db = _guide(run)
        om = js.grid.omega_s
        lo, hi = float(om.min()), float(om.max())
        arms = h["arms"]
        Lt = C.mm(run.cfg["couplers"]["Lt_m"])
        even = C.mm(arms["even_m"])
        odd = C.mm(arms["odd_m"]) if arms.get("odd_m") is not None else even + Lt
        af = ArmFilters(C.mm(arms.get("arm_m", 0.0)), even, odd, Lt,
                        db.beta_curve(ps, 0, lo, hi, 11), db.beta_curve(ps, 1, lo, hi, 11))
        D = dispersion_factor(arm_transfer_matrix(af, om), js.grid.omega_p)
    return hom_curve(js, tau, fpair, D)


def cmd_hom(run: Run, filters=None, subdir=None, js=None, both=False):
    js = js if js is not None else _spectrum(run)
    h = run.cfg["hom"]
    tau = default_delays(js, h["points"], h.get("span_fs"))
    filters = _filters(run, filters)
    runs = [("unfiltered", None), ("filtered", filters)] if both else [("", filters)]
    out = {}
    for label, flt in runs:
        if both and label == "filtered" and flt is None:
            continue
        curve = _hom(run, js, flt, tau)
        ftxt = "none" if flt is None else ", ".join(f"{c:g}:{w:g}" for c, w in flt)
        suffix = f"_{label}" if label else ""
        hdr = run.header(f"filters_nm: {ftxt}")
        run.write(f"hom{suffix}.csv", lambda t, c=curve, hh=hdr: c.write_csv(t, hh), subdir)
        run.write_json(f"hom{suffix}.json", curve.summary(), subdir)
        item = dict(curve.summary(), filters_nm=ftxt)
        if not C.degenerate(run.cfg):
            item["oscillation_period_fs"] = oscillation_period(curve.tau, curve.R)
        out[label or "curve"] = item
    return out


def _circuit_config(run: Run, js):
    kind = run.cfg["circuit"]["kind"]
    cp = run.cfg.get("couplers", {})
    wc = 0.5 * js.grid.omega_p
    span = float(js.grid.offsets[-1])
    pols = []
    for ps, pi in _pol_pairs(js):
        for p in (ps, pi):
            if p not in pols:
                pols.append(p)
    cc = {
        "ideal": run.cfg["circuit"]["ideal"],
        "ideal_grating": run.cfg["grating"]["model"] == "ideal-splitter",
        "band": (wc - span, wc + span),
        "w1": C.um(run.cfg["source"]["width_m"]),
        "Lt": C.mm(cp.get("Lt_m", 1.5e-3)),
        "sbend": {"length": C.mm(cp.get("sbend_length_m", 1e-2)),
                  "offset": C.um(cp.get("sbend_offset_m", 1.27e-4))},
        "polarizations": tuple(pols),
        "omega_p": js.grid.omega_p,
    }
    for key, conv in (("w2_m", C.um), ("L2_m", C.mm), ("L3_m", C.mm), ("b1_m", C.um), ("b2_m", C.um)):
        if key in cp:
            cc[key[:-2]] = conv(cp[key])
    if kind in ("II", "III") and not cc["ideal"] and not cc["ideal_grating"]:
        cc["holograms"] = _holograms(run)
    return kind, cc


def cmd_circuit(run: Run, subdir=None):
    js = _spectrum(run)
    kind, cc = _circuit_config(run, js)
    graph = build_circuit(kind, cc, run.lib)
    state = assemble_state(js)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = propagate(graph, state)
    names, mat = port_coincidences(result)
    for t in graph.terminals:
        hdr = run.header(f"circuit: {kind}", f"port: {t.name}")
        run.write(f"port_{t.name}.csv", lambda p, n=t.name, h=hdr: write_port_csv(p, result, n, h), subdir)
    cj = coincidence_json(result)
    run.write_json("coincidences.json", cj, subdir)
    return {"kind": kind, "ports": names, "coincidences": np.asarray(mat).tolist(),
            "leakage": result.leakage, "total": float(np.triu(mat).sum() + result.leakage)}


# Figure bundles -------------------------------------------------------------------------

def cmd_figure(run: Run, fig: str):
    if fig not in FIGURES:
        raise ConfigError(f"unknown figure {fig!r}; available: {', '.join(FIGURES)}")
    panels = []

    def panel(letter, what, fn):
        before = len(run.files)
        summary = fn(f"{fig}")
        files = [Path(f).name for f in run.files[before:]]
        panels.append({"panel": letter, "description": what, "files": files,
                       "summary": _num({k: v for k, v in summary.items() if k != "_files"})})

    if fig in ("fig2", "fig4", "fig5"):
        js = _spectrum(run)
        panel("a", "propagation constants vs width", lambda d: cmd_modes(run, subdir=d))
        panel("b", "normalized output spectra", lambda d: cmd_spectrum(run, subdir=d, js=js))
        panel("c", "odd-mode coupler amplitudes", lambda d: cmd_coupler(run, subdir=d, panels=("odd",)))
        panel("d", "even-mode coupler amplitudes", lambda d: cmd_coupler(run, subdir=d, panels=("even",)))
        panel("e", "coincidence rate vs delay without and with filters",
              lambda d: cmd_hom(run, subdir=d, js=js, both=True))
    elif fig == "fig7":
        panel("a", "low-frequency coupler amplitudes", lambda d: cmd_coupler(run, subdir=d, panels=("low",)))
        panel("b", "high-frequency coupler amplitudes", lambda d: cmd_coupler(run, subdir=d, panels=("high",)))
    else:
        panel("a", "normalized output spectra", lambda d: cmd_spectrum(run, subdir=d))
        panel("b", "low-frequency coupler amplitudes", lambda d: cmd_coupler(run, subdir=d, panels=("low",)))
        panel("c", "high-frequency coupler amplitudes", lambda d: cmd_coupler(run, subdir=d, panels=("high",)))
    run.write_json("manifest.json", {"figure": fig, "panels": panels}, fig)
    return {"figure": fig, "panels": len(panels)}


# Argument parsing ------------------------------------------------------------------------

def _width_range(text):
    try:
        a, b, s = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("width range is start:stop:step in um, e.g. 2:6:0.1") from None
    return a, b, s


def _filters_arg(text):
    out = []
    try:
        for item in text.split(","):
            c, w = item.split(":")
            out.append((float(c), float(w)))
    except ValueError:
        raise argparse.ArgumentTypeError("filters are center_nm:fwhm_nm pairs, e.g. 812:10,812:10") from None
    if len(out) != 2 or any(w <= 0 or c <= 0 for c, w in out):
        raise argparse.ArgumentTypeError("give exactly two filters with positive center and width")
    return tuple(out)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tmw-spdc", description="Two-mode waveguide SPDC circuit simulator.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("figure_id", nargs="?", help="figure id for the 'figure' command")
    p.add_argument("--preset", help=f"named caption preset ({', '.join(C.PRESETS)})")
    p.add_argument("--config", type=Path, help="JSON configuration file (lengths in meters)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker count for width sweeps")
    p.add_argument("--width-range", type=_width_range, help="modes: start:stop:step in um")
    p.add_argument("--lambda", dest="wavelength", type=float, help="modes: wavelength in meters")
    p.add_argument("--pol", help="modes: polarization (TE, TM, o, e)")
    p.add_argument("--filters", type=_filters_arg, help="hom: center_nm:fwhm_nm,center_nm:fwhm_nm")
    return p


def _load_user(path):
    if path is None:
        return None
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration {path} is not valid JSON: {exc}") from None


def run_command(argv) -> dict:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    preset = args.preset
    if args.command == "figure":
        if not args.figure_id:
            raise ConfigError("figure needs an id: " + ", ".join(FIGURES))
        if args.figure_id not in FIGURES:
            raise ConfigError(f"unknown figure {args.figure_id!r}; available: {', '.join(FIGURES)}")
        preset = preset or args.figure_id
    elif args.figure_id:
        raise ConfigError(f"unexpected argument {args.figure_id!r}")
    cfg = C.resolve(preset, _load_user(args.config))
    if args.command != "modes" and "source" not in cfg:
        raise ConfigError("configuration is missing section 'source' (use --preset or --config)")
    if args.pol is not None:
        resolve_polarization(args.pol)
    run = Run(args.command, cfg, args.out, args.threads)
    if args.command == "modes":
        res = cmd_modes(run, args.width_range,
                        None if args.wavelength is None else 1e6 * args.wavelength, args.pol)
    elif args.command == "design":
        res = cmd_design(run)
    elif args.command == "spectrum":
        res = cmd_spectrum(run)
    elif args.command == "coupler":
        res = cmd_coupler(run)
        res.pop("_files", None)
    elif args.command == "grating":
        res = cmd_grating(run)
    elif args.command == "hom":
        res = cmd_hom(run, args.filters)
    elif args.command == "circuit":
        res = cmd_circuit(run)
    else:
        res = cmd_figure(run, args.figure_id)
    return {"command": args.command, "preset": cfg.get("preset"), "config_sha256": run.sha,
            "files": run.files, "result": _num(res)}


def main(argv=None) -> int:
    try:
        summary = run_command(sys.argv[1:] if argv is None else argv)
    except (ConfigError, DomainError) as exc:
        print(f"tmw-spdc: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"tmw-spdc: numeric error: {exc}", file=sys.stderr)
        return 3
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
