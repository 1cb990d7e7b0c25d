"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Every clause of a criterion is evaluated before the verdict so the printed
line carries the measured numbers even when an earlier clause fails.
"""

import csv
import filecmp
import json
import math
import time
import warnings
from collections import defaultdict

import numpy as np
import pytest

from oracles import cmt_grating, codirectional_transfer, fd_indices, sinc_poling_integral, slab_te_indices
from tmw_spdc import cli
from tmw_spdc.circuits import build_circuit, port_coincidences, propagate as run_circuit
from tmw_spdc.couplers import Coupler, CouplerGeometry, SBend, design_coupler_length, propagate
from tmw_spdc.grating import Grating, GratingSpec, Hologram, design_hologram, stopband_fwhm, uniform_reflection
from tmw_spdc.interference import (
    ArmFilters, arm_transfer_matrix, bandpass_filter, dispersion_factor, hom_curve, oscillation_period,
)
from tmw_spdc.material import DiffusionGeometry, depth_shape, lateral_shape, peak_index_increase
from tmw_spdc.modes import C_UM_PER_FS, WaveguideModes, solve_layered, solve_profile
from tmw_spdc.qpm import PhaseMatchTarget, PolingProfile, uniform_profile
from tmw_spdc.spdc import (
    HIGH, LOW, BiphotonState, JointSpectrum, PhotonLabel, SourceSpec, StateTerm, joint_spectrum,
    mirror, poling_integral, symmetric_grid, transverse_overlap,
)

K01 = (0, "TM", 1, "TM")
K10 = (1, "TM", 0, "TM")


@pytest.fixture
def report(capsys):
    def emit(number, title, clauses):
        ok = all(c[0] for c in clauses)
        detail = "; ".join(f"{'ok' if c else 'FAIL'} {text}" for c, text in clauses)
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'} {title}: {detail}")
        return ok

    return emit


def _read_csv(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    head, body = rows[0], np.array(rows[1:], dtype=float)
    return {h: body[:, i] for i, h in enumerate(head)}


@pytest.fixture(scope="module")
def fig4_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig4")
    # the preset carries detector filters; the beat criterion is on the bare curve
    unfiltered = out / "unfiltered.json"
    unfiltered.write_text(json.dumps({"hom": {"filters": None}}))
    cli.run_command(["spectrum", "--preset", "fig4", "--out", str(out)])
    cli.run_command(["hom", "--preset", "fig4", "--config", str(unfiltered), "--out", str(out)])
    return out


def _dip_fwhm(tau, R):
    depth = 1.0 - np.asarray(R)
    i = int(np.argmax(depth))
    half = 0.5 * depth[i]
    j, k = i, i
    while j > 0 and depth[j] > half:
        j -= 1
    while k < len(depth) - 1 and depth[k] > half:
        k += 1
    cross = lambda a, b: tau[a] + (half - depth[a]) * (tau[b] - tau[a]) / (depth[b] - depth[a])
    return cross(k, k - 1) - cross(j, j + 1)


# 1 -----------------------------------------------------------------------------------

def test_qpm_design_periods(tmp_path, report):
    targets = {"fig2": (2.644, 0.05), "fig4": (2.588, 0.05), "fig5": (1.869, 0.07)}
    clauses = []
    for name, (quoted, tol) in targets.items():
        t = time.perf_counter()
        res = cli.run_command(["design", "--preset", name, "--out", str(tmp_path / name)])
        dt = time.perf_counter() - t
        for d in res["result"]["designs"]:
            dev = d["period_um"] / quoted - 1
            clauses.append((abs(dev) <= tol,
                            f"{name} {d['process']} period {d['period_um']:.4f} um ({100 * dev:+.2f}%)"))
        clauses.append((dt < 10.0, f"{name} runtime {dt:.1f} s"))
    assert report(1, "QPM design", clauses)


# 2 -----------------------------------------------------------------------------------

def test_mode_counting(report):
    t = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        n4 = len(WaveguideModes(DiffusionGeometry(strip_width=4.0)).modes(0.812, "TM"))
        n22 = len(WaveguideModes(DiffusionGeometry(strip_width=2.2)).modes(0.812, "TM"))
    dt = time.perf_counter() - t
    assert report(2, "mode counting at 812 nm TM", [
        (n4 == 2, f"w=4.0 um: {n4} modes"), (n22 == 1, f"w=2.2 um: {n22} modes"),
        (dt < 5.0, f"runtime {dt:.1f} s")])


# 3 -----------------------------------------------------------------------------------

SLABS = [
    (2.0, 1.50, 1.45, 1.0),
    (5.0, 2.20, 2.19, 0.8),
    (1.0, 3.50, 1.00, 1.55),
    (10.0, 2.21, 2.20, 0.633),
    (0.5, 1.60, 1.00, 0.6),
]


def test_mode_solver_oracles(mat, report):
    clauses = []
    for d, n1, n2, lam in SLABS:
        exact = slab_te_indices(d, n1, n2, lam)
        got = [m.n_eff for m in solve_layered([d], [n1], lam, n2, n2)]
        err = np.max(np.abs(np.subtract(got, exact))) if len(got) == len(exact) else math.inf
        clauses.append((err < 1e-6, f"slab d={d} {len(got)} modes err {err:.1e}"))
    for width, lam, pol in ((4.0, 0.812, "TM"), (2.2, 0.812, "TM"), (6.0, 0.78, "TE")):
        g = DiffusionGeometry(strip_width=width)
        nb, dn, D = mat.bulk_index(lam, pol), peak_index_increase(g, pol, lam), g.diffusion_length
        half = width / 2 + 8 * D
        n_lat = lambda x: nb + dn * lateral_shape(x, width, D)
        x = np.linspace(-half, half, 4001)
        lat = [m.n_eff for m in solve_profile(x, n_lat(x), lam, nb, nb) if m.confinement > 0.99]
        e_lat = np.max(np.abs(lat - fd_indices(n_lat, -half, half, lam, len(lat), 0.01)))
        n_dep = lambda z: np.where(z < 0, 1.0, nb + dn * depth_shape(np.abs(z), D))
        z = np.linspace(0, 6 * D, 4001)
        dep = [m.n_eff for m in solve_profile(z, n_dep(z), lam, 1.0, nb)]
        e_dep = np.max(np.abs(dep - fd_indices(n_dep, -1.0, 12 * D, lam, len(dep), 0.002)))
        clauses.append((max(e_lat, e_dep) < 1e-5,
                        f"diffused w={width} {lam * 1e3:g} {pol}: lateral {e_lat:.1e}, depth {e_dep:.1e}"))
    assert report(3, "mode-solver oracles", clauses)


# 4 -----------------------------------------------------------------------------------

def test_spectrum_properties(guides, nondegenerate_source, fig4_outputs, report):
    src, js = nondegenerate_source
    sym = float(np.max(np.abs(js[K01] - mirror(js[K10]))))
    # chirp-path quadrature with a constant period against the closed-form sinc
    period, L = src.poling.period_start, src.poling.length
    db = 2 * math.pi / period + np.linspace(-20, 20, 401) / (1e3 * L)
    chirp = PolingProfile(L, period, kind="user", positions=np.array([0.0, L]),
                          periods=np.array([period, period]))
    ref = sinc_poling_integral(db, period, L)
    quad = float(np.max(np.abs(poling_integral(db, chirp, "quadrature") - ref)) / np.max(np.abs(ref)))
    widths = []
    for length in (2.0, 4.0):
        s = SourceSpec(src.width, uniform_profile(period, length), src.pump_wavelength, src.channels,
                       src.signal_wavelength)
        widths.append(joint_spectrum(s, guides(4.2), half_span=0.2, check_resolution=False).fwhm(K01))
    ratio = widths[0] / widths[1]
    # photon spectrum of the fig4 preset from its data file
    spec = _read_csv(fig4_outputs / "spectrum_TM_TM.csv")
    lam, marg = spec["lambda_s_nm"], spec["abs2_phi_01"] + spec["abs2_phi_10"]
    lam_d = 2e3 * src.pump_wavelength
    hi = lam < lam_d
    peaks = (float(lam[hi][np.argmax(marg[hi])]), float(lam[~hi][np.argmax(marg[~hi])]))
    per = [float(lam[np.argmax(spec[c])]) for c in ("abs2_phi_01", "abs2_phi_10")]
    assert report(4, "spectrum properties", [
        (sym <= 1e-12, f"mirror symmetry {sym:.1e}"),
        (quad < 1e-6, f"quadrature vs sinc {quad:.1e}"),
        (abs(ratio - 2) <= 0.04, f"FWHM ratio on doubling L {ratio:.4f}"),
        (abs(peaks[0] - 780.0) <= 1.0 and abs(peaks[1] - 846.7) <= 1.0,
         f"fig4 photon peaks {peaks[0]:.2f}/{peaks[1]:.2f} nm "
         f"(strongest bin per channel: {per[0]:.2f}, {per[1]:.2f} nm)"),
    ])


# 5 -----------------------------------------------------------------------------------

def test_parity_selection(guides, report):
    db = guides(4.0)
    vals = {}
    for mp in (0, 1):
        for ms in (0, 1):
            for mi in (0, 1):
                vals[(mp, ms, mi)] = abs(transverse_overlap(
                    db.mode(0.406, "TM", mp), db.mode(0.812, "TM", ms), db.mode(0.812, "TM", mi)))
    top = max(vals.values())
    clauses = []
    for k, v in vals.items():
        if sum(k) % 2:
            clauses.append((v < 1e-8 * top, f"{k} forbidden {v / top:.1e}"))
        else:
            clauses.append((v > 1e-3 * top, f"{k} allowed {v / top:.3f}"))
    assert report(5, "parity selection", clauses)


# 6 -----------------------------------------------------------------------------------

def test_coupled_mode_oracle(guides, report):
    rng = np.random.default_rng(7)
    e_sin = e_cap = e_pow = 0.0
    for _ in range(200):
        k, d, L = rng.uniform(0.05, 5.0), rng.uniform(-10, 10), rng.uniform(0.01, 3.0)
        r = propagate(k, 0.0, (1.0, 0.0), L)
        e_sin = max(e_sin, abs(abs(r.B[-1]) ** 2 - math.sin(k * L) ** 2))
        s = math.sqrt(k * k + d * d / 4)
        r = propagate(k, d, (1.0, 0.0), math.pi / (2 * s), y_eval=np.linspace(0, math.pi / (2 * s), 51))
        e_cap = max(e_cap, abs(abs(r.B[-1]) ** 2 - k * k / (k * k + d * d / 4)),
                    abs(abs(r.B[-1]) ** 2 - codirectional_transfer(k, d, math.pi / (2 * s))))
        e_pow = max(e_pow, float(np.max(np.abs(r.power - 1.0))))
    # pump at 406 nm through both fig2 couplers, every pump mode pair
    a, b = guides(4.0), guides(2.2)
    geos = ((CouplerGeometry(4.0, 2.2, 5.0, 0.85, SBend()), b), (CouplerGeometry(4.0, 4.0, 5.0, 21.0), a))
    pump = 0.0
    for geo, gb in geos:
        for ma in range(len(a.modes(0.406, "TM"))):
            for mb in range(len(gb.modes(0.406, "TM"))):
                tr = Coupler(geo, a, ma, gb, mb, "TM").trajectory(0.406)
                pump = max(pump, float(np.max(np.abs(tr.B) ** 2)))
                e_pow = max(e_pow, float(np.max(np.abs(tr.power - 1.0))))
        tr = Coupler(geo, a, 1 if gb is b else 0, gb, 0, "TM").trajectory(0.812)
        e_pow = max(e_pow, float(np.max(np.abs(tr.power - 1.0))))
    assert report(6, "coupled-mode oracle", [
        (e_sin < 1e-6, f"sin^2 {e_sin:.1e}"), (e_cap < 1e-6, f"detuned cap {e_cap:.1e}"),
        (e_pow < 1e-8, f"power {e_pow:.1e}"), (pump < 0.01, f"fig2 pump transfer {pump:.1e}")])


# 7 -----------------------------------------------------------------------------------

def test_hom(degenerate_source, nondegenerate_source, fig4_outputs, report):
    src2, js2 = degenerate_source
    # symmetric degenerate spectrum: the fig2 amplitude symmetrized about ω_p/2
    a = 0.5 * (js2[K01] + mirror(js2[K01]))
    sym = JointSpectrum(js2.grid, {K01: a, K10: mirror(a)})
    tau = np.linspace(-400, 400, 1601)
    c = hom_curve(sym, tau)
    # fig2: unfiltered against two 10 nm filters at 812 nm
    tau = np.linspace(-1500, 1500, 3001)
    f = bandpass_filter(812.0, 10.0)
    w0 = _dip_fwhm(tau, hom_curve(js2, tau).R)
    w1 = _dip_fwhm(tau, hom_curve(js2, tau, filters=(f, f)).R)
    # fig4 unfiltered curve from the preset data file
    src4, _ = nondegenerate_source
    h = _read_csv(fig4_outputs / "hom.csv")
    period = oscillation_period(h["tau_fs"], h["R"])
    t4 = PhaseMatchTarget.from_wavelengths(src4.pump_wavelength, src4.signal_wavelength)
    expect = 2 * math.pi / abs(t4.signal_omega - t4.idler_omega)
    assert report(7, "HOM interference", [
        (abs(c.visibility - 1) <= 1e-3 and abs(c.dip) <= c.dip_uncertainty,
         f"symmetric spectrum V {c.visibility:.6f}, dip {c.dip:+.2f} fs (step {c.dip_uncertainty:g})"),
        (w1 / w0 > 1.5, f"fig2 10 nm filters dip FWHM {w0:.1f} -> {w1:.1f} fs, ratio {w1 / w0:.3f}"),
        (abs(period / expect - 1) <= 0.05, f"fig4 beat period {period:.3f} fs vs {expect:.3f} fs"),
    ])


# 8 -----------------------------------------------------------------------------------

def test_dispersion_management(guides, degenerate_source, report):
    _, js = degenerate_source
    g = js.grid
    db = guides(4.0)
    lo, hi = g.omega_s.min(), g.omega_s.max()
    b0, b1 = db.beta_curve("TM", 0, lo, hi, 11), db.beta_curve("TM", 1, lo, hi, 11)
    f = ArmFilters.balanced(5.0, 1.5, b0, b1, arm=3.0)
    D = dispersion_factor(arm_transfer_matrix(f, g.omega_s), g.omega_p)
    at_center = abs(D[g.center] - 1)
    odd = float(np.max(np.abs(D * mirror(D) - 1)))
    tau = np.linspace(-1500, 1500, 3001)
    R0, R1 = hom_curve(js, tau), hom_curve(js, tau, dispersion=D)
    diff = float(np.max(np.abs(R0.R - R1.R)))
    # what is left once the linear part of the odd phase (a pure delay) is removed
    slope = float(np.angle(D[g.center + 1] / D[g.center - 1])) / (2 * g.step)
    R2 = hom_curve(js, tau, dispersion=D * np.exp(-1j * slope * g.offsets))
    rest = float(np.max(np.abs(R0.R - R2.R)))
    assert report(8, "dispersion management (l_o = l_e + L_t)", [
        (at_center <= 1e-12, f"|D(w_s) - 1| {at_center:.1e}"),
        (odd <= 1e-9, f"odd phase max|D(W)D(-W) - 1| {odd:.1e}"),
        (diff <= 1e-9, f"R vs dispersionless max diff {diff:.3f} (dip moves {R1.dip - R0.dip:+.1f} fs; "
                         f"{rest:.1e} after removing the linear phase)"),
    ])


# 9 -----------------------------------------------------------------------------------

def test_grating(guides, report):
    rng = np.random.default_rng(3)
    lossless = 0.0
    for _ in range(200):
        k, d, L = 10 ** rng.uniform(-5, -2), rng.uniform(-0.05, 0.05), 10 ** rng.uniform(0, 6)
        r, t = uniform_reflection(k, d, L)
        lossless = max(lossless, abs(abs(r) ** 2 + abs(t) ** 2 - 1))
    db = guides(4.2)
    h0 = design_hologram(db, 0.8467, "TM", 0)
    lam = np.linspace(844.7, 848.7, 40001)
    om = 2 * math.pi * C_UM_PER_FS / (1e-3 * lam)
    beta = db.beta_curve("TM", 0, om.min(), om.max(), 9)
    peak_err, widths = 0.0, []
    for scale in (0.5, 1.0, 2.0, 4.0, 8.0):
        h = Hologram(h0.period, scale * h0.length, h0.delta_n, 0)
        gr = Grating(GratingSpec((h,)), db)
        r, t = gr.coefficients(om, "TM", 0, beta=beta, kappa_omega=om.mean())
        R = np.abs(r) ** 2
        lossless = max(lossless, float(np.max(np.abs(R + np.abs(t) ** 2 - 1))))
        # resample the brightest bin finely so the peak is not a sampling estimate
        i = int(np.argmax(R))
        fine = np.linspace(om[i + 1], om[i - 1], 2001)
        rf, _ = gr.coefficients(fine, "TM", 0, beta=beta, kappa_omega=om.mean())
        kap, L = gr.kappa(h, 2 * math.pi * C_UM_PER_FS / om.mean(), "TM", 0), 1e3 * h.length
        r_ode, _ = cmt_grating(kap, 0.0, L)
        peak_err = max(peak_err, abs(math.tanh(kap * L) ** 2 - abs(r_ode) ** 2),
                       abs(np.max(np.abs(rf) ** 2) - math.tanh(kap * L) ** 2))
        widths.append(stopband_fwhm(lam, R))
    mono = all(a > b for a, b in zip(widths, widths[1:]))
    assert report(9, "Bragg grating", [
        (lossless < 1e-8, f"|r|^2+|t|^2-1 {lossless:.1e}"),
        (peak_err < 1e-6, f"peak tanh^2 vs ODE and spectrum {peak_err:.1e}"),
        (mono, "stop-band FWHM nm " + ", ".join(f"{w:.4f}" for w in widths)),
    ])


# 10 ----------------------------------------------------------------------------------

def test_circuit_iii(report):
    wp = 2 * 2.32
    om = np.linspace(0, 0.3, 1025)
    amp = np.exp(-((om - 0.1) / 0.01) ** 2).astype(complex)
    terms = (StateTerm(amp, PhotonLabel("source", 0, "TE", HIGH), PhotonLabel("source", 1, "TM", LOW)),
             StateTerm(amp, PhotonLabel("source", 1, "TE", HIGH), PhotonLabel("source", 0, "TM", LOW)))
    state = BiphotonState(wp, om, terms).normalized()
    g = build_circuit("III", dict(ideal=True, w1=4, w2=2.2, L2=1, L3=1, b1=4, b2=4, omega_p=wp,
                                  polarizations=("TE", "TM")))
    res = run_circuit(g, state)
    names, m = port_coincidences(res)
    idx = {n: i for i, n in enumerate(names)}
    p13, p24 = m[idx["1"], idx["3"]], m[idx["2"], idx["4"]]
    other = float(np.triu(m).sum() - p13 - p24)
    total = float(np.triu(m).sum() + res.leakage)
    assert report(10, "Circuit III path entanglement", [
        (abs(p13 - 0.5) <= 1e-6 and abs(p24 - 0.5) <= 1e-6, f"P(1,3) {p13:.9f}, P(2,4) {p24:.9f}"),
        (other <= 1e-12, f"other port pairs {other:.1e}"),
        (abs(total - 1) <= 1e-6, f"total + leakage {total:.9f}"),
    ])


# 11 ----------------------------------------------------------------------------------

def test_determinism(tmp_path, report):
    runs = [["design", "--preset", p] for p in ("fig2", "fig4", "fig5", "fig7", "fig8", "fig9")]
    runs += [["spectrum", "--preset", "fig4"], ["hom", "--preset", "fig4"], ["coupler", "--preset", "fig2"]]
    same, files = True, 0
    for i, args in enumerate(runs):
        a, b = tmp_path / f"a{i}", tmp_path / f"b{i}"
        fa = cli.run_command(args + ["--out", str(a)])["files"]
        fb = cli.run_command(args + ["--out", str(b)])["files"]
        same &= fa == fb
        for name in fa:
            files += 1
            same &= filecmp.cmp(a / name, b / name, shallow=False)
    modes = ["modes", "--preset", "fig2", "--width-range", "3.8:4.2:0.1", "--lambda", "8.12e-7", "--pol", "TM"]
    t1 = cli.run_command(modes + ["--threads", "1", "--out", str(tmp_path / "t1")])["files"]
    t4 = cli.run_command(modes + ["--threads", "4", "--out", str(tmp_path / "t4")])["files"]
    threads = t1 == t4 and all(filecmp.cmp(tmp_path / "t1" / n, tmp_path / "t4" / n, shallow=False)
                               for n in t1)
    assert report(11, "determinism", [
        (same, f"{files} CSV/JSON files byte-identical over repeated runs"),
        (threads, "--threads 1 and 4 give identical mode tables"),
    ])


# coupler lengths ----------------------------------------------------------------------

def test_coupler_lengths_report(tmp_path, capsys):
    """Designed coupler lengths against the caption values, reported at a x/÷2 band.

    Coupler lengths depend exponentially on the modal tails and are not a
    quantitative target, so this records the ratios without gating on them.
    """
    lines = []
    for p in ("fig2", "fig4", "fig5", "fig7", "fig8"):
        res = cli.run_command(["coupler", "--preset", p, "--out", str(tmp_path / p)])
        groups = defaultdict(list)
        for c in res["result"]["couplers"]:
            groups[(c["coupler"], c["pol"], c["configured_length_mm"])].append(c)
        for (name, pol, quoted), cs in groups.items():
            k = [c["kappa_rad_per_mm"] for c in cs]
            d = [c["delta_rad_per_mm"] for c in cs]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                des = design_coupler_length(k, d) if len(k) == 2 else design_coupler_length(k[0], d[0])
            ratio = des.length / quoted
            assert math.isfinite(ratio) and ratio > 0
            band = "within" if 0.5 <= ratio <= 2.0 else "OUTSIDE"
            lines.append(f"  {p} {name:<4} {pol} L*={des.length:7.3f} mm quoted {quoted:6.2f} mm "
                         f"ratio {ratio:5.2f} {band} x/÷2")
    with capsys.disabled():
        print("\nCOUPLER LENGTHS (designed vs caption)\n" + "\n".join(lines))
