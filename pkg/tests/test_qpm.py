import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tmw_spdc.errors import ConfigError, DomainError
from tmw_spdc.material import DiffusionGeometry, MaterialParams
from tmw_spdc.modes import WaveguideModes
from tmw_spdc.qpm import (
    InteractionChannel, PhaseMatchTarget, PolingProfile, chirp_profile, coherence_length_bound,
    design_uniform_period, efficiency_factor, omega_of, phase_matched_omega, phase_mismatch,
    uniform_profile, write_design_csv,
)

PAIR = (InteractionChannel(0, 1), InteractionChannel(1, 0))


def test_target_energy_conservation():
    t = PhaseMatchTarget.from_wavelengths(0.406, 0.780)
    assert t.signal_omega + t.idler_omega == t.pump_omega
    assert t.idler_wavelength == pytest.approx(1 / (1 / 0.406 - 1 / 0.780), rel=1e-12)
    assert PhaseMatchTarget.from_wavelengths(0.406).detuning == 0.0


def test_channel_labels():
    c = InteractionChannel(0, 1, "TE", "TM", 1, "TE")
    assert c.type_label == "Type-II"
    assert c.notation == "(o,e,o)"
    assert c.partner().key == (1, "TM", 0, "TE")
    assert InteractionChannel(0, 1).type_label == "Type-0"
    with pytest.raises(ConfigError):
        InteractionChannel(2, 0)


def test_degenerate_design_is_exact_inverse(guides):
    db = guides(4.0)
    t = PhaseMatchTarget.from_wavelengths(0.406)
    d = design_uniform_period(PAIR[0], t, 1, db)
    db_ = (db.beta(0.406, "TM", 1) - db.beta(0.812, "TM", 0) - db.beta(0.812, "TM", 1))
    assert d.period == 2 * math.pi / db_
    assert d.residuals == (0.0,)
    assert coherence_length_bound(d) == [math.inf]
    # the exchanged channel has the same mismatch at degeneracy, bit for bit
    assert phase_mismatch(PAIR[1], t, None, db) == phase_mismatch(PAIR[0], t, None, db)


def test_higher_order_scales_period(guides):
    db = guides(4.0)
    t = PhaseMatchTarget.from_wavelengths(0.406)
    d1 = design_uniform_period(PAIR[0], t, 1, db)
    d3 = design_uniform_period(PAIR[0], t, 3, db)
    assert d3.period == pytest.approx(3 * d1.period, rel=1e-14)
    assert efficiency_factor(3) == pytest.approx(1 / 9)


def test_averaged_design_residuals_opposite(guides):
    db = guides(4.2)
    t = PhaseMatchTarget.from_wavelengths(0.406, 0.780)
    d = design_uniform_period(PAIR, t, 1, db)
    assert d.residuals[0] == pytest.approx(-d.residuals[1], abs=1e-15)
    assert d.residuals[0] != 0
    L = coherence_length_bound(d)
    assert L[0] == pytest.approx(math.pi / abs(d.residuals[0]) / 1e3)


def test_pair_mismatch_difference_varies_slowly_with_width(guides):
    t = PhaseMatchTarget.from_wavelengths(0.406, 0.780)
    diffs = []
    for w in np.round(np.arange(4.0, 5.0001, 0.1), 1):
        db = guides(float(w))
        a, b = (phase_mismatch(c, t, None, db) for c in PAIR)
        diffs.append(abs(a - b))
        # gauge check: a common shift of every beta cancels in the difference
        assert abs((a + 1.0) - (b + 1.0)) == pytest.approx(abs(a - b), abs=1e-12)
    diffs = np.array(diffs)
    step = np.abs(np.diff(diffs)) / diffs[:-1]
    assert np.all(step <= 0.10)
    # and it is a tiny fraction of the mismatch itself
    assert diffs.max() < 1e-3 * a


def test_period_temperature_tuning_is_smooth():
    temps = np.array([20.0, 45.0, 70.0, 95.0, 120.0])
    t = PhaseMatchTarget.from_wavelengths(0.406)
    per = np.array([design_uniform_period(PAIR[0], t, 1, WaveguideModes(
        DiffusionGeometry(strip_width=4.0), MaterialParams(temperature=T))).period for T in temps])
    slope = np.diff(per) / np.diff(temps)
    assert np.all(np.isfinite(slope)) and np.all(slope < 0)
    # slope changes by well under its own size between neighbouring intervals
    assert np.max(np.abs(np.diff(slope))) < 0.5 * np.min(np.abs(slope))


def test_inverse_problem_recovers_design_frequency(guides):
    db = guides(4.2)
    t = PhaseMatchTarget.from_wavelengths(0.406, 0.780)
    d = design_uniform_period(PAIR[0], t, 1, db)
    w = phase_matched_omega(PAIR[0], d.period, 1, 0.406, db,
                            (omega_of(0.800), omega_of(0.760)))
    assert w == pytest.approx(t.signal_omega, abs=1e-8)
    with pytest.raises(DomainError):
        phase_matched_omega(PAIR[0], d.period, 1, 0.406, db, (omega_of(0.790), omega_of(0.785)))


@given(st.floats(1.5, 3.0), st.floats(-0.2, 0.2), st.floats(1.0, 20.0))
def test_chirp_phase_rate_is_local_wavevector(p0, dp, L):
    prof = chirp_profile(p0, p0 + dp, L)
    y = np.linspace(0.0, L, 9)
    h = 1e-5
    rate = (prof.phase(np.minimum(y + h, L)) - prof.phase(np.maximum(y - h, 0.0)))
    rate /= 1e3 * (np.minimum(y + h, L) - np.maximum(y - h, 0.0))
    assert np.allclose(rate, 2 * math.pi / prof.period(y), rtol=1e-6)
    per = prof.period(y)
    assert np.all(per > 0)
    assert np.all(np.diff(per) >= 0) or np.all(np.diff(per) <= 0)
    kmin, kmax = prof.wavevector_range()
    assert kmin <= 2 * math.pi / per.max() + 1e-12 and kmax >= 2 * math.pi / per.min() - 1e-12


def test_poling_validation():
    with pytest.raises(ConfigError):
        uniform_profile(2.6, 0.0)
    with pytest.raises(ConfigError):
        uniform_profile(-1.0, 2.0)
    with pytest.raises(ConfigError):
        PolingProfile(2.0, 2.6, order=0)
    with pytest.raises(ConfigError):
        PolingProfile(2.0, 2.6, kind="user", positions=np.array([0.0, 1.0]), periods=np.array([2.6, 2.6]))
    assert chirp_profile(2.6, 2.6, 2.0).is_uniform


def test_design_csv(tmp_path, guides):
    db = guides(4.0)
    d = design_uniform_period(PAIR[0], PhaseMatchTarget.from_wavelengths(0.406), 1, db)
    p = tmp_path / "q.csv"
    write_design_csv(p, [d], ["x"])
    head, cols, row = p.read_text().splitlines()
    assert cols.startswith("w1_um,lambda_s_nm,lambda_i_nm,type,k,Lambda_um")
    assert row.split(",")[3] == "Type-0" and row.endswith(",inf")
