import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tmw_spdc.errors import ConfigError
from tmw_spdc.interference import (
    ArmFilters, arm_transfer_matrix, bandpass_filter, default_delays, dispersion_factor,
    dispersion_phase, hom_curve, oscillation_period,
)
from tmw_spdc.modes import C_UM_PER_FS
from tmw_spdc.spdc import JointSpectrum, entanglement_quality, mirror, symmetric_grid

K01 = (0, "TM", 1, "TM")
K10 = (1, "TM", 0, "TM")
WP = 2 * math.pi * C_UM_PER_FS / 0.406


def synthetic(shape, n=2001, span=0.2):
    g = symmetric_grid(WP, span, n)
    a = shape(g.offsets).astype(complex)
    return JointSpectrum(g, {K01: a, K10: mirror(a)})


def beta_pair(dispersive=True):
    # smooth stand-ins for the even/odd mode β(ω), rad/um
    def b0(w):
        w = np.asarray(w)
        return 7.3 * w + (0.4 * (w - 2.3) ** 2 + 0.3 * (w - 2.3) ** 3 if dispersive else 0)

    def b1(w):
        w = np.asarray(w)
        return 7.28 * w + (0.5 * (w - 2.3) ** 2 - 0.2 * (w - 2.3) ** 3 if dispersive else 0)

    return b0, b1


def test_bandpass_filter_shape():
    f = bandpass_filter(812.0, 10.0)
    w = lambda lam: 2 * math.pi * C_UM_PER_FS / (1e-3 * lam)
    assert f(w(812.0)) == pytest.approx(1.0)
    assert f(w(817.0)) ** 2 == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ConfigError):
        bandpass_filter(812.0, 0.0)


def test_symmetric_spectrum_gives_full_visibility():
    js = synthetic(lambda x: np.exp(-(x / 0.02) ** 2))
    tau = np.linspace(-300, 300, 1201)
    c = hom_curve(js, tau)
    assert c.visibility == pytest.approx(1.0, abs=1e-3)
    assert abs(c.dip) <= c.dip_uncertainty
    assert np.all(c.R >= 0)
    assert c.R[0] == pytest.approx(1.0, abs=1e-6) and c.R[-1] == pytest.approx(1.0, abs=1e-6)


def test_unit_dispersion_is_identity(nondegenerate_source):
    _, js = nondegenerate_source
    tau = default_delays(js, 801)
    a = hom_curve(js, tau)
    b = hom_curve(js, tau, dispersion=np.ones(len(js.grid.offsets)))
    assert np.max(np.abs(a.R - b.R)) <= 1e-12


@pytest.mark.parametrize("fixture", ["degenerate_source", "nondegenerate_source"])
def test_visibility_equals_entanglement_quality(request, fixture):
    _, js = request.getfixturevalue(fixture)
    tau = default_delays(js, 4001)
    c = hom_curve(js, tau)
    assert c.visibility == pytest.approx(entanglement_quality(js), abs=1e-3)


def test_asymmetric_grid_is_rejected():
    g = symmetric_grid(WP, 0.1, 201)
    T = arm_transfer_matrix(ArmFilters(0, 1, 1, 1, *beta_pair()), g.omega_s)
    with pytest.raises(ConfigError):
        dispersion_factor(T, WP + 0.01)


@given(st.floats(0, 5), st.floats(0, 10), st.floats(0, 10), st.floats(0, 3))
def test_transfer_matrix_is_scaled_unitary(arm, even, odd, taper):
    w = np.linspace(2.2, 2.4, 7)
    T = arm_transfer_matrix(ArmFilters(arm, even, odd, taper, *beta_pair()), w).T
    TT = np.einsum("fij,fkj->fik", T, T.conj())
    assert np.allclose(TT, 2 * np.eye(2), atol=1e-12)


@given(st.floats(0, 5), st.floats(0, 10), st.floats(0, 2))
def test_balanced_arms_cancel_even_orders(arm, even, taper):
    g = symmetric_grid(WP, 0.1, 401)
    f = ArmFilters.balanced(even, taper, *beta_pair(), arm=arm)
    D = dispersion_factor(arm_transfer_matrix(f, g.omega_s), WP)
    assert np.max(np.abs(np.abs(D) - 1)) < 1e-12
    # odd phase: D(Ω) D(-Ω) = 1
    assert np.max(np.abs(D * mirror(D) - 1)) < 1e-9
    assert abs(D[g.center] - 1) < 1e-12


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 2))
def test_dispersion_phase_closed_form(even, odd, taper):
    g = symmetric_grid(WP, 0.1, 201)
    f = ArmFilters(1.0, even, odd, taper, *beta_pair())
    D = dispersion_factor(arm_transfer_matrix(f, g.omega_s), WP)
    ref = np.exp(1j * dispersion_phase(f, g.omega_s, WP))
    assert np.max(np.abs(D - ref)) < 1e-8


def test_negative_lengths_rejected():
    with pytest.raises(ConfigError):
        ArmFilters(-1.0, 0, 0, 0, *beta_pair())


def test_beat_period_of_separated_peaks():
    d = 0.08
    js = synthetic(lambda x: np.exp(-((x - d) / 0.01) ** 2) + np.exp(-((x + d) / 0.01) ** 2))
    tau = np.linspace(-600, 600, 6001)
    c = hom_curve(js, tau)
    assert oscillation_period(tau, c.R) == pytest.approx(2 * math.pi / (2 * d), rel=0.01)


def test_curve_outputs(tmp_path):
    js = synthetic(lambda x: np.exp(-(x / 0.02) ** 2))
    c = hom_curve(js, np.linspace(-100, 100, 11))
    c.write_csv(tmp_path / "h.csv", ["cfg"])
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[:2] == ["# cfg", "tau_fs,R"] and len(lines) == 13
    c.write_json(tmp_path / "h.json")
    assert "visibility" in (tmp_path / "h.json").read_text()


def test_identical_filters_equal_prefiltered_spectrum():
    js = synthetic(lambda x: np.exp(-((x - 0.01) / 0.03) ** 2) * np.exp(1j * 40 * x))
    lam0 = 1e3 * 2 * math.pi * C_UM_PER_FS / (0.5 * WP)
    f = bandpass_filter(lam0, 5.0)
    tau = np.linspace(-200, 200, 401)
    a = hom_curve(js, tau, filters=(f, f))
    g = js.grid
    amp = f(g.omega_s) * f(g.omega_p - g.omega_s)
    pre = JointSpectrum(g, {K01: js[K01] * amp, K10: js[K10] * amp})
    b = hom_curve(pre, tau)
    assert np.max(np.abs(a.R - b.R)) < 1e-12


def test_unequal_detector_filters_keep_beating():
    d = 0.08
    js = synthetic(lambda x: np.exp(-((x - d) / 0.01) ** 2) + 0.8 * np.exp(-((x + d) / 0.01) ** 2))
    lam = lambda om: 1e3 * 2 * math.pi * C_UM_PER_FS / om
    hi, lo = lam(0.5 * WP + d), lam(0.5 * WP - d)
    filters = (bandpass_filter(hi, 10.0), bandpass_filter(lo, 10.0))
    tau = np.linspace(-600, 600, 6001)
    c = hom_curve(js, tau, filters=filters)
    # each detector sees one band, yet the two mode assignments still interfere
    assert c.visibility > 0.9
    assert oscillation_period(tau, c.R) == pytest.approx(2 * math.pi / (2 * d), rel=0.01)
    swapped = hom_curve(js, tau, filters=filters[::-1])
    assert np.max(np.abs(swapped.R - c.R)) < 1e-9
