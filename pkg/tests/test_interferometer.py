import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dwgrad import estimate as E
from dwgrad import interferometer as I
from dwgrad.units import HBAR, MASS_K39


def test_chi_of_b():
    model = I.FeshbachModel()
    assert I.chi_of_b(model, model.b_min) == pytest.approx(0.0, abs=1e-15)
    assert model.a_at_b_min == pytest.approx(0.139, abs=1e-3)
    assert I.chi_of_b(model, model.b_min + 1) == pytest.approx(0.072 * 0.56, rel=1e-12)
    with pytest.raises(ValueError):
        I.FeshbachModel(slope_a=0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        I.NoiseConfig(sigma_bs2=-0.1)
    with pytest.raises(ValueError):
        I.NoiseConfig(sigma_tech=-1)
    with pytest.raises(ValueError):
        I.SequenceConfig(100, -1.0)
    with pytest.raises(ValueError):
        I.SequenceConfig(100, 1.0, n_echo_pulses=2)
    assert I.SequenceConfig(100, 1.0, echo=True).n_echo_pulses == 1


@given(st.floats(0, 10), st.integers(1, 8))
def test_segments_sum_to_t(t, n):
    seq = I.SequenceConfig(10, t, echo=True, n_echo_pulses=n)
    assert sum(seq.segments()) == pytest.approx(t)
    assert len(seq.segments()) == n + 1


@given(st.floats(0, 0.45))
def test_bs_angle_std_gives_requested_variance(s2):
    s = I.NoiseConfig(sigma_bs2=s2).bs_angle_std
    # E[sin^2 eta] for eta ~ N(0, s^2).
    assert 0.5 * (1 - math.exp(-2 * s**2)) == pytest.approx(s2, abs=1e-12)


def test_sin_convention_anchor():
    t = 0.01
    seq = I.SequenceConfig(200, t, epsilon=math.pi / 2 / t)
    z1, z2 = I.expected_imbalances(seq)
    assert z1 == pytest.approx(1.0, abs=1e-12) and z2 == pytest.approx(1.0, abs=1e-12)
    a, b, _ = I.simulate(seq, I.NoiseConfig(common_phase_law="fixed"), 50)
    np.testing.assert_array_equal(a, b)
    assert np.all(a == 1.0)


@pytest.mark.parametrize("phi", [0.0, 0.3, 1.0, -2.0, 3.0])
def test_fringe_is_sine_of_phase(phi):
    seq = I.SequenceConfig(100, 1.0, epsilon=phi)
    z1, _ = I.expected_imbalances(seq)
    assert z1 == pytest.approx(math.sin(phi), abs=1e-12)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.001, 1.0), st.integers(1, 4))
def test_echo_cancels_static_phases(eps, delta, t, pulses):
    seq = I.SequenceConfig(40, t, epsilon=eps, delta=delta, echo=True, n_echo_pulses=pulses)
    z1, z2 = I.expected_imbalances(seq)
    assert abs(z1) < 1e-10 and abs(z2) < 1e-10


def test_noiseless_means_satisfy_ellipse():
    seq = I.SequenceConfig(100, 0.02, delta=0.8 / 0.02)
    pts = [I.expected_imbalances(seq, common_phases=[c]) for c in np.linspace(0, 2 * np.pi, 25)]
    z1, z2 = np.array(pts).T
    assert np.abs(E.ellipse_residual(z1, z2, 0.8)).max() < 1e-12


def test_gradiometer_circle_and_diagonal():
    noise = I.NoiseConfig(seed=4)
    t = 0.05
    circle = I.run_gradiometer(I.SequenceConfig(3000, t, delta=math.pi / 2 / t), noise, 300)
    z1 = np.array([p.z1 for p in circle])
    z2 = np.array([p.z2 for p in circle])
    assert np.abs(z1**2 + z2**2 - 1).max() < 0.1
    diag = I.simulate(I.SequenceConfig(3000, t), noise, 300)
    assert np.abs(diag[0] - diag[1]).max() < 0.15
    assert np.std(diag[0]) > 0.5


def test_shots_are_order_independent():
    seq = I.SequenceConfig(50, 0.02, delta=30.0, chi=0.5)
    noise = I.NoiseConfig(sigma_bs2=0.01, sigma_tech=0.1, seed=9)
    z1, z2, ids = I.simulate(seq, noise, 40)
    a1, a2, _ = I.simulate(seq, noise, 25)
    b1, b2, _ = I.simulate(seq, noise, 15, first_shot=25)
    np.testing.assert_array_equal(z1, np.concatenate([a1, b1]))
    np.testing.assert_array_equal(z2, np.concatenate([a2, b2]))
    one = I.run_shot(seq, noise, 17)
    assert (one.z1, one.z2, one.shot_id) == (z1[17], z2[17], 17)
    assert len(set(ids)) == 40


def test_common_mode_offset_does_not_move_estimate():
    seq = I.SequenceConfig(100, 0.02, delta=1.0 / 0.02)
    fits = []
    for offset in (0.0, 1.3):
        noise = I.NoiseConfig(sigma_tech=0.1, common_phase_law="normal",
                              common_phase_width=1.5, common_phase_offset=offset, seed=2)
        z1, z2, ids = I.simulate(seq, noise, 3000)
        fits.append(E.mle_fit(E.JointSamples(z1, z2, ids), E.IDENTITY).delta_phi)
    assert fits[0] == pytest.approx(1.0, abs=0.03)
    assert fits[0] == pytest.approx(fits[1], abs=0.03)


def test_predicted_sigma_examples():
    assert I.predicted_sigma(3000, 0, 0, 0, 0) == pytest.approx(math.sqrt(2 / 3000), rel=1e-15)
    assert I.predicted_sigma(3000, 0.004, 0, 0, 0.15) == pytest.approx(0.152, abs=1e-3)
    with pytest.raises(ValueError):
        I.predicted_sigma(0, 0, 0, 0, 0)


@given(st.integers(10, 5000), st.floats(0, 0.1), st.floats(0, 1e-2), st.floats(0, 1))
def test_predicted_sigma_monotone_in_twisting(n, s2, chit, tech):
    a = I.predicted_sigma(n, s2, chit, 1.0, tech)
    b = I.predicted_sigma(n, s2, chit * 1.5 + 1e-6, 1.0, tech)
    assert b >= a >= math.sqrt(2 / n)


def test_delta_from_trap():
    assert I.delta_from_trap(0.0, 5.3e-6) == 0.0
    w, d = 2 * math.pi * 18.5, 5.3e-6
    delta = I.delta_from_trap(w, d)
    assert delta == pytest.approx(MASS_K39 * w**2 * d**2 / HBAR, rel=1e-15)
    assert delta == pytest.approx(233.0734, rel=1e-6)
    assert I.trap_omega_from_slope(delta, d) == pytest.approx(w, rel=1e-12)


def test_rabi_scan_anchors():
    f_rabi = 13.4
    half = 0.5 / f_rabi
    pts = I.rabi_scan(f_rabi / 2, [0.0, half], n_atoms=200)
    assert pts[0].z1 == pytest.approx(1.0, abs=1e-12)
    assert pts[1].z1 == pytest.approx(-1.0, abs=1e-10)


def test_rabi_fit_recovers_frequency():
    times = np.linspace(0, 0.25, 26)
    pts = I.rabi_scan(6.7, times, n_shots=3, n_atoms=3000, seed=1, tunneling_hz_2=6.9)
    assert I.fit_rabi_frequency(times, [p.z1 for p in pts]) == pytest.approx(13.4, rel=0.01)
    assert I.fit_rabi_frequency(times, [p.z2 for p in pts]) == pytest.approx(13.8, rel=0.01)
