import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import argrelmin

from dwgrad import lattice as L
from dwgrad.errors import EigensolveError

WL = st.floats(300.0, 3000.0)


def test_beat_period_values():
    assert L.beat_period(1013, 1064) == pytest.approx(10566.98, abs=0.01)
    assert round(L.beat_period(1013, 1064)) == 10567
    assert round(L.beat_period(1013, 1120)) == 5302
    assert L.beat_period(500, 1000) == pytest.approx(500, rel=1e-15)


def test_beat_period_equal_wavelengths():
    with pytest.raises(ValueError, match="infinite"):
        L.beat_period(1064, 1064)


@given(WL, WL, st.floats(0.1, 10.0))
def test_beat_period_symmetric_and_scale_covariant(a, b, c):
    if abs(a - b) < 1e-3:
        return
    assert L.beat_period(a, b) == pytest.approx(L.beat_period(b, a), rel=1e-14)
    assert L.beat_period(c * a, c * b) == pytest.approx(c * L.beat_period(a, b), rel=1e-9)


def test_spec_validation():
    with pytest.raises(ValueError):
        L.LatticeSpec(0.0, 1.0)
    with pytest.raises(ValueError):
        L.LatticeSpec(1064.0, -1.0)
    assert L.LatticeSpec(1064.0, 1.0, 3 * math.pi).phase == pytest.approx(math.pi)


def test_grid_validation():
    with pytest.raises(ValueError):
        L.PotentialGrid(np.array([0.0, 1.0, 3.0]), np.zeros(3))
    with pytest.raises(ValueError):
        L.PotentialGrid(np.linspace(0, 1, 5), np.array([0, 1, np.inf, 0, 0]))


def test_zero_depth_is_flat():
    pot = L.build_potential([L.LatticeSpec(1064.0, 0.0)], -5, 5, 101)
    assert np.all(pot.v == 0)


def test_quadrature_lattices_sum_to_constant():
    specs = [L.LatticeSpec(1064.0, 50.0, 0.0), L.LatticeSpec(1064.0, 50.0, math.pi / 2)]
    pot = L.build_potential(specs, -5, 5, 1001)
    np.testing.assert_allclose(pot.v, 50.0, rtol=0, atol=1e-11)


def test_default_geometry_spacings():
    specs = L.double_well_specs()
    # Cell spacing: the deepest minima of the first two lattices' beat note.
    pot12 = L.build_potential(specs[:2], -32, 32, 64001)
    idx = argrelmin(pot12.v)[0]
    deepest = np.sort(pot12.x[idx[pot12.v[idx] < 1.0]])
    cells = np.diff(deepest)
    assert np.allclose(cells, L.beat_period(1013, 1064) * 1e-3, rtol=0.02)
    # Intra-well spacing: the two lowest minima of the central cell.
    pot = L.build_potential(specs, -5.28, 5.28, 20001)
    idx = argrelmin(pot.v)[0]
    pair = np.sort(pot.x[idx[np.argsort(pot.v[idx])[:2]]])
    assert pair[1] - pair[0] == pytest.approx(5.3, rel=0.05)
    assert pair[0] == pytest.approx(-pair[1], abs=1e-9)


def test_harmonic_oracle():
    pot = L.build_potential([L.LatticeSpec(1064.0, 0.0)], -15, 15, 30001, harmonic_hz=100.0)
    modes = L.solve_modes(pot, n_states=5)
    expected = (np.arange(5) + 0.5) * 100.0
    np.testing.assert_allclose(modes.energies_hz, expected, rtol=1e-6)


@pytest.fixture(scope="module")
def dw():
    return L.central_double_well()


def test_modes_normalized_and_orthonormal(dw):
    pot, modes = dw
    for psi in (modes.psi_gs, modes.psi_ex, modes.psi_l, modes.psi_r):
        assert abs(np.trapezoid(psi**2, modes.x) - 1) < 1e-10
    s = modes.states
    gram = np.trapezoid(s[:, :, None] * s[:, None, :], modes.x, axis=0)
    assert np.abs(gram - np.eye(s.shape[1])).max() < 1e-8
    assert abs(np.trapezoid(modes.psi_l * modes.psi_r, modes.x)) < 1e-8
    assert modes.e_ex >= modes.e_gs
    np.testing.assert_array_equal(modes.psi_l, (modes.psi_gs + modes.psi_ex) / math.sqrt(2))
    np.testing.assert_array_equal(modes.psi_r, (modes.psi_gs - modes.psi_ex) / math.sqrt(2))


def test_symmetric_double_well_parity(dw):
    _, modes = dw
    gs, ex = modes.psi_gs, modes.psi_ex
    even = np.trapezoid(gs * gs[::-1], modes.x)
    odd = np.trapezoid(ex * ex[::-1], modes.x)
    assert abs(even - 1) < 1e-8
    assert abs(odd + 1) < 1e-8


def test_localization(dw):
    _, modes = dw
    pl, pr = L.side_fractions(modes)
    assert pl >= 0.95 and pr >= 0.95
    assert modes.psi_l[modes.x < 0].__pow__(2).sum() > modes.psi_l[modes.x > 0].__pow__(2).sum()


def test_tunneling_decreases_with_barrier():
    depths = np.linspace(150, 330, 10)
    js = [L.central_double_well((370, 400, d), n_points=4001)[1].tunneling_hz for d in depths]
    assert np.all(np.diff(js) < 0)


def test_self_convergence_default():
    specs = L.double_well_specs()
    half = 0.5 * L.beat_period(1013, 1064) * 1e-3
    _, rel_gs, rel_ex = L.self_convergence(specs, -half, half, 20001)
    assert rel_gs < 1e-6 and rel_ex < 1e-6


def test_coarse_grid_warns():
    specs = L.double_well_specs()
    pot = L.build_potential(specs, -5.28, 5.28, 41)
    modes = L.solve_modes(pot)
    assert any("coarse" in w for w in modes.warnings)


def test_unconverged_solve_raises():
    pot = L.build_potential(L.double_well_specs(), -5.28, 5.28, 2001)
    with pytest.raises(EigensolveError):
        L.solve_modes(pot, residual_tol=0.0)


def test_chi_contact_and_total():
    assert L.chi_contact(0.0, 1.0, 1.0) == 0.0
    w = 2 * math.pi * 180
    # Prefactor formula evaluated at 180 Hz radial confinement.
    assert L.chi_contact(1.0, w, w) == pytest.approx(1.4464 * 5.3e-5 * w, rel=1e-12)
    assert L.chi_contact(1.0, w, w) == pytest.approx(0.0867, abs=5e-4)
    assert L.chi_total(0.139) == pytest.approx(0.0, abs=1e-4)
    with pytest.raises(ValueError):
        L.chi_contact(1.0, 0.0, w)


def test_csv_exports(tmp_path, dw):
    pot, modes = dw
    pot.to_csv(tmp_path / "v.csv")
    modes.to_csv(tmp_path / "m.csv")
    head_v = (tmp_path / "v.csv").read_text().splitlines()[0]
    head_m = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert head_v == "x_um,v_nK"
    assert head_m == "x_um,psi_gs,psi_ex,psi_l,psi_r"
