import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqclab import density, energy
from cqclab.linalg import HermitianOperator, StateVector, ValidationError, expm_scaled, pauli, random_hermitian

S = 1 / np.sqrt(2)


def test_total_charfn_values():
    f = energy.charfn_total_diag([1.0], [1.0], 1.0, [0.0, 2.0, -2.0])
    np.testing.assert_allclose(f.values, [1.0, np.exp(-1), np.exp(-1)], rtol=1e-15)
    zero = energy.charfn_total_diag([S, S], [0.0, 1.0], 1.0, [0.0, 200.0])
    assert zero.values[1].real == pytest.approx(0.5, abs=1e-12)


def test_total_density_value_and_symmetry():
    e = np.linspace(-5, 5, 2001)
    d = energy.dist_total_diag([1.0], [1.0], 1.0, e)
    assert d.pdf(np.array([0.0]))[0] == pytest.approx(2 / np.pi, rel=1e-14)
    np.testing.assert_allclose(d.density, d.density[::-1], rtol=1e-13)
    # grid mass is trapezoidal, the tail is exact
    assert abs(d.total_mass() - 1) < 1e-7


def test_total_inversion():
    e = np.linspace(-3, 3, 61)
    inv = energy.invert_charfn(lambda b: energy.charfn_total_diag([1.0], [1.0], 1.0, b).values, e, 80.0, 160001)
    ref = energy.dist_total_diag([1.0], [1.0], 1.0, e)
    assert np.max(np.abs(inv.density - ref.density)) < 1e-3


def test_field_charfn_branches():
    assert np.all(energy.charfn_w_diag([1.0], [1.0], 1.0, 0.0, np.linspace(-3, 3, 7)).values == 1.0)
    t, g = 2.0, 0.7
    f = energy.charfn_w_diag([1.0], [np.sqrt(g)], 1.0, t, [t - 1e-13, t, 5.0])
    assert abs(f.values[0] - f.values[1]) < 1e-12
    assert f.values[2] == pytest.approx(np.exp(-g * t), rel=1e-14)


def test_field_distribution():
    t, g = 2.0, 0.7
    e = np.linspace(-4, 4, 81)
    d = energy.dist_w_diag([1.0], [np.sqrt(g)], 1.0, t, e)
    assert d.point_masses[0][1] == pytest.approx(np.exp(-g * t), rel=1e-14)
    assert abs(d.total_mass() - 1) < 1e-12
    inv = energy.invert_charfn(lambda b: energy.charfn_w_diag([1.0], [np.sqrt(g)], 1.0, t, b).values, e, t, 20001,
                               asymptote=np.exp(-g * t))
    away = np.abs(e) > 0.05
    assert np.max(np.abs(inv.density - d.density)[away]) < 1e-3
    vac = energy.dist_w_diag([1.0], [1.0], 1.0, 0.0, e)
    assert vac.point_mass_total() == 1.0 and vac.grid_mass() == 0.0


def test_field_large_t():
    e = np.linspace(-3, 3, 121)
    lam, t = 1.0, 40.0
    big = energy.dist_w_diag([1.0], [0.5], lam, t, e)
    lor = energy.dist_w_large_t_diag([1.0], [0.5], lam, t, e)
    assert np.max(np.abs(big.density - lor.density)) < 1e-3
    assert energy.dist_w_large_t_diag([1.0], [0.0], 1.0, t, e).point_mass_total() == 1.0


def test_interaction():
    assert energy.interaction_sd(1.0, 1.0, 0.005) / energy.interaction_sd(1.0, 1.0, 0.01) == pytest.approx(np.sqrt(2), abs=1e-12)
    e = np.linspace(-60, 60, 2001)
    d = energy.dist_interaction_diag([1.0], [1.0], 1.0, 0.01, e)
    assert abs(np.trapezoid(e * d.density, e)) < 1e-10
    assert energy.dist_interaction_diag([1.0], [0.0], 1.0, 0.01, e).point_mass_total() == 1.0
    with pytest.raises(ValidationError):
        energy.dist_interaction_diag([1.0], [1.0], 1.0, 0.0, e)


def test_general_matches_diagonal():
    b = np.linspace(-4, 4, 33)
    phi = StateVector.from_amplitudes([0.6, 0.8])
    gen = energy.charfn_total_general(phi, np.diag([0.0, 1.0]), np.zeros((2, 2)), 1.3, b)
    diag = energy.charfn_total_diag([0.6, 0.8], [0.0, 1.0], 1.3, b)
    assert np.max(np.abs(gen.values - diag.values)) < 1e-10


def test_general_unitary_eigenstate():
    sx, _, _ = pauli()
    phi = StateVector.from_amplitudes([S, S])
    f = energy.charfn_total_general(phi, np.eye(2), 0.7 * sx, 0.0, np.linspace(-3, 3, 13))
    np.testing.assert_allclose(np.abs(f.values), 1.0, atol=1e-12)


def test_HA_charfn_limits_and_moment():
    sx, _, sz = pauli()
    phi = StateVector.from_amplitudes([0.6, 0.8])
    b = np.linspace(-2, 2, 9)
    t0 = energy.charfn_HA_general(phi, sz, sx, 1.0, 0.0, b)
    ref = np.array([phi.amplitudes.conj() @ expm_scaled(sx, -1j * bb) @ phi.amplitudes for bb in b])
    assert np.max(np.abs(t0.values - ref)) < 1e-12
    frozen = energy.charfn_HA_general(phi, sz, sx, 0.0, 1.5, b)
    assert np.max(np.abs(frozen.values - ref)) < 1e-10
    fn = lambda bb: energy.charfn_HA_general(phi, sz, sx, 0.8, 1.0, bb).values
    m1 = energy.charfn_moment(fn, 1).real
    assert abs(m1 - energy.mean_HA(phi, sz, sx, 0.8, 1.0)) < 1e-6


def test_mean_Hw_zero_without_HA():
    phi = StateVector.from_amplitudes([0.6, 0.8])
    assert energy.mean_Hw(phi, np.diag([0.0, 1.0]), np.zeros((2, 2)), 1.0, 2.0) == 0.0


def test_conservation_random(rng):
    a, h = random_hermitian(3, rng), random_hermitian(3, rng)
    phi = StateVector.from_amplitudes(rng.normal(size=3) + 1j * rng.normal(size=3))
    p = energy.energy_paths(phi, a, h, 0.6, 3.0, 1e-3)
    assert np.max(np.abs(p["total"] - p["total"][0])) < 1e-6


def test_free_particle_constants():
    assert energy.free_particle_field_energy_center(0.1, 2.0, 3.0) == pytest.approx(-0.075)
    assert energy.heating_rate(0.1, 2.0) == pytest.approx(0.025)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 5.0))
def test_field_charfn_hermitian_and_bounded(lam, a, t):
    b = np.linspace(-6, 6, 49)
    f = energy.charfn_w_diag([S, S], [0.0, a], lam, t, b)
    assert f.hermitian_defect() < 1e-14
    assert np.all(np.abs(f.values) <= 1 + 1e-15)
    assert f.at_zero_defect() < 1e-15


def test_exports():
    d = energy.dist_total_diag([1.0], [1.0], 1.0, np.linspace(-1, 1, 5))
    assert energy.to_csv(d).splitlines()[0] == "E,density"
    assert energy.to_json(d, lam=1.0)["parameters"]["lam"] == 1.0
