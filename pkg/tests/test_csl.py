import numpy as np
import pytest

from cqclab import csl, noise
from cqclab.linalg import HermitianOperator, StateVector, ValidationError, expm_scaled, pauli
from cqclab.noise import TimeGrid


def test_pointer_kernel_values():
    a = HermitianOperator.diagonal([0.0, 1.0])
    np.testing.assert_allclose(csl.pointer_step_kernel(a, 0.0, 0.01, 1.0), np.diag([1.0, np.exp(-0.01)]), rtol=1e-14)
    k = csl.pointer_step_kernel(a, 2.0, 0.01, 1.0)
    assert k[1, 1] == pytest.approx(1.0, abs=1e-15)


def test_kernel_product_matches_evolution():
    a = HermitianOperator.diagonal([-0.3, 0.2, 1.0])
    h0 = HermitianOperator.zeros(3)
    tr = noise.sample_raw_white(TimeGrid(0.01, 300), 1.0, seed=2)
    phi = StateVector.from_amplitudes([0.6, 0.0, 0.8])
    run = csl.evolve_csl(phi, a, h0, tr, 1.0)
    ref = csl.kernel_product(a, h0, tr, 1.0) @ phi.amplitudes
    assert np.max(np.abs(run.final_state.amplitudes - ref)) < 1e-12


def test_closed_form_amplitudes():
    lam, dt = 0.8, 0.02
    a_vals = np.array([0.0, 0.5])
    alpha = np.array([0.6, 0.8])
    tr = noise.sample_raw_white(TimeGrid(dt, 200), lam, seed=4)
    run = csl.evolve_csl(StateVector(alpha.astype(complex)), HermitianOperator.diagonal(a_vals), HermitianOperator.zeros(2), tr, lam)
    expo = [np.sum(dt * (tr.values - 2 * lam * an) ** 2) / (4 * lam) for an in a_vals]
    np.testing.assert_allclose(run.final_state.amplitudes, alpha * np.exp(-np.array(expo)), rtol=1e-10)
    eig = csl.evolve_csl(StateVector(np.array([0, 1], complex)), HermitianOperator.diagonal(a_vals), HermitianOperator.zeros(2), tr, lam)
    assert eig.log_norm2 == pytest.approx(-expo[1] * 2, rel=1e-12)


def test_unitary_limit():
    sx, _, sz = pauli()
    g = TimeGrid(1e-3, 1000)
    tr = noise.NoiseTrajectory(g, np.zeros(1000), noise.RAW, 0)
    phi = StateVector.from_amplitudes([1.0, 0.0])
    run = csl.evolve_csl(phi, HermitianOperator(sz), HermitianOperator(0.7 * sx), tr, 1e-12)
    ref = expm_scaled(0.7 * sx, -1j) @ phi.amplitudes
    assert np.max(np.abs(run.normalized_state.amplitudes - ref)) < 1e-8


def test_single_eigenstate_single_bin():
    st = csl.run_collapse_ensemble([0.0, 1.0], [0.0, 1.0], 1.0, 50.0, 0.05, 200, master_seed=1)
    np.testing.assert_array_equal(st.frequencies, [0.0, 1.0])


def test_ensemble_thread_independence():
    args = (StateVector.from_amplitudes([0.6, 0.8]), HermitianOperator.diagonal([0.0, 1.0]), HermitianOperator(0.3 * pauli()[0]), 1.0,
            TimeGrid.from_horizon(1.0, 0.01), 300, 77)
    e1 = csl.simulate_ensemble(*args, threads=1, chunk=64)
    e4 = csl.simulate_ensemble(*args, threads=4, chunk=64)
    np.testing.assert_array_equal(e1.states, e4.states)
    np.testing.assert_array_equal(e1.a_stat, e4.a_stat)


def test_small_ensemble_refused():
    with pytest.raises(ValidationError):
        csl.run_collapse_ensemble([0.6, 0.8], [0.0, 1.0], 1.0, 1.0, 0.01, 10, master_seed=1)


def test_smeared_operator():
    a = 0.3
    single = csl.build_smeared_A([0.0], a)
    assert single.values[0, 0] == pytest.approx((np.pi * a * a) ** -0.25, rel=1e-14)
    sites = np.linspace(-3, 3, 121)
    sm = csl.build_smeared_A(sites, a, particle_sites=[0.0])
    prof = sm.values[:, 0]
    np.testing.assert_allclose(prof, prof[::-1], rtol=1e-12)
    two = csl.build_smeared_A(sites, a, particle_sites=[-2.0, 2.0])
    i = np.argmin(np.abs(sites + 2.0))
    assert two.values[i, 0] - two.values[i, 1] > 0.9 * two.values[:, 0].max()
    with pytest.warns(UserWarning):
        csl.build_smeared_A(np.linspace(0, 10, 5), 0.3)


def test_free_packet_dispersion():
    h, n, m, s0, t = 0.05, 400, 1.0, 1.0, 1.0
    x = (np.arange(n) - n / 2) * h
    psi = np.exp(-x**2 / (4 * s0**2)).astype(complex)
    psi /= np.linalg.norm(psi)
    u = expm_scaled(csl.lattice_kinetic(n, h, m), -1j * t)
    out = u @ psi
    var = np.sum(np.abs(out) ** 2 * x**2)
    exact = s0**2 * (1 + (t / (2 * m * s0**2)) ** 2)
    assert abs(var / exact - 1) < 0.01
