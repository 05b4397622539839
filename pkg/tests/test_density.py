import numpy as np
import pytest

from cqclab import csl, density
from cqclab.linalg import DensityMatrix, HermitianOperator, StateVector, ValidationError, pauli, random_hermitian
from cqclab.noise import PHYSICAL, RAW, TimeGrid

S = 1 / np.sqrt(2)


def test_closed_form_value():
    rho = density.density_closed_form([S, S], [0.0, 1.0], 1.0, 2.0)
    assert rho.matrix[0, 1].real == pytest.approx(0.5 * np.exp(-1), abs=1e-15)
    assert rho.matrix[0, 0].real == pytest.approx(0.5)


def test_master_unitary_purity():
    sx, _, sz = pauli()
    spec = density.MasterEvolutionSpec(HermitianOperator(sz), HermitianOperator(sx), 0.0, 3.0, 1e-3)
    rho = density.density_master(DensityMatrix.pure(StateVector.from_amplitudes([0.6, 0.8j])), spec)
    assert abs(rho.purity() - 1) < 1e-10


def test_master_matches_closed_form():
    spec = density.MasterEvolutionSpec(HermitianOperator.diagonal([0.0, 1.0]), HermitianOperator.zeros(2), 1.0, 2.0, 1e-3)
    rho = density.density_master(DensityMatrix.pure(StateVector.from_amplitudes([S, S])), spec)
    ref = density.density_closed_form([S, S], [0.0, 1.0], 1.0, 2.0)
    assert density.frobenius(rho, ref) < 1e-8


def test_master_trace_three_level(rng):
    a, h = random_hermitian(3, rng), random_hermitian(3, rng)
    phi = StateVector.from_amplitudes(rng.normal(size=3) + 1j * rng.normal(size=3))
    spec = density.MasterEvolutionSpec(HermitianOperator(a), HermitianOperator(h), 0.5, 10.0, 2e-3)
    rho = density.density_master(DensityMatrix.pure(phi), spec)
    assert abs(np.trace(rho.matrix).real - 1) < 1e-10
    assert rho.min_eigenvalue() > -1e-10


def test_master_large_dim_route(rng):
    # dim > 16 takes the matrix RK4 path; with H_A = 0 the closed form is exact
    a_vals = np.linspace(-1, 1, 20)
    alpha = rng.normal(size=20)
    alpha /= np.linalg.norm(alpha)
    spec = density.MasterEvolutionSpec(HermitianOperator.diagonal(a_vals), HermitianOperator.zeros(20), 0.7, 0.5, 1e-3)
    rho = density.density_master(DensityMatrix.pure(StateVector(alpha.astype(complex))), spec)
    assert density.frobenius(rho, density.density_closed_form(alpha, a_vals, 0.7, 0.5)) < 1e-8


def test_monte_carlo_refuses_tiny():
    with pytest.raises(ValidationError):
        density.density_monte_carlo([], measure_tag=PHYSICAL)


def test_monte_carlo_vs_closed_form():
    alpha, a_vals, lam, t = [S, S], [0.0, 1.0], 1.0, 0.5
    ens = csl.simulate_ensemble(StateVector.from_amplitudes(alpha), HermitianOperator.diagonal(a_vals), HermitianOperator.zeros(2),
                                lam, TimeGrid.from_horizon(t, 0.01), 10_000, 5)
    mc = density.density_monte_carlo(ens)
    ref = density.density_closed_form(alpha, a_vals, lam, t)
    assert density.frobenius(mc, ref) < 5 * density.aggregate_stderr(mc)


def test_raw_and_physical_agree():
    alpha, a_vals, lam, t = [S, S], [0.0, 1.0], 1.0, 0.5
    args = (StateVector.from_amplitudes(alpha), HermitianOperator.diagonal(a_vals), HermitianOperator.zeros(2), lam,
            TimeGrid.from_horizon(t, 0.01), 10_000, 6)
    phys = density.density_monte_carlo(csl.simulate_ensemble(*args, sampler=PHYSICAL))
    raw = density.density_monte_carlo(csl.simulate_ensemble(*args, sampler=RAW))
    se = np.hypot(density.aggregate_stderr(phys), density.aggregate_stderr(raw))
    assert density.frobenius(phys, raw) < 5 * se


def test_exports():
    rho = density.density_closed_form([S, S], [0.0, 1.0], 1.0, 2.0)
    back = np.loadtxt(density.to_csv(rho).splitlines(), delimiter=",")
    np.testing.assert_array_equal(back[:, 0::2] + 1j * back[:, 1::2], rho.matrix)
    assert density.to_json(rho, t=2.0)["t"] == 2.0
