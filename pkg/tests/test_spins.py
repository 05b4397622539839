import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqclab import spins
from cqclab.linalg import ValidationError


def test_partition():
    assert spins.spin_partition(2, 0.0) == pytest.approx(math.log(4), rel=1e-15)
    assert abs(spins.spin_partition(4, 0.5) - 4 * math.log(2 * math.cosh(0.5))) < 1e-12
    assert abs(spins.spin_partition_bruteforce(4, 0.5) - 4 * math.log(2 * math.cosh(0.5))) < 1e-12
    assert math.isfinite(spins.spin_partition(10**6, 3.0))


def test_pmf_small_case():
    assert spins.spin_block_pmf(2, 0.0, 0) == pytest.approx(0.5, rel=1e-14)
    np.testing.assert_allclose(spins.spin_block_pmf(2, 0.0, [-2, 2]), [0.25, 0.25], rtol=1e-14)


@pytest.mark.parametrize("N", [1, 7, 100, 1000])
def test_pmf_normalized(N):
    assert abs(spins.spin_block_pmf(N, 0.37, spins.support(N)).sum() - 1) < 1e-12


def test_pmf_parity_checked():
    with pytest.raises(ValidationError):
        spins.spin_block_pmf(4, 0.1, 1)
    with pytest.raises(ValidationError):
        spins.spin_block_pmf(4, 0.1, 6)


def test_tv_gauss():
    assert spins.tv_distance(10_000, 1e-3) < 0.01
    # error shrinks with N at fixed betaC sqrt(N)
    tvs = [spins.tv_distance(n, 0.1 / math.sqrt(n)) for n in (100, 1000, 10_000)]
    assert tvs[0] > tvs[1] > tvs[2]


def test_sampling():
    assert np.all(spins.sample_spin_blocks(50, 20.0, 1, 100) == 50)
    x = spins.sample_spin_blocks(1, 0.0, 2, 20_000)
    assert set(np.unique(x)) == {-1, 1}
    assert abs((x == 1).mean() - 0.5) < 3 * math.sqrt(0.25 / 20_000)
    N, bc, n = 1000, 0.01, 100_000
    y = spins.sample_spin_blocks(N, bc, 3, n)
    sd = math.sqrt(N / math.cosh(bc) ** 2 / n)
    assert abs(y.mean() - N * math.tanh(bc)) < 3 * sd
    assert spins.ks_discrete(y, N, bc)["passed"]
    assert spins.sample_spin_block(10, 0.1, 4) == spins.sample_spin_block(10, 0.1, 4)


def test_noise_mapping():
    k = spins.default_constants()
    beta = spins.beta_from_ev(2e-4)
    rho, N = 1000.0, 10_000
    s_mean = N * spins.coupling(k, beta, rho)
    assert spins.spins_to_noise(s_mean, N, k, beta)["s_prime"] == pytest.approx(rho, rel=1e-14)
    assert spins.spins_to_noise(0.0, N, k, beta)["w"] == 0.0
    w1, w2 = spins.spins_to_noise([3.0, 6.0], N, k, beta)["w"]
    assert w2 == pytest.approx(2 * w1, rel=1e-15)


def test_audit_magnitudes():
    rep = spins.audit_parameters(spins.default_constants(), [2e-4, 1e28], 1000.0)
    assert rep.log10_betaC[0] == pytest.approx(-6, abs=1)
    assert rep.log10_betaC[1] == pytest.approx(-38, abs=1)
    assert rep.log10_p[0] == pytest.approx(-112, abs=1)
    assert rep.log10_p[1] == pytest.approx(-49, abs=1)
    assert all(rep.small_coupling)
    assert rep.to_csv().startswith("bath_eV,")


def test_activation_probability_grows_with_temperature():
    k = spins.default_constants()
    temps = np.geomspace(1e-4, 1e28, 9)
    lp = [spins.activation_probability_log10(k, spins.beta_from_ev(t)) for t in temps]
    assert np.all(np.diff(lp) > 0)


def test_constants_parsing():
    k = spins.default_constants()
    k.check()
    assert spins.parse_constants(k.to_text()) == k
    assert spins.parse_constants("a = 2e-7", base=k).a == 2e-7
    with pytest.raises(ValidationError):
        spins.parse_constants("bogus = 1", base=k)
    with pytest.raises(ValidationError):
        spins.parse_constants("G = -1", base=k)


def test_block_geometry():
    cfg = spins.SpinBlockConfig.from_geometry(1e-3, 1e4, 1e3, 1e-4)
    assert cfg.N == pytest.approx(1e4) and cfg.small_coupling
    with pytest.raises(ValidationError):
        spins.SpinBlockConfig(10.0, 0.1, 0.5, 2.0, 2.0)


def test_equivalence_with_csl():
    k = spins.default_constants()
    beta = spins.beta_from_ev(2e-4)
    N = 10_000
    bc = spins.coupling(k, beta, 1000.0)
    mean_blocks = np.full(4, N * bc)
    w = spins.spins_to_noise(mean_blocks, N, k, beta)["w"]
    assert np.all(np.abs(spins.log_amplitude_gauss(mean_blocks, N, bc)) < 1e-12)
    assert np.all(np.abs(spins.log_amplitude_csl(w, 1000.0, N, k, beta)) < 1e-12)
    blocks = spins.sample_spin_blocks(N, bc, 9, 2000)
    eq = spins.spin_model_to_csl_equivalence(blocks, [1000.0, 3000.0], k, beta, N)
    assert eq["max_rel_exact_csl"] < 0.01 and eq["max_rel_gauss_csl"] < 0.01
    r = eq["rows"][1]
    assert r["log_ratio_exact"] == pytest.approx(r["log_ratio_csl"], rel=0.01)
    with pytest.raises(ValidationError):
        spins.spin_model_to_csl_equivalence(blocks, [1000.0], k, beta, 50)


def test_equivalence_warns_on_large_coupling():
    k = spins.default_constants()
    beta = spins.beta_from_ev(1e-12)
    with pytest.warns(UserWarning):
        spins.spin_model_to_csl_equivalence(np.zeros(4, int), [1000.0], k, beta, 100)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 400), st.floats(-2.0, 2.0))
def test_pmf_mean_property(N, bc):
    s = spins.support(N)
    p = spins.spin_block_pmf(N, bc, s)
    assert abs(p.sum() - 1) < 1e-11
    assert abs(np.dot(s, p) - spins.spin_mean(N, bc)) < 1e-9 * N
