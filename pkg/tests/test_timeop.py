import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqclab import energy, timeop
from cqclab.linalg import NumericalError, ValidationError
from cqclab.timeop import TimeOpSpec

S = 1 / math.sqrt(2)


def f_oracle(z):
    return float(mpmath.ei(z) - mpmath.log(z) - mpmath.euler)


@pytest.mark.parametrize("z", [1e-6, 0.3, 0.999, 1.0, 2.5, 10.0, 31.0, 80.0, 300.0])
def test_f_aux_against_mpmath(z):
    assert timeop.f_aux(z) == pytest.approx(f_oracle(z), rel=1e-11)
    assert timeop.g_aux(z) == pytest.approx(math.exp(-z) * f_oracle(z), rel=1e-10)


def test_f_aux_asymptote():
    for z in (40.0, 100.0, 400.0):
        assert timeop.f_aux(z) / timeop.f_aux_asymptote(z) == pytest.approx(1 + 1 / z, rel=3 / z**2)


def test_f_aux_huge_refused():
    with pytest.raises(NumericalError):
        timeop.f_aux(800.0)
    assert timeop.log_f_aux(800.0) == pytest.approx(float(mpmath.log(mpmath.ei(800) - mpmath.log(800) - mpmath.euler)), rel=1e-12)


def test_mean_T_value():
    assert timeop.mean_T(TimeOpSpec([1.0], [1.0], 1.0, 1.0)) == pytest.approx(0.5 * (1 - math.exp(-1)), rel=1e-14)
    assert timeop.mean_T(TimeOpSpec([1.0], [0.0], 1.0, 1.0)) == 0.0


def test_charfn_checks():
    sp = TimeOpSpec([0.6, 0.8], [0.5, 1.0], 2.0, 1.5)
    f = timeop.charfn_T_diag(sp, [0.0])
    assert abs(f.values[0] - 1) < 1e-12
    vac = timeop.charfn_T_diag(TimeOpSpec([1.0], [0.0], 1.0, 1.0), np.linspace(-5, 5, 11))
    np.testing.assert_allclose(vac.values, 1.0)
    fn = lambda b: timeop.charfn_T_diag(sp, b).values
    assert abs(energy.charfn_moment(fn, 1).real - timeop.mean_T(sp)) < 1e-6
    assert abs(energy.charfn_moment(fn, 2).real - timeop.second_moment_T(sp)) < 1e-6


def test_charfn_power_law_refused():
    with pytest.raises(ValidationError):
        timeop.charfn_T_diag(TimeOpSpec([1.0], [1.0], 1.0, 1.0, s=1.0), [0.0])


def test_power_law_mean():
    r0 = timeop.mean_T_power_law(0.0, 2.0, 1.0, 1.5)
    assert r0["exact"] == pytest.approx(timeop.mean_T(TimeOpSpec([1.0], [1.0], 2.0, 1.5)), rel=1e-12)
    t = 2.0
    lam = 1e3 / t**3  # lam A^2 t^3 = 10^3 with A = 1
    r1 = timeop.mean_T_power_law(1.0, lam, 1.0, t)
    assert r1["relative_gap"] < 0.01
    assert r1["exact"] == pytest.approx(0.75 * t, rel=0.01)
    asym = [timeop.mean_T_power_law(s, 1.0, 1.0, 1.0)["asymptote"] for s in range(6)]
    assert all(b > a for a, b in zip(asym, asym[1:])) and asym[-1] < 1.0


def test_variance_asymptote_s0():
    sp = TimeOpSpec([1.0], [1.0], 50.0, 1.0)
    frac = timeop.fractional_deviation(sp)
    assert frac == pytest.approx(1 / (3 * 50.0), rel=0.05)
    assert frac == pytest.approx(timeop.fractional_deviation_asymptote(sp), rel=0.05)


def test_variance_matches_quadrature_oracle():
    # <T^2> from the density of T in the N >= 1 sectors, evaluated with mpmath
    lam, t = 1.0, 1.0
    z = 7.0
    sp = TimeOpSpec([1.0], [math.sqrt(z)], lam, t)
    mp_f = f_oracle(z)
    r1, r2 = t / 2, t * t / 3
    second = r1 * r1 * (1 - math.exp(-z) * (1 + mp_f)) + r2 * math.exp(-z) * mp_f
    assert timeop.second_moment_T(sp) == pytest.approx(second, rel=1e-12)
    assert timeop.variance_T(sp) == pytest.approx(second - timeop.mean_T(sp) ** 2, rel=1e-9)


@pytest.mark.parametrize("s", [0.0, 1.0])
def test_fractional_deviation_slope(s):
    # one decade of t inside the large-exposure regime
    ts = np.geomspace(100.0, 1000.0, 5) if s == 0 else np.geomspace(5.0, 50.0, 5)
    fd = [timeop.fractional_deviation(TimeOpSpec([1.0], [1.0], 1.0, t, s=s)) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(fd), 1)[0]
    assert abs(slope + (2 * s + 1)) < 0.05


def test_truncated_asymptote_overstates():
    sp = TimeOpSpec([1.0], [1.0], 200.0, 1.0)
    truncated_var = timeop.second_moment_T_truncated_asymptote(sp) - sp.r1() ** 2
    assert truncated_var / timeop.variance_T(sp) == pytest.approx(4.0, rel=0.02)


def test_large_t_distribution():
    one = timeop.dist_T_large_t_diag(TimeOpSpec([0.6, 0.8], [0.5, 1.0], 1.0, 3.0))
    assert one.point_masses == [(1.5, pytest.approx(1.0))]
    mixed = timeop.dist_T_large_t_diag(TimeOpSpec([0.6, 0.8], [0.0, 1.0], 1.0, 3.0))
    assert dict(mixed.point_masses) == pytest.approx({0.0: 0.36, 1.5: 0.64})
    sp = TimeOpSpec([0.6, 0.8], [0.0, 1.0], 10.0, 3.0)
    assert mixed.point_masses and abs(0.64 * 1.5 - timeop.mean_T(sp)) < 2 * math.exp(-30)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.01, 20.0), st.floats(0.0, 2.0))
def test_moment_properties(a, t, s):
    sp = TimeOpSpec([S, S], [a, 1.0], 1.0, t, s=s)
    m = timeop.mean_T(sp)
    assert 0.0 <= m <= t
    assert timeop.variance_T(sp) >= -1e-12 * t * t
    if s == 0:
        assert m <= t / 2 + 1e-12
