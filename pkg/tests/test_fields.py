import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqclab import fields
from cqclab.linalg import ValidationError


def test_mapping_constants():
    k = fields.field_mapping_constants(1.0, 1.0)
    assert k["C"] == pytest.approx(math.sqrt(2), rel=1e-15)
    assert k["per_time_coefficient"] == pytest.approx(0.25, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-6, 1e3))
def test_per_time_coefficient_any_M(M, lam):
    k = fields.field_mapping_constants(M, lam)
    assert k["per_time_coefficient"] == pytest.approx(1 / (4 * lam), rel=1e-13)
    assert k["identity_residual"] < 1e-12 / lam


def test_vacuum_overlap_forms_agree(rng):
    phi = rng.normal(size=(12, 30))
    a = fields.vacuum_overlap_log(phi, 2.5, 0.3, dx=0.1, product=True)
    b = fields.vacuum_overlap_log(phi, 2.5, 0.3, dx=0.1, product=False)
    assert abs(a - b) < 1e-10 * max(1.0, abs(a))


def test_dft_identity_exact():
    for n in (16, 64, 1000):
        assert fields.discrete_mode_commutator_check(n, 32, 0.1)["dft_deviation"] < 1e-12


def test_refinement_halves_deviation():
    r = fields.refinement_study(500, 41, 0.1, levels=3)
    for ratio in r["ratios"]:
        assert 1.6 <= ratio <= 2.4
    assert r["order"] == pytest.approx(1.0, abs=0.3)


def test_bad_grid():
    with pytest.raises(ValidationError):
        fields.discrete_mode_commutator_check(4, 32, 0.1)
    with pytest.raises(ValidationError):
        fields.field_mapping_constants(0.0, 1.0)
