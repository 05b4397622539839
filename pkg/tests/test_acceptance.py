"""End-to-end acceptance criteria at their stated tolerances (one line each)."""

import pytest

from cqclab import acceptance


@pytest.mark.parametrize("number", [c[0] for c in acceptance.CHECKS], ids=[f"{c[0]:02d}-{c[1].lower().replace(' ', '_')}" for c in acceptance.CHECKS])
def test_criterion(number, capsys):
    r = acceptance.run_check(number, acceptance.DEFAULT_SEED, threads=4)
    with capsys.disabled():
        print("\n" + r.line())
    assert r.passed, r.line()
