"""Acceptance criteria at their stated tolerances.

Each test records a one-line PASS/FAIL summary that is printed at the end of the
session. Criteria that do not hold are left failing.
"""

import pytest

from frt_reach import experiments as ex

from .conftest import record_criterion


@pytest.fixture(scope="module")
def by_number(tmp_path_factory, pendulum_run):
    root = tmp_path_factory.mktemp("acceptance")
    criteria = []
    criteria += ex.run_1d_comparison(root / "1d").criteria
    criteria += ex.run_double_integrator(root / "di").criteria
    criteria += ex.criteria_pendulum(pendulum_run)
    criteria += ex.run_property_suite(root / "props").criteria
    return {c.number: c for c in criteria}


def _check(by_number, n):
    c = by_number[n]
    record_criterion(c)
    assert c.passed, c.line()


@pytest.mark.parametrize("n", range(1, 11), ids=[f"criterion_{n}" for n in range(1, 11)])
def test_criterion(by_number, n):
    _check(by_number, n)
