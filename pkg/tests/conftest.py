import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from crdesign.decision import DesignConfig  # noqa: E402
from crdesign.sampler import McmcConfig  # noqa: E402
from crdesign.scenarios import reference_scenario  # noqa: E402


@pytest.fixture(scope="session")
def ref_scenarios():
    """All seven calibrated Weibull scenarios."""
    return {i: reference_scenario(i) for i in range(1, 8)}


@pytest.fixture(scope="session")
def fast_cfg():
    # Short chains; for engine mechanics, not for statistical claims.
    return DesignConfig(mcmc=McmcConfig(n_iter=400, n_burn=200))


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one pass/fail line per acceptance check; printed at the end of the run."""

    def record(label, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
