import functools

import numpy as np
import pytest

from l1sqp import problems
from l1sqp.sqp import SolverConfig, solve

# Lines collected by the acceptance module; printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def golden_run(name: str, **overrides):
    """Solve a registry problem from its standard start with default settings."""
    entry = problems.get(name)
    kwargs = {"rho0": entry.rho0_override or 1.0, **overrides}
    return solve(entry.problem, SolverConfig(**kwargs), entry.x0)


@pytest.fixture(scope="session")
def golden():
    return golden_run


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
