import numpy as np
import pytest

from echolab.lmg import optimal_t1
from echolab.spin import build_operators

N_REF = 100
CHI = 1.0


@pytest.fixture(scope="session")
def ops100():
    return build_operators(N_REF)


@pytest.fixture(scope="session")
def t1_of():
    """Optimal squeezing time at N = 100, chi = 1 (memoized)."""
    return lambda gamma: optimal_t1(N_REF, CHI, float(gamma)).t1


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(LINES):
            terminalreporter.write_line(LINES[number])
