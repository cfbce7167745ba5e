import numpy as np
import pytest

from iffsm.model import Constellation, GlobalParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def qpsk():
    return Constellation.qpsk()


@pytest.fixture
def bpsk():
    return Constellation.bpsk()


def random_globals(rng, M, L, D, a=(0.1, 0.5), b=(0.5, 0.95)):
    taps = (rng.standard_normal((M, L, D)) + 1j * rng.standard_normal((M, L, D))) / np.sqrt(2)
    return GlobalParams(rng.uniform(*a, M), rng.uniform(*b, M), taps, np.ones(L))


@pytest.fixture
def small_problem(rng, qpsk):
    """Random globals, data and trajectories for weight checks."""
    M, L, D, T = 3, 3, 4, 7
    g = random_globals(rng, M, L, D)
    Y = rng.standard_normal((T, D)) + 1j * rng.standard_normal((T, D))
    return g, Y, qpsk


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
