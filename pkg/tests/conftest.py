import numpy as np
import pytest

from lwamcmc.core import Dataset, RngStream


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def binary4():
    return Dataset([0, 0, 1, 1])


@pytest.fixture
def small_probit():
    return Dataset([1, 1, 1, 1, 1, 0, 0, 0])


@pytest.fixture
def gen():
    return np.random.default_rng(2024)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
