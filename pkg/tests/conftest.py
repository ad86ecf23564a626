import numpy as np
import pytest

from vfgnn.graph import generate_sbm, vertical_partition

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_partitioned():
    master = generate_sbm(3, 8, 0.4, 0.05, 6, 1.0, seed=3)
    return vertical_partition(master, [0.5, 0.5], seed=3)
