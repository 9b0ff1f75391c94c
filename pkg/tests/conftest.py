import numpy as np
import pytest

from nrhc_consensus.dynamics import LorenzModel

from .acceptance_report import LINES


def pytest_terminal_summary(terminalreporter):
    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def lorenz():
    return LorenzModel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
