import numpy as np
import pytest

from viscous_hj.grid import Domain
from viscous_hj.semigroup import SpectralPlan


@pytest.fixture
def line():
    return Domain.interval(1.0, 257)


@pytest.fixture
def coarse_line():
    return Domain.interval(1.0, 65)


@pytest.fixture
def square():
    return Domain.rectangle((1.0, 1.0), (65, 65))


@pytest.fixture
def rect():
    return Domain.rectangle((2.0, 1.0), (33, 17))


@pytest.fixture
def line_plan(line):
    return SpectralPlan(line)


def cos_mode(d, k=1):
    f = np.ones(d.shape)
    for x, L in zip(d.mesh(), d.lengths):
        f = f * np.cos(k * np.pi * x / L)
    return f


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
