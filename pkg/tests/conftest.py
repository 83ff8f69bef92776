import numpy as np
import pytest

from wegnerlab.hamiltonian import contact_interaction
from wegnerlab.lattice import Rectangle, RectangularDomain
from wegnerlab.randomness import uniform

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def pair36():
    """Two particles on the same six-site interval: |Lambda| = 36, K = 2."""
    return RectangularDomain.of(Rectangle.interval(1, 6), Rectangle.interval(1, 6))


@pytest.fixture
def unif():
    return uniform(0.0, 1.0)


@pytest.fixture
def contact():
    return contact_interaction(1.0, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
