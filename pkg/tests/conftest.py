import numpy as np
import pytest

from fracsteklov.mesh import build_collar_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def coarse_mesh():
    return build_collar_mesh(0.0, 1.0, 1.0, 1.0 / 8, gamma=1.0, strip_eps=0.25)


@pytest.fixture(scope="session")
def graded_mesh():
    return build_collar_mesh(0.0, 1.0, 2.0, 1.0 / 16, gamma=2.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
