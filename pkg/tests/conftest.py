import math

import numpy as np
import pytest

from nscontrol.grid import Grid


@pytest.fixture(scope="session")
def small_grid():
    """A coarse 2D box for fast structural tests."""
    return Grid(2, 32, 8 * math.pi)


@pytest.fixture(scope="session")
def medium_grid():
    return Grid(2, 64, 16 * math.pi)


@pytest.fixture(scope="session")
def big_grid():
    """The production box: N = 256, L = 64 pi."""
    return Grid(2, 256, 64 * math.pi)


@pytest.fixture(scope="session")
def grid3():
    return Grid(3, 16, 4 * math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(grid, rng, ncomp=None, smooth=1.0, project=False):
    """Smooth, real, mean-zero random coefficients (optionally Leray-projected)."""
    from nscontrol.operators import project_coeffs

    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    c = grid.fft(rng.standard_normal(shape)) * np.exp(-0.5 * smooth ** 2 * grid.k2)
    c[(...,) + (0,) * grid.n] = 0.0
    if project:
        c = project_coeffs(grid, c)
    return c


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
