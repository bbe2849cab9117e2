import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bihnls.spectral import Field, SpectralGrid  # noqa: E402


@pytest.fixture
def grid2():
    return SpectralGrid(2, 10.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(grid, rng, decay=4.0, real=False):
    """Smooth random field: Gaussian-damped random Fourier coefficients."""
    shape = grid.shape
    U = rng.standard_normal(shape) + (0 if real else 1j * rng.standard_normal(shape))
    U = U * np.exp(-grid.frequency_radius**2 / decay)
    f = Field(grid, fourier=U)
    if real:
        f = f.real_part()
    return f


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
