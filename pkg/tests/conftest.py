import numpy as np
import pytest

from vplandau.grid import PhaseGrid, SpatialGrid, VelocityGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def desk_grid():
    """The standard desk-scale phase grid (1-D x, 16^3 velocity box)."""
    return PhaseGrid(SpatialGrid(1, 16), VelocityGrid(16, 8.0))


@pytest.fixture
def clean_grid():
    """Velocity grid fine/wide enough that moment-truncation error is
    below the strictest projection tolerances (h = 0.625, L = 10)."""
    return PhaseGrid(SpatialGrid(1, 8), VelocityGrid(32, 10.0))


@pytest.fixture
def small_grid():
    """Cheap grid for dynamics smoke tests."""
    return PhaseGrid(SpatialGrid(1, 8), VelocityGrid(16, 8.0))


def random_bandlimited_v(rng, velocity_grid, kmax=3, n_modes=30):
    """Random real trigonometric polynomial on the velocity box."""
    import scipy.fft as sfft

    n = velocity_grid.n_v
    c = np.zeros((n, n, n), dtype=complex)
    for _ in range(n_modes):
        m = rng.integers(-kmax, kmax + 1, size=3)
        c[m[0] % n, m[1] % n, m[2] % n] += (rng.standard_normal()
                                            + 1j * rng.standard_normal())
    f = sfft.ifftn(c).real
    peak = np.max(np.abs(f))
    return f / (peak if peak > 0 else 1.0)
