import numpy as np
import pytest

from pksns.grid import GridSpec, make_grid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid_pi():
    # ly = pi makes ky integer-valued, so pure trigonometric modes in y
    return make_grid(GridSpec(nx=16, ny=16, ly=np.pi))


@pytest.fixture
def grid_wide():
    # wide enough that unit-width Gaussians decay below 1e-12 at the boundary
    return make_grid(GridSpec(nx=32, ny=256, ly=12.0))


def random_smooth_field(grid, rng, kx_max=5, ky_max=5, y_width=1.5):
    """Band-limited random data under a Gaussian y envelope."""
    hat = np.zeros((grid.nx, grid.nyr), dtype=complex)
    for k in range(-kx_max, kx_max + 1):
        hat[k % grid.nx, : ky_max + 1] = rng.standard_normal(
            ky_max + 1
        ) + 1j * rng.standard_normal(ky_max + 1)
    f = grid.to_physical(hat)
    return f * np.exp(-(grid.y_row**2) / (2.0 * y_width**2))


def smooth_density(grid, rng, amplitude=1.0, y_width=1.5):
    """Strictly nonnegative smooth density that decays in y.

    Taking |f| of a random field would introduce creases (and Gibbs
    undershoot); instead modulate a positive profile by a bounded smooth
    perturbation.
    """
    s = random_smooth_field(grid, rng, y_width=y_width)
    s = s / max(np.max(np.abs(s)), 1e-300)
    envelope = np.exp(-(grid.y_row**2) / (2.0 * y_width**2)) * np.ones((grid.nx, 1))
    return amplitude * (1.5 + 0.5 * s) * envelope
