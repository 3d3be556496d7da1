import numpy as np
import pytest

from diskfit.imagepipe import EdgePointSet


def circle_points(x0, y0, r, n, rng=None, angles=None):
    """Points on a circle with exact unit normals pointing at the centre."""
    if angles is None:
        rng = rng or np.random.default_rng(0)
        angles = rng.uniform(0, 2 * np.pi, n)
    c, s = np.cos(angles), np.sin(angles)
    return EdgePointSet(x0 + r * c, y0 + r * s, -c, -s)


def noisy_circle_points(x0, y0, r, n, pos_sd, normal_sd, rng, unit=False):
    """Circle points with Gaussian position noise and additive normal noise.

    The noisy normals are left non-unit unless ``unit`` is set, in which case
    they are rescaled the way the image pipeline does.
    """
    a = rng.uniform(0, 2 * np.pi, n)
    c, s = np.cos(a), np.sin(a)
    nx = -c + rng.normal(0, normal_sd, n)
    ny = -s + rng.normal(0, normal_sd, n)
    if unit:
        length = np.hypot(nx, ny)
        nx, ny = nx / length, ny / length
    return EdgePointSet(x0 + r * c + rng.normal(0, pos_sd, n), y0 + r * s + rng.normal(0, pos_sd, n), nx, ny)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
