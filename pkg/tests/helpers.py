"""Analytic fields shared by the solver and acceptance tests."""

import numpy as np
from scipy.ndimage import gaussian_filter

from tactile_splitter.poisson import GradientField


def paraboloid(n=128, pitch=0.05, a=0.3, r0=2.0):
    """``d = a * max(0, 1 - r^2/r0^2)`` centered on the grid, with its exact gradient."""
    c = (n - 1) / 2.0
    yy, xx = np.mgrid[0:n, 0:n]
    x, y = (xx - c) * pitch, (yy - c) * pitch
    inside = x * x + y * y < r0 * r0
    d = np.where(inside, a * (1.0 - (x * x + y * y) / r0**2), 0.0)
    gx = np.where(inside, -2.0 * a * x / r0**2, 0.0)
    gy = np.where(inside, -2.0 * a * y / r0**2, 0.0)
    return d, GradientField(gx, gy, pitch)


def smooth_random_field(seed, n=64, pitch=0.1, sigma=4.0):
    """Gradient of a smooth random surface that vanishes toward the border."""
    rng = np.random.default_rng(seed)
    d = gaussian_filter(rng.normal(size=(n, n)), sigma)
    yy, xx = np.mgrid[0:n, 0:n] / (n - 1)
    d *= np.sin(np.pi * xx) * np.sin(np.pi * yy)
    gy, gx = np.gradient(d, pitch)
    return GradientField(gx, gy, pitch)
