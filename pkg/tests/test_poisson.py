
import numpy as np
import pytest

from helpers import paraboloid, smooth_random_field
from tactile_splitter.core import UNIT, ContractError, NormalMap
from tactile_splitter.gelsim import PressScene, Sphere, depth_from_scene, normals_from_depth
from tactile_splitter.poisson import (
    GradientField, divergence, fast_poisson, gauss_seidel_poisson, gradients_from_normals,
    laplacian,
)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return NormalMap((v / np.linalg.norm(v)).reshape(1, 1, 3), UNIT)


def test_gradients_from_normals_examples():
    g = gradients_from_normals(unit((0, 0, 1)))
    assert (g.gx[0, 0], g.gy[0, 0]) == (0.0, 0.0)
    g = gradients_from_normals(unit((-1, 0, 1)))
    assert g.gx[0, 0] == pytest.approx(1.0, abs=1e-6) and g.gy[0, 0] == pytest.approx(0.0, abs=1e-7)
    steep = unit((0.6, 0.0, 0.01))
    nx = float(steep.normals[0, 0, 0])
    g = gradients_from_normals(steep)
    assert g.gx[0, 0] == pytest.approx(-nx / 0.05, rel=1e-6)


def test_zero_field_gives_zero_depth():
    d = fast_poisson(GradientField(np.zeros((10, 12)), np.zeros((10, 12)), 0.1))
    assert not d.depth.any()


def test_degenerate_shape_rejected():
    with pytest.raises(ContractError):
        fast_poisson(GradientField(np.zeros((2, 5)), np.zeros((2, 5)), 0.1))


def test_paraboloid_round_trip():
    d, g = paraboloid()
    rec = fast_poisson(g)
    rmse = np.sqrt(np.mean((rec.depth - d) ** 2))
    assert rmse < 0.02 * 0.3
    assert rec.pitch == 0.05


def test_border_is_zero():
    _, g = paraboloid(n=64)
    rec = fast_poisson(g).depth
    assert not rec[0].any() and not rec[-1].any() and not rec[:, 0].any() and not rec[:, -1].any()


def test_discrete_residual():
    for seed in range(3):
        g = smooth_random_field(seed)
        f = divergence(g)
        res = laplacian(fast_poisson(g).depth) - f
        assert np.abs(res[1:-1, 1:-1]).max() < 1e-4 * np.abs(f).max()


def test_linearity(rng):
    g = smooth_random_field(7)
    base = fast_poisson(g).depth.astype(np.float64)
    for alpha in (-2.0, 0.5, 3.0):
        scaled = fast_poisson(g.scaled(alpha)).depth.astype(np.float64)
        assert np.abs(scaled - alpha * base).max() <= 1e-6 * abs(alpha) * np.abs(base).max()


def test_sphere_press_round_trip():
    s = Sphere(5.0, 0.5, 80, 60)
    d = depth_from_scene(PressScene((s,)))
    rec = fast_poisson(gradients_from_normals(normals_from_depth(d), d.pitch))
    contact = d.depth > 0
    rmse = np.sqrt(np.mean((rec.depth[contact] - d.depth[contact]) ** 2))
    assert rmse < 0.05 * np.sqrt(np.mean(d.depth[contact] ** 2))
    assert rmse < 0.02 * 0.5


def test_gauss_seidel_agrees_on_small_grid():
    g = smooth_random_field(1, n=24, sigma=2.0)
    a = fast_poisson(g).depth.astype(np.float64)
    b = gauss_seidel_poisson(g, tol=1e-10, omega=1.8).depth.astype(np.float64)
    assert np.sqrt(np.mean((a - b) ** 2)) < 1e-4 * np.sqrt(np.mean(a**2))


def test_clip_negative_option():
    _, g = paraboloid(n=64)
    d = fast_poisson(g.scaled(-1.0), clip_negative=True)
    assert d.depth.min() >= 0
