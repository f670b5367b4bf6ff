"""Gradient-field integration: normals -> gradients -> depth.

The depth map solves the discrete Poisson equation ``lap(d) = div(g)`` with
``d = 0`` on the image border. ``lap`` is the 5-point Laplacian and ``div``
uses central differences. The fast solver diagonalizes the Laplacian with a
type-I discrete sine transform; ``gauss_seidel_poisson`` solves the same
system iteratively and exists to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dstn, idstn

from .core import ContractError, DepthMap, NormalMap, UNIT

DEFAULT_CLAMP_NZ = 0.05


@dataclass(frozen=True)
class GradientField:
    """Surface slopes in mm per mm; ``gx`` along columns, ``gy`` along rows."""

    gx: np.ndarray
    gy: np.ndarray
    pitch: float

    def __post_init__(self):
        gx = np.array(self.gx, dtype=np.float64)
        gy = np.array(self.gy, dtype=np.float64)
        if gx.ndim != 2 or gx.shape != gy.shape:
            raise ContractError(f"gradient shapes differ or are not 2-d: {gx.shape} vs {gy.shape}")
        if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
            raise ContractError("gradient field has non-finite values")
        if not self.pitch > 0:
            raise ContractError("pitch must be positive")
        gx.setflags(write=False)
        gy.setflags(write=False)
        object.__setattr__(self, "gx", gx)
        object.__setattr__(self, "gy", gy)

    @property
    def shape(self):
        return self.gx.shape

    def scaled(self, alpha: float) -> "GradientField":
        return GradientField(alpha * self.gx, alpha * self.gy, self.pitch)


def gradients_from_normals(n: NormalMap, pitch: float = 0.1,
                           clamp_nz: float = DEFAULT_CLAMP_NZ) -> GradientField:
    if n.encoding != UNIT:
        raise ContractError("gradients_from_normals needs unit normals")
    v = n.normals.astype(np.float64)
    nz = np.maximum(v[..., 2], clamp_nz)
    return GradientField(-v[..., 0] / nz, -v[..., 1] / nz, pitch)


def divergence(g: GradientField) -> np.ndarray:
    """Central-difference divergence on interior pixels, scaled to the pixel grid.

    Returned values equal ``pitch**2 * div(g)`` so that ``lap_px(d) = divergence(g)``
    with ``lap_px`` the unit-spacing 5-point Laplacian and ``d`` in mm. Border
    entries are zero.
    """
    gx, gy = g.gx, g.gy
    f = np.zeros_like(gx)
    dgx = gx[1:-1, 2:] - gx[1:-1, :-2]
    dgy = gy[2:, 1:-1] - gy[:-2, 1:-1]
    f[1:-1, 1:-1] = 0.5 * g.pitch * (dgx + dgy)
    return f


def laplacian(d: np.ndarray) -> np.ndarray:
    """5-point Laplacian on interior pixels (unit spacing); border entries zero."""
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    out[1:-1, 1:-1] = (d[1:-1, 2:] + d[1:-1, :-2] + d[2:, 1:-1] + d[:-2, 1:-1]
                       - 4.0 * d[1:-1, 1:-1])
    return out


def _check_shape(shape):
    if len(shape) != 2 or shape[0] < 3 or shape[1] < 3:
        raise ContractError(f"Poisson solve needs at least a 3x3 grid, got {shape}")


def fast_poisson(g: GradientField, clip_negative: bool = False) -> DepthMap:
    """Integrate a gradient field with a DST-I Poisson solve (Dirichlet zero border)."""
    _check_shape(g.shape)
    h, w = g.shape
    f = divergence(g)[1:-1, 1:-1]
    ny, nx = f.shape
    # eigenvalues of the 1-d second difference with Dirichlet ends
    ky = 2.0 * np.cos(np.pi * np.arange(1, ny + 1) / (ny + 1)) - 2.0
    kx = 2.0 * np.cos(np.pi * np.arange(1, nx + 1) / (nx + 1)) - 2.0
    denom = ky[:, None] + kx[None, :]
    coeffs = dstn(f, type=1, norm="ortho") / denom
    depth = np.zeros((h, w))
    depth[1:-1, 1:-1] = idstn(coeffs, type=1, norm="ortho")
    if clip_negative:
        depth = np.maximum(depth, 0.0)
    return DepthMap(depth, g.pitch)


def gauss_seidel_poisson(g: GradientField, tol: float = 1e-10, max_iter: int = 100_000,
                         omega: float = 1.0) -> DepthMap:
    """Red-black Gauss-Seidel (SOR if ``omega > 1``) solve of the same system.

    Slow; kept as an independent reference for ``fast_poisson``.
    """
    _check_shape(g.shape)
    f = divergence(g)
    d = np.zeros_like(f)
    ii, jj = np.indices(f.shape)
    interior = np.zeros(f.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    colors = [interior & ((ii + jj) % 2 == c) for c in (0, 1)]
    scale = max(float(np.abs(f).max()), 1e-300)
    for _ in range(max_iter):
        for mask in colors:
            nb = np.zeros_like(d)
            nb[1:-1, 1:-1] = d[1:-1, 2:] + d[1:-1, :-2] + d[2:, 1:-1] + d[:-2, 1:-1]
            gs = (nb - f) / 4.0
            d[mask] += omega * (gs[mask] - d[mask])
        resid = np.abs(laplacian(d) - f)[1:-1, 1:-1].max()
        if resid <= tol * scale:
            break
    return DepthMap(d, g.pitch)


def reconstruct(frame, background, estimator, mode: str = "rgb+nir", pitch: float = 0.1,
                clamp_nz: float = DEFAULT_CLAMP_NZ):
    """Two-step reconstruction: estimate normals, then integrate them to depth.

    ``estimator`` is a ``PfsnnModel`` or a ``LutTable``; ``mode`` must match
    the modality it was built for. Returns ``(encoded NormalMap, DepthMap)``.
    """
    from .lut import LutTable, lut_lookup
    from .pfsnn import PfsnnModel

    if mode not in ("rgb", "rgb+nir"):
        raise ContractError(f"unknown mode {mode!r}")
    if isinstance(estimator, PfsnnModel):
        if estimator.modality != mode:
            raise ContractError(f"PFSNN weights are {estimator.modality!r}, mode is {mode!r}")
        normals = estimator.predict(frame, background)
    elif isinstance(estimator, LutTable):
        if estimator.modality != mode:
            raise ContractError(f"LUT is {estimator.modality!r}, mode is {mode!r}")
        normals = lut_lookup(estimator, frame, background)
    else:
        raise ContractError(f"unsupported estimator {type(estimator).__name__}")
    grads = gradients_from_normals(normals.as_unit(), pitch, clamp_nz)
    return normals, fast_poisson(grads)
