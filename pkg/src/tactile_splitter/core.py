"""Domain types shared by every stage of the pipeline.

Images are plain numpy arrays wrapped in small frozen dataclasses. Arrays are
copied to float32 on construction and marked read-only, so a value can be
shared freely once built.

Channel order for the 4-channel stack is always (R, G, B, NIR).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT = "unit"
ENCODED01 = "encoded01"

# Tolerance on |n| for unit normals; vectors outside it are re-normalized on decode.
UNIT_TOL = 1e-6


class ContractError(ValueError):
    """An input violated a documented precondition."""


def _frozen(a, ndim: int, name: str, channels: int | None = None) -> np.ndarray:
    arr = np.array(a, dtype=np.float32, copy=True)
    if arr.ndim != ndim:
        raise ContractError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if channels is not None and arr.shape[-1] != channels:
        raise ContractError(f"{name}: expected {channels} channels, got {arr.shape[-1]}")
    if arr.size == 0:
        raise ContractError(f"{name}: empty array")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name}: non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MultiModalFrame:
    """Aligned RGB + NIR image pair, values in [0, 1].

    ``rgb`` is (H, W, 3) and ``nir`` is (H, W, 1).
    """

    rgb: np.ndarray
    nir: np.ndarray

    def __post_init__(self):
        rgb = _frozen(self.rgb, 3, "rgb", 3)
        nir = np.asarray(self.nir)
        if nir.ndim == 2:
            nir = nir[..., None]
        nir = _frozen(nir, 3, "nir", 1)
        if rgb.shape[:2] != nir.shape[:2]:
            raise ContractError(f"rgb {rgb.shape[:2]} and nir {nir.shape[:2]} differ in size")
        for name, a in (("rgb", rgb), ("nir", nir)):
            if a.min() < 0.0 or a.max() > 1.0:
                raise ContractError(f"{name}: values outside [0, 1]")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "nir", nir)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rgb.shape[:2]

    def stack(self) -> np.ndarray:
        """(H, W, 4) array in (R, G, B, NIR) order."""
        return np.concatenate([self.rgb, self.nir], axis=-1)

    @classmethod
    def from_stack(cls, stack: np.ndarray) -> "MultiModalFrame":
        stack = np.asarray(stack)
        if stack.ndim != 3 or stack.shape[-1] != 4:
            raise ContractError(f"expected (H, W, 4) stack, got {stack.shape}")
        return cls(rgb=stack[..., :3], nir=stack[..., 3:])

    def without_nir(self) -> "MultiModalFrame":
        """Copy with the NIR channel zeroed (RGB-only mode)."""
        return MultiModalFrame(rgb=self.rgb, nir=np.zeros_like(self.nir))


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel surface normals, (H, W, 3).

    With ``encoding == "unit"`` every vector has unit length, except the
    all-zero vector produced by the epsilon guard of sphere normalization.
    With ``encoding == "encoded01"`` values are ``0.5 * n + 0.5``.
    """

    normals: np.ndarray
    encoding: str = UNIT

    def __post_init__(self):
        n = _frozen(self.normals, 3, "normals", 3)
        if self.encoding == UNIT:
            norm = np.linalg.norm(n.astype(np.float64), axis=-1)
            ok = (norm == 0.0) | (np.abs(norm - 1.0) <= UNIT_TOL)
            if not np.all(ok):
                worst = float(np.max(np.abs(norm[~ok] - 1.0)))
                raise ContractError(f"unit normals deviate from unit length by {worst:.3g}")
        elif self.encoding == ENCODED01:
            if n.min() < 0.0 or n.max() > 1.0:
                raise ContractError("encoded normals outside [0, 1]")
        else:
            raise ContractError(f"unknown normal encoding {self.encoding!r}")
        object.__setattr__(self, "normals", n)

    @property
    def shape(self) -> tuple[int, int]:
        return self.normals.shape[:2]

    def as_unit(self) -> "NormalMap":
        return self if self.encoding == UNIT else decode_normals(self)

    def as_encoded(self) -> "NormalMap":
        return self if self.encoding == ENCODED01 else encode_normals(self)


@dataclass(frozen=True)
class DepthMap:
    """Indentation depth in millimeters, positive into the gel."""

    depth: np.ndarray
    pitch: float

    def __post_init__(self):
        d = _frozen(self.depth, 2, "depth")
        if not self.pitch > 0:
            raise ContractError(f"pitch must be positive, got {self.pitch}")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


def unit_normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Normalize vectors along ``axis``; zero vectors stay zero."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    return np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)


def encode_normals(n: NormalMap) -> NormalMap:
    if n.encoding != UNIT:
        raise ContractError(f"encode_normals expects unit normals, got {n.encoding}")
    enc = 0.5 * n.normals.astype(np.float64) + 0.5
    return NormalMap(np.clip(enc, 0.0, 1.0), ENCODED01)


def decode_normals(n: NormalMap) -> NormalMap:
    """Map encoded normals back to unit vectors.

    Vectors whose length is off by more than 1e-6 (typically after 8-bit
    quantization) are re-normalized; exact zero stays zero.
    """
    if n.encoding != ENCODED01:
        raise ContractError(f"decode_normals expects encoded01 normals, got {n.encoding}")
    v = 2.0 * n.normals.astype(np.float64) - 1.0
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    off = (np.abs(norm - 1.0) > UNIT_TOL) & (norm > 0)
    v = np.where(off, v / np.where(norm > 0, norm, 1.0), v)
    return NormalMap(v.astype(np.float32), UNIT)
