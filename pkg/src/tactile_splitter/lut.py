"""Look-up-table baseline: quantized color change -> mean surface gradient.

Each pixel's background-subtracted intensities (RGB, optionally NIR) are
scaled to [0, 1] with the per-channel range seen during calibration and cut
into ``bins`` levels per channel. A bin stores the mean gradient
``(gx, gy) = (-nx/nz, -ny/nz)`` of the calibration pixels that fell into it.
Unseen keys fall back to the nearest occupied bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import ContractError, ENCODED01, MultiModalFrame, NormalMap, UNIT, unit_normalize
from .tensorio import load_tensor, save_tensor
from .textconfig import ConfigError, read_flat, to_floats, to_int, write_flat

MIN_NZ = 0.05


@dataclass
class LutTable:
    bins: int
    channels: int
    lo: np.ndarray
    hi: np.ndarray
    keys: np.ndarray      # (K, channels) integer bin coordinates of occupied bins
    grads: np.ndarray     # (K, 2) mean (gx, gy)
    counts: np.ndarray    # (K,)
    background_subtracted: bool = True
    _index: dict = field(default=None, init=False, repr=False, compare=False)
    _tree: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.channels not in (3, 4):
            raise ContractError(f"LUT channels must be 3 or 4, got {self.channels}")
        self.keys = np.asarray(self.keys, dtype=np.int64).reshape(-1, self.channels)
        self.grads = np.asarray(self.grads, dtype=np.float64).reshape(-1, 2)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(self.channels)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(self.channels)
        if not (len(self.keys) == len(self.grads) == len(self.counts)):
            raise ContractError("keys, grads and counts differ in length")
        if np.any(self.counts < 1) or not np.all(np.isfinite(self.grads)):
            raise ContractError("occupied bins need count >= 1 and finite gradients")

    def __len__(self):
        return len(self.keys)

    @property
    def modality(self) -> str:
        return "rgb+nir" if self.channels == 4 else "rgb"

    def flat_keys(self, coords: np.ndarray) -> np.ndarray:
        radix = self.bins ** np.arange(self.channels - 1, -1, -1, dtype=np.int64)
        return coords @ radix

    def quantize(self, delta: np.ndarray) -> np.ndarray:
        """Integer bin coordinates for (N, channels) background-subtracted values."""
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        u = np.clip((delta - self.lo) / span, 0.0, 1.0)
        return np.minimum((u * self.bins).astype(np.int64), self.bins - 1)

    def _lookup_structures(self):
        if self._index is None:
            flat = self.flat_keys(self.keys)
            self._index = dict(zip(flat.tolist(), range(len(flat))))
            self._tree = cKDTree(self.keys.astype(np.float64))
        return self._index, self._tree


def _deltas(frame: MultiModalFrame, background: MultiModalFrame, channels: int) -> np.ndarray:
    if frame.shape != background.shape:
        raise ContractError(f"frame {frame.shape} and background {background.shape} differ")
    d = frame.stack().astype(np.float64) - background.stack().astype(np.float64)
    return d[..., :channels].reshape(-1, channels)


def build_lut(samples, channels: int = 3, bins: int = 32) -> LutTable:
    """Calibrate a table from ``(frame, background, unit normals[, mask])`` tuples.

    Pixels steeper than ``nz <= 0.05`` are skipped.
    """
    samples = list(samples)
    if not samples:
        raise ContractError("LUT calibration needs at least one sample")
    if bins < 1:
        raise ContractError("bins must be positive")
    deltas, grads = [], []
    for s in samples:
        frame, background, gt = s[:3]
        mask = s[3] if len(s) > 3 else None
        if gt.encoding != UNIT:
            raise ContractError("LUT calibration needs unit ground-truth normals")
        if gt.shape != frame.shape:
            raise ContractError("ground truth and frame differ in size")
        d = _deltas(frame, background, channels)
        n = gt.normals.reshape(-1, 3).astype(np.float64)
        keep = n[:, 2] > MIN_NZ
        if mask is not None:
            keep &= np.asarray(mask, dtype=bool).reshape(-1)
        n = n[keep]
        deltas.append(d[keep])
        grads.append(np.stack([-n[:, 0] / n[:, 2], -n[:, 1] / n[:, 2]], axis=1))
    delta = np.concatenate(deltas)
    grad = np.concatenate(grads)
    if len(delta) == 0:
        raise ContractError("no calibration pixels survived the slope cutoff")
    lo, hi = delta.min(axis=0), delta.max(axis=0)
    table = LutTable(bins, channels, lo, hi, np.zeros((0, channels)), np.zeros((0, 2)),
                     np.zeros(0))
    coords = table.quantize(delta)
    flat = table.flat_keys(coords)
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(uniq))
    gx = np.bincount(inverse, weights=grad[:, 0], minlength=len(uniq)) / counts
    gy = np.bincount(inverse, weights=grad[:, 1], minlength=len(uniq)) / counts
    return LutTable(bins, channels, lo, hi, coords[first], np.stack([gx, gy], axis=1), counts)


def lut_gradients(table: LutTable, frame: MultiModalFrame,
                  background: MultiModalFrame) -> np.ndarray:
    """(H, W, 2) gradient estimate; unseen keys take the nearest occupied bin."""
    if len(table) == 0:
        raise ContractError("empty LUT")
    index, tree = table._lookup_structures()
    coords = table.quantize(_deltas(frame, background, table.channels))
    flat = table.flat_keys(coords)
    rows = np.array([index.get(k, -1) for k in flat.tolist()], dtype=np.int64)
    missing = rows < 0
    if missing.any():
        _, nearest = tree.query(coords[missing].astype(np.float64), k=1)
        rows[missing] = nearest
    h, w = frame.shape
    return table.grads[rows].reshape(h, w, 2)


def lut_lookup(table: LutTable, frame: MultiModalFrame, background: MultiModalFrame) -> NormalMap:
    g = lut_gradients(table, frame, background)
    n = unit_normalize(np.stack([-g[..., 0], -g[..., 1], np.ones(g.shape[:2])], axis=-1))
    return NormalMap(np.clip(0.5 * n + 0.5, 0.0, 1.0), ENCODED01)


def save_lut(table: LutTable, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_tensor(table.keys.astype(np.float32), d / "keys.tsr")
    save_tensor(table.grads.astype(np.float32), d / "values.tsr")
    save_tensor(table.counts.astype(np.float32)[:, None], d / "counts.tsr")
    write_flat({
        "format": "lut-v1",
        "bins": table.bins,
        "channels": table.channels,
        "modality": table.modality,
        "lo": [float(v) for v in table.lo],
        "hi": [float(v) for v in table.hi],
        "built_from": "background_subtracted" if table.background_subtracted else "raw",
        "entries": len(table),
    }, d / "manifest.txt")


def load_lut(directory, expect_modality: str | None = None) -> LutTable:
    d = Path(directory)
    path = d / "manifest.txt"
    if not path.is_file():
        raise FileNotFoundError(f"no LUT manifest in {d}")
    man = read_flat(path)
    if man.get("format") != "lut-v1":
        raise ConfigError(f"not a LUT directory: format={man.get('format')!r}", path)
    channels = to_int(man["channels"], "channels", path=path)
    table = LutTable(
        bins=to_int(man["bins"], "bins", path=path),
        channels=channels,
        lo=to_floats(man["lo"], "lo", path=path),
        hi=to_floats(man["hi"], "hi", path=path),
        keys=np.rint(load_tensor(d / "keys.tsr")),
        grads=load_tensor(d / "values.tsr"),
        counts=np.rint(load_tensor(d / "counts.tsr")),
        background_subtracted=man.get("built_from", "background_subtracted") == "background_subtracted",
    )
    if expect_modality is not None and table.modality != expect_modality:
        raise ContractError(f"LUT is {table.modality!r} but {expect_modality!r} was requested")
    return table
