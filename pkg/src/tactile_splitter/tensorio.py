"""TSR1 binary tensor files and lossy PNG previews.

A TSR1 file is one ASCII header line followed by the raw payload::

    TSR1 f32 <ndim> <d0> <d1> [<d2>]\\n
    <little-endian float32, row-major, channel-interleaved>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = "TSR1"
DTYPE_TAG = "f32"
MAX_HEADER = 256


class TensorFormatError(ValueError):
    """Malformed, truncated or otherwise unreadable tensor file."""


def save_tensor(t, path) -> None:
    arr = np.asarray(t)
    if arr.ndim < 1 or arr.size == 0:
        raise TensorFormatError(f"invalid shape {arr.shape}: tensors must be non-empty")
    arr = arr.astype("<f4", copy=False)
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("refusing to save non-finite values")
    header = f"{MAGIC} {DTYPE_TAG} {arr.ndim} " + " ".join(str(d) for d in arr.shape) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n", 0, MAX_HEADER)
    if nl < 0:
        raise TensorFormatError(f"{path}: missing TSR1 header line")
    try:
        fields = raw[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise TensorFormatError(f"{path}: header is not ASCII") from exc
    if len(fields) < 3 or fields[0] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {fields[:1]}")
    if fields[1] != DTYPE_TAG:
        raise TensorFormatError(f"{path}: unsupported dtype {fields[1]!r}")
    try:
        ndim = int(fields[2])
        shape = tuple(int(f) for f in fields[3:])
    except ValueError as exc:
        raise TensorFormatError(f"{path}: non-integer shape in header") from exc
    if ndim < 1 or len(shape) != ndim or any(d <= 0 for d in shape):
        raise TensorFormatError(f"{path}: inconsistent header shape {fields[2:]}")
    payload = raw[nl + 1:]
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: shape {shape} needs {expected} payload bytes, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)


def save_png(img, path, lo: float = 0.0, hi: float = 1.0) -> None:
    """8-bit preview of an (H, W), (H, W, 1) or (H, W, 3) image scaled from [lo, hi]."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[-1] == 1:
        a = a[..., 0]
    scale = hi - lo if hi > lo else 1.0
    u8 = np.round(np.clip((a - lo) / scale, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8).save(Path(path))


def save_depth_png(depth, path, max_depth: float | None = None) -> None:
    """16-bit grayscale preview of a depth map; lossy, for inspection only."""
    d = np.asarray(depth, dtype=np.float64)
    top = max_depth if max_depth else max(float(d.max()), 1e-9)
    u16 = np.round(np.clip(d / top, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(u16).save(Path(path))
