"""Cross-camera alignment: homographies from corner correspondences, RANSAC, warping."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ContractError, MultiModalFrame

DET_EPS = 1e-12


class DegenerateConfigurationError(ValueError):
    """Point configuration does not determine a homography."""


class AlignmentError(RuntimeError):
    """RANSAC found no model supported by at least four inliers."""


@dataclass(frozen=True)
class Correspondences:
    """Matched pixel coordinates: ``src[i]`` in one image maps to ``dst[i]`` in the other."""

    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        src = np.array(self.src, dtype=np.float64).reshape(-1, 2)
        dst = np.array(self.dst, dtype=np.float64).reshape(-1, 2)
        if src.shape != dst.shape:
            raise ContractError(f"{len(src)} source points vs {len(dst)} destination points")
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
            raise ContractError("non-finite coordinates")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    def __len__(self):
        return len(self.src)

    def subset(self, idx) -> "Correspondences":
        return Correspondences(self.src[idx], self.dst[idx])


def as_homography(h) -> np.ndarray:
    h = np.array(h, dtype=np.float64).reshape(3, 3)
    if abs(h[2, 2]) < DET_EPS:
        raise DegenerateConfigurationError("h33 is zero; cannot normalize")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= DET_EPS:
        raise DegenerateConfigurationError("homography is singular")
    return h


def _hartley(pts):
    c = pts.mean(axis=0)
    mean_dist = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if mean_dist < 1e-12:
        raise DegenerateConfigurationError("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    t = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, t


def estimate_homography(c: Correspondences) -> np.ndarray:
    """Normalized DLT fit, exact for noise-free consistent points."""
    if len(c) < 4:
        raise ContractError(f"need at least 4 correspondences, got {len(c)}")
    src, t_src = _hartley(c.src)
    dst, t_dst = _hartley(c.dst)
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    a = np.empty((2 * len(x), 9))
    a[0::2] = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u], axis=1)
    a[1::2] = np.stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v], axis=1)
    _, sv, vt = np.linalg.svd(a)
    # a well-posed problem leaves exactly one (near-)null direction
    if sv[7] <= 1e-9 * sv[0]:
        raise DegenerateConfigurationError("rank-deficient DLT system (collinear or repeated points)")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    return as_homography(h)


def project(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    q = np.c_[pts, np.ones(len(pts))] @ np.asarray(h).T
    w = q[:, 2:3]
    w = np.where(np.abs(w) < 1e-15, 1e-15, w)
    return q[:, :2] / w


def symmetric_transfer_error(h: np.ndarray, c: Correspondences) -> np.ndarray:
    """Per-pair ``sqrt(|H src - dst|^2 + |H^-1 dst - src|^2)`` in pixels."""
    fwd = project(h, c.src) - c.dst
    bwd = project(np.linalg.inv(h), c.dst) - c.src
    return np.sqrt((fwd**2).sum(axis=1) + (bwd**2).sum(axis=1))


def _collinear(p, tol=1e-6):
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, q = p[i], p[j], p[k]
        area = abs((b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]))
        scale = max(np.ptp(p[:, 0]), np.ptp(p[:, 1]), 1e-12) ** 2
        if area <= tol * scale:
            return True
    return False


def ransac_homography(c: Correspondences, threshold: float = 1.0, iterations: int = 1000,
                      seed=0):
    """Robust homography fit.

    Draws minimal 4-point samples, scores each candidate by the number of
    pairs with symmetric transfer error below ``threshold``, then refits on
    the best consensus set. Ties go to the earliest iteration. The refit is
    iterated until its inlier set stops changing so that every reported
    inlier satisfies the threshold under the returned model.

    Returns ``(H, inlier_mask)``.
    """
    n = len(c)
    if n < 4:
        raise ContractError(f"need at least 4 correspondences, got {n}")
    rng = np.random.default_rng(seed)
    best_mask, best_count = None, 0
    for _ in range(iterations):
        idx = rng.choice(n, size=4, replace=False)
        if _collinear(c.src[idx]) or _collinear(c.dst[idx]):
            continue
        try:
            h = estimate_homography(c.subset(idx))
            mask = symmetric_transfer_error(h, c) < threshold
        except (DegenerateConfigurationError, np.linalg.LinAlgError):
            continue
        count = int(mask.sum())
        if count > best_count:
            best_mask, best_count = mask, count
    if best_mask is None or best_count < 4:
        raise AlignmentError("no homography with at least 4 inliers")

    mask = best_mask
    h = None
    for _ in range(20):
        try:
            cand = estimate_homography(c.subset(mask))
        except DegenerateConfigurationError:
            break
        new_mask = symmetric_transfer_error(cand, c) < threshold
        if new_mask.sum() < 4:
            break
        h = cand
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    if h is None:
        raise AlignmentError("refit on the consensus set failed")
    mask = symmetric_transfer_error(h, c) < threshold
    return h, mask


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``img`` (H, W, C) at float coordinates; zero outside the image."""
    hgt, wid = img.shape[:2]
    inside = (x >= 0) & (x <= wid - 1) & (y >= 0) & (y <= hgt - 1)
    xc = np.clip(x, 0, wid - 1)
    yc = np.clip(y, 0, hgt - 1)
    x0 = np.minimum(np.floor(xc).astype(int), wid - 2 if wid > 1 else 0)
    y0 = np.minimum(np.floor(yc).astype(int), hgt - 2 if hgt > 1 else 0)
    x1 = np.minimum(x0 + 1, wid - 1)
    y1 = np.minimum(y0 + 1, hgt - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.where(inside[..., None], out, 0.0)


def warp_image(img: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Warp (H, W) or (H, W, C) ``img`` by ``h`` (source -> output coordinates).

    Each output pixel ``p`` samples the input at ``H^-1 p`` bilinearly.
    """
    h = as_homography(h)
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    hgt, wid = img.shape[:2]
    yy, xx = np.mgrid[0:hgt, 0:wid]
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
    src = project(np.linalg.inv(h), pts)
    # snap samples that are integral up to round-off so exact shifts stay exact
    snapped = np.round(src)
    src = np.where(np.abs(src - snapped) < 1e-9, snapped, src)
    out = _bilinear(img, src[:, 0].reshape(hgt, wid), src[:, 1].reshape(hgt, wid))
    return out[..., 0] if squeeze else out


def warp_frame(frame: MultiModalFrame, h: np.ndarray, channels: str = "all") -> MultiModalFrame:
    """Warp a frame; ``channels`` selects ``"all"``, ``"rgb"`` or ``"nir"``."""
    stack = frame.stack().astype(np.float64)
    if channels == "all":
        out = warp_image(stack, h)
    elif channels == "nir":
        out = stack.copy()
        out[..., 3:] = warp_image(stack[..., 3:], h)
    elif channels == "rgb":
        out = stack.copy()
        out[..., :3] = warp_image(stack[..., :3], h)
    else:
        raise ContractError(f"unknown channel selection {channels!r}")
    return MultiModalFrame.from_stack(np.clip(out, 0.0, 1.0))


def valid_mask(shape, h: np.ndarray) -> np.ndarray:
    """Pixels of a warped image whose source lies inside the input."""
    return warp_image(np.ones(tuple(shape)), h) > 1.0 - 1e-9


# --- files ------------------------------------------------------------------

def load_correspondences(path) -> Correspondences:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ContractError(f"{path}:{lineno}: expected 'x y x2 y2', got {line!r}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ContractError(f"{path}:{lineno}: non-numeric coordinate") from None
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return Correspondences(arr[:, :2], arr[:, 2:])


def save_correspondences(c: Correspondences, path) -> None:
    lines = [f"{a:.6f} {b:.6f} {x:.6f} {y:.6f}" for (a, b), (x, y) in zip(c.src, c.dst)]
    Path(path).write_text("\n".join(lines) + "\n")


def checkerboard_corners(height: int, width: int, rows: int = 7, cols: int = 9,
                         margin: float = 10.0) -> np.ndarray:
    """Inner-corner grid of a checkerboard filling the image, as (N, 2) pixel coords."""
    xs = np.linspace(margin, width - 1 - margin, cols)
    ys = np.linspace(margin, height - 1 - margin, rows)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)
