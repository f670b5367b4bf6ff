"""Synthetic benchmark: dataset generation, the four-way ablation, misalignment study."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import align, gelsim
from .core import DepthMap, MultiModalFrame, NormalMap
from .lut import LutTable, build_lut, lut_lookup
from .metrics import CONDITIONS, EvalReport, ItemResult, angular_errors, depth_rmse
from .pfsnn import PfsnnModel, Sample, TrainConfig, TrainState, train
from .poisson import fast_poisson, gradients_from_normals
from .tensorio import load_tensor, save_depth_png, save_png, save_tensor
from .textconfig import ConfigError

log = logging.getLogger(__name__)

TRAIN, VAL, TEST = "train", "val", "test"
PITCH_MM = 0.1
HEIGHT, WIDTH = 120, 160


def default_scenes(pitch: float = PITCH_MM, height: int = HEIGHT, width: int = WIDTH):
    """The benchmark objects as ``(name, role, PressScene)``.

    Five sphere presses of varied radius and offset (four train, one
    validation) and four unseen test objects: a screw cap rim, a threaded
    screw, a hair and a fingerprint-like ridge pattern.
    """
    g = gelsim
    spheres = [
        ("sphere_0", TRAIN, g.Sphere(4.0, 0.50, 70, 55)),
        ("sphere_1", TRAIN, g.Sphere(6.0, 0.60, 90, 62)),
        ("sphere_2", TRAIN, g.Sphere(3.0, 0.40, 60, 65)),
        ("sphere_3", TRAIN, g.Sphere(5.0, 0.70, 85, 58)),
        ("sphere_val", VAL, g.Sphere(4.5, 0.55, 78, 60)),
    ]
    tests = [
        ("screw_cap", TEST, g.Cylinder(4.0, 0.35, 40, 30, 120, 90)),
        ("screw", TEST, g.ThreadedCylinder(1.5, 0.8, 0.12, 0.35, 25, 60, 135, 60)),
        ("hair", TEST, g.Cylinder(0.15, 0.10, 15, 20, 145, 100)),
        ("fingerprint", TEST, g.RidgeGrating(0.5, 0.06, 0.3, 80, 60, 45)),
    ]
    return [(name, role, g.PressScene((prim,), height, width, pitch))
            for name, role, prim in spheres + tests]


@dataclass(frozen=True)
class BenchmarkItem:
    name: str
    role: str
    scene: gelsim.PressScene
    depth: DepthMap
    normals: NormalMap
    frame: MultiModalFrame
    background: MultiModalFrame
    mask: np.ndarray | None = None

    def sample(self) -> Sample:
        return Sample(self.frame, self.background, self.normals.as_encoded(), self.mask, self.name)


def generate_benchmark(lighting: gelsim.LightingConfig | None = None, seed: int = 0,
                       scenes=None) -> list[BenchmarkItem]:
    lighting = lighting or gelsim.LightingConfig.default()
    scenes = scenes if scenes is not None else default_scenes()
    items = []
    for i, (name, role, scene) in enumerate(scenes):
        depth = gelsim.depth_from_scene(scene)
        normals = gelsim.normals_from_depth(depth)
        frame = gelsim.render_frame(normals, lighting, seed=[seed, i])
        bg = gelsim.background_frame(lighting, scene.height, scene.width)
        items.append(BenchmarkItem(name, role, scene, depth, normals, frame, bg))
    return items


def split(items):
    train_items = [it for it in items if it.role == TRAIN]
    val_items = [it for it in items if it.role == VAL]
    held_out = [it for it in items if it.role != TRAIN]
    return train_items, val_items, held_out


# --- dataset files -----------------------------------------------------------

def save_item(item: BenchmarkItem, directory, previews: bool = True) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_tensor(item.frame.stack(), d / "frame.tsr")
    save_tensor(item.background.stack(), d / "background.tsr")
    save_tensor(item.normals.normals, d / "normals.tsr")
    save_tensor(item.depth.depth, d / "depth.tsr")
    if item.mask is not None:
        save_tensor(item.mask.astype(np.float32), d / "mask.tsr")
    (d / "scene.txt").write_text(gelsim.format_scene(item.scene))
    if previews:
        save_png(item.frame.rgb, d / "rgb.png")
        save_png(item.frame.nir, d / "nir.png")
        save_png(item.normals.as_encoded().normals, d / "normals.png")
        save_depth_png(item.depth.depth, d / "depth.png")


def save_dataset(items, directory, previews: bool = True) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for it in items:
        save_item(it, d / it.name, previews)
        lines.append(f"{it.name} {it.role}")
    (d / "dataset.txt").write_text("\n".join(lines) + "\n")


def load_item(directory, name: str, role: str) -> BenchmarkItem:
    d = Path(directory)
    scene = gelsim.load_scene(d / "scene.txt")
    depth = DepthMap(load_tensor(d / "depth.tsr"), scene.pitch)
    normals = NormalMap(load_tensor(d / "normals.tsr"))
    frame = MultiModalFrame.from_stack(load_tensor(d / "frame.tsr"))
    bg = MultiModalFrame.from_stack(load_tensor(d / "background.tsr"))
    mask = None
    if (d / "mask.tsr").exists():
        mask = load_tensor(d / "mask.tsr") > 0.5
    return BenchmarkItem(name, role, scene, depth, normals, frame, bg, mask)


def load_dataset(directory) -> list[BenchmarkItem]:
    d = Path(directory)
    index = d / "dataset.txt"
    if not index.is_file():
        raise FileNotFoundError(f"no dataset index at {index}")
    entries = []
    for lineno, line in enumerate(index.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in (TRAIN, VAL, TEST):
            raise ConfigError(f"expected '<name> <train|val|test>', got {line!r}", index, lineno)
        entries.append(parts)
    return [load_item(d / name, name, role) for name, role in entries]


# --- ablation ----------------------------------------------------------------

def train_model(items, use_nir: bool, cfg: TrainConfig | None = None) -> tuple[PfsnnModel, TrainState]:
    cfg = cfg or TrainConfig()
    train_items, val_items, _ = split(items)
    state = train([it.sample() for it in train_items], cfg,
                  [it.sample() for it in val_items], use_nir=use_nir)
    return PfsnnModel(state.weights, cfg.relu_before_tanh, use_nir), state


def calibrate_lut(items, use_nir: bool, bins: int = 32) -> LutTable:
    train_items, _, _ = split(items)
    samples = [(it.frame, it.background, it.normals, it.mask) for it in train_items]
    return build_lut(samples, channels=4 if use_nir else 3, bins=bins)


def evaluate(label: str, predict, items, eval_mask=None) -> EvalReport:
    """Score ``predict(frame, background) -> NormalMap`` on ``items``.

    ``eval_mask`` (shared by all items) restricts every measure, e.g. to
    pixels that survive a warp.
    """
    report = EvalReport(label)
    for it in items:
        pred = predict(it.frame, it.background)
        err = angular_errors(pred, it.normals)
        full = np.ones(err.shape, dtype=bool) if eval_mask is None else eval_mask
        contact = full & (it.depth.depth > 0)
        depth = fast_poisson(gradients_from_normals(pred.as_unit(), it.depth.pitch))
        report.items.append(ItemResult(
            it.name,
            float(err[full].mean()),
            float(err[contact].mean()) if contact.any() else float("nan"),
            depth_rmse(depth, it.depth, full),
        ))
    return report


@dataclass
class AblationResult:
    reports: list
    models: dict = field(default_factory=dict)
    luts: dict = field(default_factory=dict)
    states: dict = field(default_factory=dict)
    seconds: float = 0.0

    def mae(self, label: str) -> float:
        return next(r.mae for r in self.reports if r.label == label)


def run_ablation(items, cfg: TrainConfig | None = None, bins: int = 32,
                 eval_mask=None) -> AblationResult:
    """LUT and PFSNN, each without and with NIR, scored on the held-out items."""
    t0 = time.perf_counter()
    cfg = cfg or TrainConfig()
    _, _, held_out = split(items)
    result = AblationResult([])
    for use_nir in (False, True):
        label = "LUT w. NIR" if use_nir else "LUT w/o NIR"
        table = calibrate_lut(items, use_nir, bins)
        result.luts[label] = table
        result.reports.append(evaluate(
            label, lambda f, b, t=table: lut_lookup(t, f, b), held_out, eval_mask))
    for use_nir in (False, True):
        label = "PFSNN w. NIR" if use_nir else "PFSNN w/o NIR"
        model, state = train_model(items, use_nir, cfg)
        result.models[label] = model
        result.states[label] = state
        result.reports.append(evaluate(label, model.predict, held_out, eval_mask))
    order = {c: i for i, c in enumerate(CONDITIONS)}
    result.reports.sort(key=lambda r: order[r.label])
    result.seconds = time.perf_counter() - t0
    return result


# --- misalignment study ----------------------------------------------------------

def misalignment_homography(shift_px: float = 3.0, angle_deg: float = 0.3,
                            height: int = HEIGHT, width: int = WIDTH) -> np.ndarray:
    """Small rigid motion of the NIR image plane about the image center.

    The translation has length ``shift_px``.
    """
    a = np.radians(angle_deg)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    rot = np.array([[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]])
    to_c = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    from_c = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
    t = shift_px / np.sqrt(2.0)
    shift = np.array([[1.0, 0.0, t], [0.0, 1.0, -t], [0.0, 0.0, 1.0]])
    return shift @ from_c @ rot @ to_c


def misalign(items, h_nir: np.ndarray) -> list[BenchmarkItem]:
    """Simulate an NIR camera displaced by ``h_nir`` (RGB pixel -> NIR pixel)."""
    return [replace(it,
                    frame=align.warp_frame(it.frame, h_nir, channels="nir"),
                    background=align.warp_frame(it.background, h_nir, channels="nir"))
            for it in items]


def corner_correspondences(h_nir: np.ndarray, height: int = HEIGHT, width: int = WIDTH,
                           noise_px: float = 0.1, outlier_fraction: float = 0.1,
                           seed: int = 0) -> align.Correspondences:
    """Checkerboard corners seen by both cameras, with detection noise and a few false matches."""
    rng = np.random.default_rng(seed)
    rgb_pts = align.checkerboard_corners(height, width)
    nir_pts = align.project(h_nir, rgb_pts) + rng.normal(0.0, noise_px, rgb_pts.shape)
    bad = rng.random(len(rgb_pts)) < outlier_fraction
    nir_pts[bad] = rng.uniform([0, 0], [width - 1, height - 1], (int(bad.sum()), 2))
    return align.Correspondences(rgb_pts, nir_pts)


def realign(items, corr: align.Correspondences, threshold: float = 1.0, iterations: int = 1000,
            seed: int = 0, coverage: np.ndarray | None = None):
    """Estimate the RGB->NIR mapping from corners and warp the NIR channels back.

    ``coverage`` marks NIR pixels that hold real data (the simulated
    misalignment zero-fills what the displaced camera never saw). Returns
    ``(items, H_rgb_to_nir, valid)``; ``valid`` marks RGB pixels whose
    realigned NIR sample is backed by data, and is attached to every item
    as its training/calibration mask.
    """
    h, _ = align.ransac_homography(corr, threshold, iterations, seed)
    back = np.linalg.inv(h)
    shape = items[0].frame.shape
    if coverage is None:
        coverage = np.ones(shape)
    valid = align.warp_image(np.asarray(coverage, dtype=np.float64), back) > 1.0 - 1e-9
    out = [replace(it,
                   frame=align.warp_frame(it.frame, back, channels="nir"),
                   background=align.warp_frame(it.background, back, channels="nir"),
                   mask=valid)
           for it in items]
    return out, h, valid


# --- periodic structure ----------------------------------------------------------

def periodic_axis(item: BenchmarkItem):
    """Sampling line across the periodic part of a thread or grating item.

    Returns ``(center_xy, unit_axis, half_length_px, period_px)``, or None
    for items without a periodic primitive.
    """
    pitch = item.scene.pitch
    for p in item.scene.primitives:
        if isinstance(p, gelsim.ThreadedCylinder):
            axis = np.array([p.x1 - p.x0, p.y1 - p.y0], dtype=np.float64)
            length = float(np.linalg.norm(axis))
            center = np.array([(p.x0 + p.x1) / 2.0, (p.y0 + p.y1) / 2.0])
            # stay clear of the rounded ends
            return center, axis / length, 0.4 * length, p.thread_pitch / pitch
        if isinstance(p, gelsim.RidgeGrating):
            axis = np.array([np.cos(p.orientation), np.sin(p.orientation)])
            # the flat part of the window
            return np.array([p.cx, p.cy], dtype=np.float64), axis, 0.6 * p.extent, p.period / pitch
    return None


def axis_profile(depth: np.ndarray, center, axis, half_length: float, step: float = 0.25):
    """Bilinear samples of ``depth`` every ``step`` pixels along a line."""
    from scipy.ndimage import map_coordinates

    s = np.arange(-half_length, half_length + 1e-9, step)
    pts = np.asarray(center)[:, None] + np.asarray(axis)[:, None] * s[None, :]
    return map_coordinates(np.asarray(depth, dtype=np.float64), [pts[1], pts[0]], order=1)
