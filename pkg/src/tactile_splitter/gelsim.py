"""Synthetic gel sensor: press geometry, ground-truth normals and RGB+NIR rendering.

Presses are described by analytic primitives in pixel coordinates with sizes
in millimeters. The renderer is Lambertian: four colored side lights at
azimuths 0, 90, 180 and 270 degrees feed the RGB channels through a mixing
matrix, and a single near-coaxial source lights the NIR channel, so flat gel
is brightest in NIR and steep slopes go dark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .core import ContractError, DepthMap, MultiModalFrame, NormalMap, UNIT, UNIT_TOL
from .textconfig import (
    ConfigError,
    iter_lines,
    parse_pairs,
    read_flat,
    to_float,
    to_floats,
    to_int,
    write_flat,
)

GEL_THICKNESS_MM = 1.5


class InvalidSceneError(ValueError):
    """Scene violates a geometric constraint (depth, support, parameters)."""


@dataclass(frozen=True)
class Sphere:
    radius: float
    press_depth: float
    cx: float
    cy: float

    def contact_radius(self) -> float:
        d = min(self.press_depth, self.radius)
        return math.sqrt(max(self.radius**2 - (self.radius - d) ** 2, 0.0))

    def indentation(self, x, y, pitch):
        r2 = ((x - self.cx) ** 2 + (y - self.cy) ** 2) * pitch**2
        sag = self.radius - np.sqrt(np.maximum(self.radius**2 - r2, 0.0))
        d = self.press_depth - sag
        return np.where(r2 < self.radius**2, np.maximum(d, 0.0), 0.0)

    def bbox(self, pitch):
        a = self.contact_radius() / pitch
        return self.cx - a, self.cy - a, self.cx + a, self.cy + a

    def check(self):
        _positive(radius=self.radius)
        _nonneg(press_depth=self.press_depth)
        if self.press_depth > self.radius:
            raise InvalidSceneError("sphere press_depth exceeds its radius")


def _segment_coords(x, y, x0, y0, x1, y1, pitch):
    """Axial coordinate (mm, clamped to the segment) and distance to the segment (mm)."""
    dx, dy = x1 - x0, y1 - y0
    length2 = dx * dx + dy * dy
    px, py = x - x0, y - y0
    if length2 == 0:
        t = np.zeros_like(px)
    else:
        t = np.clip((px * dx + py * dy) / length2, 0.0, 1.0)
    qx, qy = px - t * dx, py - t * dy
    dist = np.sqrt(qx * qx + qy * qy) * pitch
    axial = t * math.sqrt(length2) * pitch
    return axial, dist


@dataclass(frozen=True)
class Cylinder:
    """A rod (hair, pin) lying on the gel, with rounded ends."""

    radius: float
    press_depth: float
    x0: float
    y0: float
    x1: float
    y1: float

    def indentation(self, x, y, pitch):
        _, v = _segment_coords(x, y, self.x0, self.y0, self.x1, self.y1, pitch)
        sag = self.radius - np.sqrt(np.maximum(self.radius**2 - v * v, 0.0))
        return np.where(v < self.radius, np.maximum(self.press_depth - sag, 0.0), 0.0)

    def half_width(self) -> float:
        d = min(self.press_depth, self.radius)
        return math.sqrt(max(self.radius**2 - (self.radius - d) ** 2, 0.0))

    def bbox(self, pitch):
        a = self.half_width() / pitch
        return (min(self.x0, self.x1) - a, min(self.y0, self.y1) - a,
                max(self.x0, self.x1) + a, max(self.y0, self.y1) + a)

    def check(self):
        _positive(radius=self.radius)
        _nonneg(press_depth=self.press_depth)
        if self.press_depth > self.radius:
            raise InvalidSceneError("cylinder press_depth exceeds its radius")


@dataclass(frozen=True)
class RidgeGrating:
    """Fingerprint-like sinusoidal ridges inside a soft-edged disc.

    Ridges run perpendicular to ``orientation`` (radians, the axis along
    which the profile oscillates). ``extent`` is the disc radius in pixels.
    """

    period: float
    amplitude: float
    orientation: float
    cx: float
    cy: float
    extent: float

    def indentation(self, x, y, pitch):
        u = ((x - self.cx) * math.cos(self.orientation)
             + (y - self.cy) * math.sin(self.orientation)) * pitch
        profile = 0.5 * self.amplitude * (1.0 - np.cos(2.0 * np.pi * u / self.period))
        r = np.hypot(x - self.cx, y - self.cy) / self.extent
        # flat inside 60% of the radius, cosine roll-off to zero at the rim
        s = np.clip((r - 0.6) / 0.4, 0.0, 1.0)
        window = 0.5 * (1.0 + np.cos(np.pi * s))
        return profile * window

    def bbox(self, pitch):
        return (self.cx - self.extent, self.cy - self.extent,
                self.cx + self.extent, self.cy + self.extent)

    def check(self):
        _positive(period=self.period, extent=self.extent)
        _nonneg(amplitude=self.amplitude)


@dataclass(frozen=True)
class ThreadedCylinder:
    """A screw lying on the gel: a rounded rod whose radius is modulated by a thread."""

    radius: float
    thread_pitch: float
    thread_depth: float
    press_depth: float
    x0: float
    y0: float
    x1: float
    y1: float

    def indentation(self, x, y, pitch):
        u, v = _segment_coords(x, y, self.x0, self.y0, self.x1, self.y1, pitch)
        sag = self.radius - np.sqrt(np.maximum(self.radius**2 - v * v, 0.0))
        groove = 0.5 * self.thread_depth * (1.0 - np.cos(2.0 * np.pi * u / self.thread_pitch))
        d = self.press_depth - sag - groove
        return np.where(v < self.radius, np.maximum(d, 0.0), 0.0)

    def bbox(self, pitch):
        d = min(self.press_depth, self.radius)
        a = math.sqrt(max(self.radius**2 - (self.radius - d) ** 2, 0.0)) / pitch
        return (min(self.x0, self.x1) - a, min(self.y0, self.y1) - a,
                max(self.x0, self.x1) + a, max(self.y0, self.y1) + a)

    def check(self):
        _positive(radius=self.radius, thread_pitch=self.thread_pitch)
        _nonneg(thread_depth=self.thread_depth, press_depth=self.press_depth)
        if self.press_depth > self.radius:
            raise InvalidSceneError("thread press_depth exceeds its radius")


Primitive = Union[Sphere, Cylinder, RidgeGrating, ThreadedCylinder]


def _positive(**kw):
    for k, v in kw.items():
        if not (math.isfinite(v) and v > 0):
            raise InvalidSceneError(f"{k} must be positive, got {v}")


def _nonneg(**kw):
    for k, v in kw.items():
        if not (math.isfinite(v) and v >= 0):
            raise InvalidSceneError(f"{k} must be non-negative, got {v}")


@dataclass(frozen=True)
class PressScene:
    primitives: tuple = ()
    height: int = 120
    width: int = 160
    pitch: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))


def validate_scene(scene: PressScene) -> None:
    if scene.height < 3 or scene.width < 3:
        raise InvalidSceneError(f"resolution {scene.height}x{scene.width} too small")
    _positive(pitch=scene.pitch)
    for i, p in enumerate(scene.primitives):
        p.check()
        if getattr(p, "press_depth", 0.0) > GEL_THICKNESS_MM:
            raise InvalidSceneError(
                f"primitive {i}: press depth {p.press_depth} mm exceeds gel thickness "
                f"{GEL_THICKNESS_MM} mm")
        x0, y0, x1, y1 = p.bbox(scene.pitch)
        if x0 < 0 or y0 < 0 or x1 > scene.width - 1 or y1 > scene.height - 1:
            raise InvalidSceneError(f"primitive {i} ({type(p).__name__}) extends outside the image")


def depth_from_scene(scene: PressScene) -> DepthMap:
    """Rasterize the scene: per pixel, the deepest indentation of any primitive."""
    validate_scene(scene)
    y, x = np.mgrid[0:scene.height, 0:scene.width].astype(np.float64)
    depth = np.zeros((scene.height, scene.width))
    for p in scene.primitives:
        depth = np.maximum(depth, p.indentation(x, y, scene.pitch))
    if depth.max() > GEL_THICKNESS_MM:
        raise InvalidSceneError(f"indentation {depth.max():.3f} mm exceeds gel thickness")
    return DepthMap(depth, scene.pitch)


def normals_from_depth(d: DepthMap) -> NormalMap:
    """Unit normals of the depth field, ``normalize(-dd/dx, -dd/dy, 1)``.

    Derivatives are central differences in the interior and one-sided at the
    border.
    """
    depth = d.depth.astype(np.float64)
    gy, gx = np.gradient(depth, d.pitch)
    n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return NormalMap(n, UNIT)


# --- lighting ---------------------------------------------------------------

def side_light_directions(elevation_deg: float = 30.0) -> np.ndarray:
    """Unit directions (towards the lights) at azimuths 0, 90, 180, 270 degrees."""
    el = math.radians(elevation_deg)
    dirs = []
    for az_deg in (0.0, 90.0, 180.0, 270.0):
        az = math.radians(az_deg)
        dirs.append((math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)))
    return np.array(dirs)


# Camera RGB response to the red, green, blue and white side LEDs (columns).
# The side LEDs are dim next to the coaxial NIR ring, so the color channels
# sit near 0.2 on the flat gel while NIR sits near 0.9.
DEFAULT_COLOR_MIX = (
    (0.125, 0.020, 0.005, 0.055),
    (0.025, 0.1125, 0.025, 0.055),
    (0.005, 0.020, 0.125, 0.055),
)


@dataclass(frozen=True)
class LightingConfig:
    """Light sources of the simulated sensor.

    ``rgb_dirs`` is (4, 3): one unit direction per side light.
    ``color_mix`` is (3, 4): coupling of light ``l`` into channel ``c``.
    ``ambient`` holds the (R, G, B, NIR) floor.
    """

    rgb_dirs: np.ndarray = field(default_factory=lambda: side_light_directions(30.0))
    color_mix: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_COLOR_MIX))
    nir_dir: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    nir_intensity: float = 0.8
    ambient: np.ndarray = field(default_factory=lambda: np.full(4, 0.1))
    noise_sigma: float = 0.01

    def __post_init__(self):
        dirs = np.array(self.rgb_dirs, dtype=np.float64).reshape(4, 3)
        mix = np.array(self.color_mix, dtype=np.float64).reshape(3, 4)
        nir_dir = np.array(self.nir_dir, dtype=np.float64).reshape(3)
        amb = np.array(self.ambient, dtype=np.float64).reshape(4)
        for name, v in (("rgb_dirs", dirs), ("nir_dir", nir_dir[None])):
            if not np.allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-6):
                raise ContractError(f"{name} must be unit vectors")
        if (mix < 0).any() or (amb < 0).any() or self.nir_intensity < 0 or self.noise_sigma < 0:
            raise ContractError("color_mix, ambient, intensity and noise must be non-negative")
        for a in (dirs, mix, nir_dir, amb):
            a.setflags(write=False)
        object.__setattr__(self, "rgb_dirs", dirs)
        object.__setattr__(self, "color_mix", mix)
        object.__setattr__(self, "nir_dir", nir_dir)
        object.__setattr__(self, "ambient", amb)
        object.__setattr__(self, "nir_intensity", float(self.nir_intensity))
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))

    @classmethod
    def default(cls, elevation_deg: float = 30.0, **kw) -> "LightingConfig":
        return cls(rgb_dirs=side_light_directions(elevation_deg), **kw)


def _shade(normals: np.ndarray, lighting: LightingConfig) -> np.ndarray:
    n = normals.astype(np.float64)
    lam = np.maximum(n @ lighting.rgb_dirs.T, 0.0)           # (H, W, 4)
    rgb = lighting.ambient[:3] + lam @ lighting.color_mix.T   # (H, W, 3)
    nir = lighting.ambient[3] + lighting.nir_intensity * np.maximum(n @ lighting.nir_dir, 0.0)
    return np.concatenate([rgb, nir[..., None]], axis=-1)


def render_frame(n: NormalMap, lighting: LightingConfig, seed=None) -> MultiModalFrame:
    if n.encoding != UNIT:
        raise ContractError("render_frame needs unit normals")
    norm = np.linalg.norm(n.normals.astype(np.float64), axis=-1)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise ContractError("render_frame needs non-degenerate unit normals")
    img = _shade(n.normals, lighting)
    if lighting.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, lighting.noise_sigma, size=img.shape)
    return MultiModalFrame.from_stack(np.clip(img, 0.0, 1.0))


def background_frame(lighting: LightingConfig, height: int = 120, width: int = 160) -> MultiModalFrame:
    """Noise-free render of the undeformed gel."""
    flat = np.zeros((height, width, 3))
    flat[..., 2] = 1.0
    return MultiModalFrame.from_stack(np.clip(_shade(flat, lighting), 0.0, 1.0))


# --- text formats -----------------------------------------------------------

_PRIMITIVE_KEYS = {
    "sphere": (Sphere, {"radius": "radius", "depth": "press_depth", "cx": "cx", "cy": "cy"}),
    "cylinder": (Cylinder, {"radius": "radius", "depth": "press_depth",
                            "x0": "x0", "y0": "y0", "x1": "x1", "y1": "y1"}),
    "grating": (RidgeGrating, {"period": "period", "amplitude": "amplitude",
                               "angle": "orientation", "cx": "cx", "cy": "cy",
                               "extent": "extent"}),
    "thread": (ThreadedCylinder, {"radius": "radius", "pitch": "thread_pitch",
                                  "thread_depth": "thread_depth", "depth": "press_depth",
                                  "x0": "x0", "y0": "y0", "x1": "x1", "y1": "y1"}),
}


def parse_scene(text: str, path=None) -> PressScene:
    """Parse a scene description.

    One statement per line, e.g.::

        scene height=120 width=160 pitch=0.1
        sphere radius=5 depth=0.5 cx=80 cy=60
        cylinder radius=0.1 depth=0.08 x0=10 y0=20 x1=150 y1=100
        grating period=0.5 amplitude=0.03 angle=0.4 cx=80 cy=60 extent=45
        thread radius=1.5 pitch=0.8 thread_depth=0.15 depth=0.3 x0=20 y0=60 x1=140 y1=60

    Lengths are millimeters, positions are pixels, angles radians. Errors
    carry the offending line number; primitives are checked one by one.
    """
    header = {"height": 120, "width": 160, "pitch": 0.1}
    prims = []
    for lineno, tokens in iter_lines(text):
        kind, args = tokens[0].lower(), parse_pairs(tokens[1:], lineno, path)
        if kind == "scene":
            for key, value in args.items():
                if key in ("height", "width"):
                    header[key] = to_int(value, key, lineno, path)
                elif key == "pitch":
                    header[key] = to_float(value, key, lineno, path)
                else:
                    raise ConfigError(f"unknown scene key {key!r}", path, lineno)
            continue
        if kind not in _PRIMITIVE_KEYS:
            raise ConfigError(f"unknown primitive {kind!r}", path, lineno)
        cls, keymap = _PRIMITIVE_KEYS[kind]
        missing = keymap.keys() - args.keys()
        extra = args.keys() - keymap.keys()
        if missing or extra:
            raise ConfigError(
                f"{kind}: missing {sorted(missing)} / unknown {sorted(extra)}", path, lineno)
        prim = cls(**{keymap[k]: to_float(v, k, lineno, path) for k, v in args.items()})
        try:
            prim.check()
            if getattr(prim, "press_depth", 0.0) > GEL_THICKNESS_MM:
                raise InvalidSceneError(
                    f"press depth {prim.press_depth} mm exceeds gel thickness {GEL_THICKNESS_MM} mm")
        except InvalidSceneError as exc:
            raise ConfigError(str(exc), path, lineno) from None
        prims.append(prim)
    return PressScene(tuple(prims), header["height"], header["width"], header["pitch"])


def load_scene(path) -> PressScene:
    return parse_scene(Path(path).read_text(), path)


def format_scene(scene: PressScene) -> str:
    lines = [f"scene height={scene.height} width={scene.width} pitch={scene.pitch!r}"]
    for p in scene.primitives:
        for kind, (cls, keymap) in _PRIMITIVE_KEYS.items():
            if isinstance(p, cls):
                args = " ".join(f"{k}={getattr(p, attr)!r}" for k, attr in keymap.items())
                lines.append(f"{kind} {args}")
    return "\n".join(lines) + "\n"


def load_lighting(path) -> LightingConfig:
    """Read a lighting file (``key=value`` lines).

    Recognized keys: ``elevation_deg``, ``color_mix`` (12 comma-separated
    values, row-major 3x4), ``nir_intensity``, ``ambient`` (4 values),
    ``noise_sigma``.
    """
    raw = read_flat(path)
    kw = {}
    known = {"elevation_deg", "color_mix", "nir_intensity", "ambient", "noise_sigma"}
    unknown = raw.keys() - known
    if unknown:
        raise ConfigError(f"unknown lighting keys {sorted(unknown)}", path)
    elevation = to_float(raw.get("elevation_deg", "30"), "elevation_deg", path=path)
    if "color_mix" in raw:
        vals = to_floats(raw["color_mix"], "color_mix", path=path)
        if len(vals) != 12:
            raise ConfigError("color_mix needs 12 values", path)
        kw["color_mix"] = np.array(vals).reshape(3, 4)
    if "ambient" in raw:
        vals = to_floats(raw["ambient"], "ambient", path=path)
        if len(vals) != 4:
            raise ConfigError("ambient needs 4 values (R,G,B,NIR)", path)
        kw["ambient"] = np.array(vals)
    for key in ("nir_intensity", "noise_sigma"):
        if key in raw:
            kw[key] = to_float(raw[key], key, path=path)
    try:
        return LightingConfig.default(elevation, **kw)
    except ContractError as exc:
        raise ConfigError(str(exc), path) from None


def save_lighting(lighting: LightingConfig, path) -> None:
    """Write ``lighting`` in the format read by :func:`load_lighting`.

    Only the shared side-light elevation is stored, so non-default
    directions do not round-trip.
    """
    elevation = round(math.degrees(math.asin(float(np.clip(lighting.rgb_dirs[0, 2], -1.0, 1.0)))), 9)
    write_flat({
        "elevation_deg": elevation,
        "color_mix": [float(v) for v in lighting.color_mix.ravel()],
        "nir_intensity": lighting.nir_intensity,
        "ambient": [float(v) for v in lighting.ambient],
        "noise_sigma": lighting.noise_sigma,
    }, path)
