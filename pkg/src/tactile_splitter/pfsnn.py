"""Per-pixel photometric fusion network.

Each pixel is mapped independently: the 4 frame channels (R, G, B, NIR) and
the 4 background channels are concatenated, passed through an 8-128-64-3
perceptron with ReLUs, squashed by tanh, projected onto the unit sphere and
finally encoded to [0, 1] as ``0.5 * n + 0.5``.

Everything here is plain numpy: forward pass, exact backward pass, the Adam
optimizer and the training loop.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import ContractError, ENCODED01, MultiModalFrame, NormalMap
from .tensorio import load_tensor, save_tensor
from .textconfig import ConfigError, read_flat, to_bool, to_float, to_int, write_flat

log = logging.getLogger(__name__)

SPHERE_EPS = 1e-12
LAYER_SHAPES = {
    "w1": (8, 128), "b1": (128,),
    "w2": (128, 64), "b2": (64,),
    "w3": (64, 3), "b3": (3,),
}
PARAM_NAMES = tuple(LAYER_SHAPES)
NIR_COLUMNS = (3, 7)
# floor on the per-channel input scale; constant background columns hit it
INPUT_STD_FLOOR = 1e-2


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    relu_before_tanh: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if self.epochs < 0:
            raise ContractError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ContractError("batch_size must be at least 1")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        raw = read_flat(path)
        conv = {
            "learning_rate": to_float, "epochs": to_int, "batch_size": to_int,
            "beta1": to_float, "beta2": to_float, "eps": to_float, "seed": to_int,
            "relu_before_tanh": to_bool,
        }
        kw = {}
        for key, value in raw.items():
            if key not in conv:
                raise ConfigError(f"unknown training key {key!r}", path)
            kw[key] = conv[key](value, key, path=path)
        try:
            return cls(**kw)
        except ContractError as exc:
            raise ConfigError(str(exc), path) from None


@dataclass
class MlpWeights:
    """Parameters of the three affine layers, keyed ``w1, b1, ..., b3``.

    Weight matrices are stored (in, out) so a batch of pixels ``X`` of shape
    (N, 8) maps as ``X @ w1 + b1``. Inputs are first standardized with
    ``input_mean`` / ``input_std`` (identity unless set by training).
    """

    params: dict
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None

    def __post_init__(self):
        if self.input_mean is None:
            self.input_mean = np.zeros(8)
        if self.input_std is None:
            self.input_std = np.ones(8)
        self.input_mean = np.asarray(self.input_mean, dtype=np.float64).reshape(8)
        self.input_std = np.asarray(self.input_std, dtype=np.float64).reshape(8)
        if np.any(self.input_std <= 0):
            raise ContractError("input_std must be positive")
        for name, shape in LAYER_SHAPES.items():
            if name not in self.params:
                raise ContractError(f"missing parameter {name}")
            a = np.asarray(self.params[name])
            if a.shape != shape:
                raise ContractError(f"{name}: expected shape {shape}, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ContractError(f"{name}: non-finite values")

    def __getitem__(self, name):
        return self.params[name]

    def astype(self, dtype) -> "MlpWeights":
        return MlpWeights({k: np.asarray(v, dtype=dtype).copy() for k, v in self.params.items()},
                          self.input_mean, self.input_std)

    def copy(self) -> "MlpWeights":
        return MlpWeights({k: np.array(v, copy=True) for k, v in self.params.items()},
                          self.input_mean.copy(), self.input_std.copy())

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.input_mean) / self.input_std).astype(self.params["w1"].dtype)

    @classmethod
    def zeros(cls, dtype=np.float32) -> "MlpWeights":
        return cls({k: np.zeros(s, dtype=dtype) for k, s in LAYER_SHAPES.items()})


def init_weights(seed=0, dtype=np.float32) -> MlpWeights:
    """Uniform in +-sqrt(1/fan_in) for weights and biases alike."""
    rng = np.random.default_rng(seed)
    return _init_from_rng(rng, dtype)


def _init_from_rng(rng, dtype=np.float32) -> MlpWeights:
    params = {}
    for layer in (1, 2, 3):
        fan_in, fan_out = LAYER_SHAPES[f"w{layer}"]
        bound = math.sqrt(1.0 / fan_in)
        params[f"w{layer}"] = rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)
        params[f"b{layer}"] = rng.uniform(-bound, bound, (fan_out,)).astype(dtype)
    return MlpWeights(params)


# --- forward / backward ----------------------------------------------------

def sphere_normalize(x, eps: float = SPHERE_EPS) -> np.ndarray:
    """``tanh(x) / max(|tanh(x)|, eps)`` along the last axis.

    Where ``|tanh(x)| <= eps`` the result is the zero vector, so every output
    is either a unit vector or exactly zero.
    """
    t = np.tanh(np.asarray(x))
    s = np.linalg.norm(t, axis=-1, keepdims=True)
    return np.where(s > eps, t / np.maximum(s, eps), 0.0)


def pixel_inputs(frame: MultiModalFrame, background: MultiModalFrame,
                 use_nir: bool = True) -> np.ndarray:
    """(H*W, 8) network input: frame (R,G,B,NIR) then background (R,G,B,NIR).

    In RGB-only mode both NIR columns are zeroed.
    """
    if frame.shape != background.shape:
        raise ContractError(f"frame {frame.shape} and background {background.shape} differ")
    x = np.concatenate([frame.stack(), background.stack()], axis=-1).reshape(-1, 8)
    if not use_nir:
        x = x.copy()
        x[:, list(NIR_COLUMNS)] = 0.0
    return x


def _forward_cache(w, x: np.ndarray, relu_before_tanh: bool):
    z1 = x @ w["w1"] + w["b1"]
    a1 = np.maximum(z1, 0)
    z2 = a1 @ w["w2"] + w["b2"]
    a2 = np.maximum(z2, 0)
    z3 = a2 @ w["w3"] + w["b3"]
    pre = np.maximum(z3, 0) if relu_before_tanh else z3
    t = np.tanh(pre)
    s = np.linalg.norm(t, axis=-1, keepdims=True)
    active = s > SPHERE_EPS
    n = np.where(active, t / np.maximum(s, SPHERE_EPS), 0.0)
    out = 0.5 * n + 0.5
    cache = dict(x=x, z1=z1, a1=a1, z2=z2, a2=a2, z3=z3, t=t, s=s, active=active, n=n)
    return out, cache


def forward_pixels(w: MlpWeights, x: np.ndarray, relu_before_tanh: bool = False) -> np.ndarray:
    """Encoded normals (N, 3) for a batch of raw (N, 8) pixel inputs."""
    return _forward_cache(w, w.standardize(x), relu_before_tanh)[0]


def forward(w: MlpWeights, frame: MultiModalFrame, background: MultiModalFrame,
            cfg: TrainConfig | None = None, use_nir: bool = True) -> NormalMap:
    relu = cfg.relu_before_tanh if cfg is not None else False
    h, wd = frame.shape
    out = forward_pixels(w, pixel_inputs(frame, background, use_nir), relu)
    return NormalMap(np.clip(out.reshape(h, wd, 3), 0.0, 1.0), ENCODED01)


def l1_loss(pred: NormalMap, target: NormalMap, mask=None) -> float:
    if pred.encoding != ENCODED01 or target.encoding != ENCODED01:
        raise ContractError("l1_loss compares encoded01 normal maps")
    if pred.shape != target.shape:
        raise ContractError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = np.abs(pred.normals.astype(np.float64) - target.normals.astype(np.float64))
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != pred.shape:
            raise ContractError("mask shape does not match the normal maps")
        if not m.any():
            raise ContractError("empty supervision mask")
        diff = diff[m]
    return float(diff.mean())


def loss_and_grads(w, x: np.ndarray, target: np.ndarray,
                   relu_before_tanh: bool = False):
    """Mean L1 loss over (N, 3) outputs and its exact gradient for every parameter.

    ``x`` is taken as already standardized. ``w`` is an ``MlpWeights`` or a
    plain dict of the same arrays. Kinks
    (ReLU at 0, |.| at 0) take subgradient 0. Pixels caught by the
    sphere-normalization epsilon guard pass no gradient.
    """
    if len(x) == 0:
        raise ContractError("empty batch")
    out, c = _forward_cache(w, x, relu_before_tanh)
    resid = out - target
    loss = np.abs(resid).mean()
    d_out = np.sign(resid) / resid.size
    d_n = 0.5 * d_out
    n, s = c["n"], c["s"]
    d_t = (d_n - n * (n * d_n).sum(axis=-1, keepdims=True)) / np.maximum(s, SPHERE_EPS)
    d_t = np.where(c["active"], d_t, 0.0)
    d_pre = d_t * (1.0 - c["t"] ** 2)
    d_z3 = d_pre * (c["z3"] > 0) if relu_before_tanh else d_pre
    grads = {"w3": c["a2"].T @ d_z3, "b3": d_z3.sum(axis=0)}
    d_z2 = (d_z3 @ w["w3"].T) * (c["z2"] > 0)
    grads["w2"] = c["a1"].T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ w["w2"].T) * (c["z1"] > 0)
    grads["w1"] = c["x"].T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    dtype = w["w1"].dtype
    return float(loss), {k: v.astype(dtype, copy=False) for k, v in grads.items()}


def backward(w: MlpWeights, x: np.ndarray, target: np.ndarray, cfg: TrainConfig | None = None):
    relu = cfg.relu_before_tanh if cfg is not None else False
    return loss_and_grads(w, x, target, relu)[1]


# --- optimizer ---------------------------------------------------------------

@dataclass
class TrainState:
    weights: MlpWeights
    m: dict
    v: dict
    step: int = 0
    history: list = field(default_factory=list)
    initial_train_loss: float | None = None
    initial_val_loss: float | None = None

    @classmethod
    def fresh(cls, weights: MlpWeights) -> "TrainState":
        zeros = {k: np.zeros_like(a) for k, a in weights.params.items()}
        return cls(weights, zeros, {k: z.copy() for k, z in zeros.items()})


def _adam_update(p: dict, m: dict, v: dict, grads: dict, step: int, cfg: TrainConfig) -> None:
    """In-place Adam update of ``p``, ``m``, ``v``; ``step`` is 1-based."""
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    for k in p:
        g = grads[k]
        m[k] *= b1
        m[k] += (1.0 - b1) * g
        v[k] *= b2
        v[k] += (1.0 - b2) * (g * g)
        p[k] -= (cfg.learning_rate * (m[k] / c1) / (np.sqrt(v[k] / c2) + cfg.eps)).astype(p[k].dtype)


def adam_step(state: TrainState, grads: dict, cfg: TrainConfig) -> TrainState:
    """One bias-corrected Adam update; returns a new state and leaves ``state`` intact."""
    if grads.keys() != state.weights.params.keys():
        raise ContractError("gradient keys do not match parameters")
    for k, a in state.weights.params.items():
        if np.shape(grads[k]) != a.shape:
            raise ContractError(f"{k}: gradient shape {np.shape(grads[k])} != parameter shape {a.shape}")
    p = {k: np.array(a, copy=True) for k, a in state.weights.params.items()}
    m = {k: np.array(a, copy=True) for k, a in state.m.items()}
    v = {k: np.array(a, copy=True) for k, a in state.v.items()}
    _adam_update(p, m, v, grads, state.step + 1, cfg)
    return replace(state, weights=MlpWeights(p), m=m, v=v, step=state.step + 1,
                   history=list(state.history))


# --- training ------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    """One supervised image: frame, its background, encoded target normals.

    ``mask`` optionally restricts which pixels are used.
    """

    frame: MultiModalFrame
    background: MultiModalFrame
    target: NormalMap
    mask: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.target.encoding != ENCODED01:
            raise ContractError("training targets must be encoded01 normals")
        if self.frame.shape != self.target.shape or self.background.shape != self.frame.shape:
            raise ContractError("frame, background and target sizes differ")


def _stack_samples(samples, use_nir: bool):
    xs, ys = [], []
    for s in samples:
        x = pixel_inputs(s.frame, s.background, use_nir)
        y = s.target.normals.reshape(-1, 3)
        if s.mask is not None:
            m = np.asarray(s.mask, dtype=bool).reshape(-1)
            x, y = x[m], y[m]
        xs.append(x)
        ys.append(y)
    return (np.concatenate(xs).astype(np.float32), np.concatenate(ys).astype(np.float32))


def dataset_l1(w: MlpWeights, x: np.ndarray, y: np.ndarray, relu_before_tanh: bool,
               chunk: int = 65536) -> float:
    """Mean L1 of the network on raw pixel inputs ``x`` against encoded targets ``y``."""
    total = 0.0
    for i in range(0, len(x), chunk):
        out = forward_pixels(w, x[i:i + chunk], relu_before_tanh)
        total += float(np.abs(out.astype(np.float64) - y[i:i + chunk]).sum())
    return total / (len(x) * 3)


def input_stats(x: np.ndarray):
    """Per-column mean and floored standard deviation of raw pixel inputs.

    Rounded to float32 so that saved and in-memory models agree exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0).astype(np.float32)
    std = np.maximum(x.std(axis=0), INPUT_STD_FLOOR).astype(np.float32)
    return mean.astype(np.float64), std.astype(np.float64)


def train(samples, cfg: TrainConfig, val_samples=(), use_nir: bool = True) -> TrainState:
    """Fit the network on all (masked) pixels of ``samples``.

    Inputs are standardized per channel with statistics of the training
    pixels; the statistics travel with the returned weights. Each epoch
    shuffles the pooled pixels with the seeded generator and takes one Adam
    step per ``batch_size`` pixels. Per-epoch history rows are
    ``(epoch, mean train L1 over the epoch's batches, validation L1)``.
    """
    samples = list(samples)
    if not samples:
        raise ContractError("training needs at least one sample")
    rng = np.random.default_rng(cfg.seed)
    raw_x, y = _stack_samples(samples, use_nir)
    if len(raw_x) == 0:
        raise ContractError("training masks select no pixels")
    mean, std = input_stats(raw_x)
    init = _init_from_rng(rng)
    init.input_mean, init.input_std = mean, std
    state = TrainState.fresh(init)
    x = init.standardize(raw_x)
    val = None
    if val_samples:
        vx, vy = _stack_samples(val_samples, use_nir)
        val = (init.standardize(vx), vy)
    relu = cfg.relu_before_tanh

    def l1(params, xs, ys):
        total = 0.0
        for i in range(0, len(xs), 65536):
            out = _forward_cache(params, xs[i:i + 65536], relu)[0]
            total += float(np.abs(out.astype(np.float64) - ys[i:i + 65536]).sum())
        return total / (len(xs) * 3)

    def val_loss(params):
        return l1(params, *val) if val is not None else float("nan")

    state.initial_train_loss = l1(init.params, x, y)
    state.initial_val_loss = val_loss(init.params)

    # local mutable copies; the loop below is the hot path
    p = {k: a.copy() for k, a in init.params.items()}
    m = {k: np.zeros_like(a) for k, a in p.items()}
    v = {k: np.zeros_like(a) for k, a in p.items()}
    step = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(p, x[idx], y[idx], relu)
            total += loss * len(idx)
            step += 1
            _adam_update(p, m, v, grads, step, cfg)
        row = (epoch, total / len(x), val_loss(p))
        history.append(row)
        log.info("epoch %d: train L1 %.5f, val L1 %.5f", *row)

    state.weights = MlpWeights({k: a.copy() for k, a in p.items()}, mean, std)
    state.m, state.v, state.step = m, v, step
    state.history = history
    return state


def write_loss_csv(state: TrainState, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_l1", "val_l1"])
        w.writerow([0, _f(state.initial_train_loss), _f(state.initial_val_loss)])
        for epoch, tr, va in state.history:
            w.writerow([epoch, _f(tr), _f(va)])


def _f(v):
    return "nan" if v is None or v != v else repr(float(v))


# --- model files -------------------------------------------------------------

@dataclass
class PfsnnModel:
    """Trained weights plus the switches needed to apply them."""

    weights: MlpWeights
    relu_before_tanh: bool = False
    use_nir: bool = True

    @property
    def modality(self) -> str:
        return "rgb+nir" if self.use_nir else "rgb"

    def predict(self, frame: MultiModalFrame, background: MultiModalFrame) -> NormalMap:
        cfg = TrainConfig(relu_before_tanh=self.relu_before_tanh)
        return forward(self.weights, frame, background, cfg, self.use_nir)


def save_model(model: PfsnnModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k in PARAM_NAMES:
        save_tensor(model.weights[k], d / f"{k}.tsr")
    save_tensor(np.stack([model.weights.input_mean, model.weights.input_std]), d / "input_stats.tsr")
    manifest = {"format": "pfsnn-v1", "modality": model.modality,
                "relu_before_tanh": model.relu_before_tanh}
    for k, shape in LAYER_SHAPES.items():
        manifest[f"shape_{k}"] = "x".join(str(s) for s in shape)
    write_flat(manifest, d / "manifest.txt")


def load_model(directory, expect_modality: str | None = None) -> PfsnnModel:
    d = Path(directory)
    manifest_path = d / "manifest.txt"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no PFSNN manifest in {d}")
    man = read_flat(manifest_path)
    if man.get("format") != "pfsnn-v1":
        raise ConfigError(f"not a PFSNN weights directory: format={man.get('format')!r}",
                          manifest_path)
    modality = man.get("modality")
    if modality not in ("rgb", "rgb+nir"):
        raise ConfigError(f"bad modality {modality!r}", manifest_path)
    if expect_modality is not None and modality != expect_modality:
        raise ContractError(
            f"weights were trained for {modality!r} but {expect_modality!r} was requested")
    params = {}
    for k, shape in LAYER_SHAPES.items():
        declared = man.get(f"shape_{k}")
        if declared != "x".join(str(s) for s in shape):
            raise ConfigError(f"{k}: manifest shape {declared!r} != {shape}", manifest_path)
        a = load_tensor(d / f"{k}.tsr")
        if a.shape != shape:
            raise ContractError(f"{k}: stored tensor shape {a.shape} != {shape}")
        params[k] = a
    stats = load_tensor(d / "input_stats.tsr")
    if stats.shape != (2, 8):
        raise ContractError(f"input_stats: expected shape (2, 8), got {stats.shape}")
    relu = to_bool(man.get("relu_before_tanh", "false"), "relu_before_tanh", path=manifest_path)
    weights = MlpWeights(params, stats[0].astype(np.float64), stats[1].astype(np.float64))
    return PfsnnModel(weights, relu, modality == "rgb+nir")
