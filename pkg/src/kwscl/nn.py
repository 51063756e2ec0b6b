"""Tiny CNN keyword classifier written directly against numpy.

Each feature path is three valid 5x5 convolutions with ReLU, channel
widths 5, 2, 5, giving the shape chain 20x16 -> 16x12 -> 12x8 -> 8x4.
The dual model concatenates the flattened MFCC and LogMel paths (MFCC
first) into a 320-long latent vector feeding one sigmoid unit.

Parameters are held in float64 for exact gradient checks; checkpoints
store them as float32.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .features import MAP_SHAPE, FeaturePair

logger = logging.getLogger(__name__)

KERNEL = 5
CONV_CHANNELS = (5, 2, 5)
PATH_LATENT = CONV_CHANNELS[-1] * (MAP_SHAPE[0] - 3 * (KERNEL - 1)) * (MAP_SHAPE[1] - 3 * (KERNEL - 1))
ARCH_PATHS = {"dual": ("mfcc", "logmel"), "single": ("mfcc",)}


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = KERNEL
    relu: bool = True


def path_specs() -> list[ConvSpec]:
    chans = (1,) + CONV_CHANNELS
    return [ConvSpec(chans[i], chans[i + 1]) for i in range(len(CONV_CHANNELS))]


@dataclass
class KwsModel:
    arch: str
    params: dict[str, np.ndarray]

    @property
    def paths(self) -> tuple[str, ...]:
        return ARCH_PATHS[self.arch]

    @property
    def latent_size(self) -> int:
        return PATH_LATENT * len(self.paths)

    def copy(self) -> "KwsModel":
        return KwsModel(self.arch, {k: v.copy() for k, v in self.params.items()})


def param_names(arch: str) -> list[str]:
    names = []
    for p in ARCH_PATHS[arch]:
        for i in range(1, len(CONV_CHANNELS) + 1):
            names += [f"{p}.conv{i}.weight", f"{p}.conv{i}.bias"]
    return names + ["dense.weight", "dense.bias"]


def param_shapes(arch: str) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for p in ARCH_PATHS[arch]:
        for i, spec in enumerate(path_specs(), start=1):
            shapes[f"{p}.conv{i}.weight"] = (spec.out_channels, spec.in_channels, KERNEL, KERNEL)
            shapes[f"{p}.conv{i}.bias"] = (spec.out_channels,)
    latent = PATH_LATENT * len(ARCH_PATHS[arch])
    shapes["dense.weight"] = (1, latent)
    shapes["dense.bias"] = (1,)
    return shapes


def init_model(arch: str = "dual", seed: int = 0) -> KwsModel:
    """Glorot-uniform weights, zero biases."""
    if arch not in ARCH_PATHS:
        raise ValueError(f"unknown architecture {arch!r}")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(arch).items():
        if name.endswith("bias"):
            params[name] = np.zeros(shape)
            continue
        if len(shape) == 4:
            fan_in = shape[1] * KERNEL * KERNEL
            fan_out = shape[0] * KERNEL * KERNEL
        else:
            fan_in, fan_out = shape[1], shape[0]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    return KwsModel(arch, params)


def param_count(model: KwsModel) -> int:
    return int(sum(v.size for v in model.params.values()))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def bce_with_logits(z, y):
    """Mean binary cross-entropy computed from logits."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


# ---------------------------------------------------------------------------
# convolution


def _windows(x):
    return sliding_window_view(x, (KERNEL, KERNEL), axis=(2, 3))  # (B, C, Ho, Wo, k, k)


def conv2d_forward(x, weight, bias, relu: bool = True):
    """Valid cross-correlation. ``x`` is (C, H, W) or (B, C, H, W)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"input {x.shape} does not match kernel {weight.shape}")
    if x.shape[2] < KERNEL or x.shape[3] < KERNEL:
        raise ShapeError("input smaller than the kernel")
    out = np.tensordot(_windows(x), weight, axes=([1, 4, 5], [1, 2, 3]))  # (B, Ho, Wo, O)
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    if relu:
        out = np.maximum(out, 0.0)
    return out[0] if squeeze else out


def conv2d_backward(x, weight, grad_pre):
    """Gradients w.r.t. input, weight and bias given dL/d(pre-activation)."""
    dw = np.tensordot(grad_pre, _windows(x), axes=([0, 2, 3], [0, 2, 3]))
    db = grad_pre.sum(axis=(0, 2, 3))
    dx = np.zeros_like(x)
    ho, wo = grad_pre.shape[2], grad_pre.shape[3]
    for i in range(KERNEL):
        for j in range(KERNEL):
            dx[:, :, i:i + ho, j:j + wo] += np.tensordot(grad_pre, weight[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
    return dx, dw, db


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardCache:
    inputs: dict[str, np.ndarray] = field(default_factory=dict)
    acts: dict[str, list[np.ndarray]] = field(default_factory=dict)
    latent: np.ndarray | None = None
    logits: np.ndarray | None = None


def _stack_inputs(model: KwsModel, mfcc, logmel) -> dict[str, np.ndarray]:
    src = {"mfcc": mfcc, "logmel": logmel}
    out = {}
    for p in model.paths:
        x = np.asarray(src[p], dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != MAP_SHAPE:
            raise ShapeError(f"{p} input must be (B, 20, 16), got {x.shape}")
        out[p] = x[:, None]  # channel axis
    return out


def forward_batch(model: KwsModel, mfcc, logmel, params: dict | None = None):
    """Return (logits (B,), latent (B, L), cache)."""
    params = params if params is not None else model.params
    cache = ForwardCache(inputs=_stack_inputs(model, mfcc, logmel))
    flat = []
    for p in model.paths:
        a = cache.inputs[p]
        acts = []
        for i in range(1, len(CONV_CHANNELS) + 1):
            a = conv2d_forward(a, params[f"{p}.conv{i}.weight"], params[f"{p}.conv{i}.bias"])
            acts.append(a)
        cache.acts[p] = acts
        flat.append(a.reshape(a.shape[0], -1))
    cache.latent = np.concatenate(flat, axis=1)
    cache.logits = cache.latent @ params["dense.weight"][0] + params["dense.bias"][0]
    return cache.logits, cache.latent, cache


def forward(model: KwsModel, pair: FeaturePair) -> tuple[float, np.ndarray]:
    logits, latent, _ = forward_batch(model, pair.mfcc, pair.logmel)
    return float(sigmoid(logits[0])), latent[0]


def predict_proba(model: KwsModel, mfcc, logmel, chunk: int = 512) -> np.ndarray:
    mfcc = np.asarray(mfcc)
    out = []
    for s in range(0, len(mfcc), chunk):
        z, _, _ = forward_batch(model, mfcc[s:s + chunk], np.asarray(logmel)[s:s + chunk])
        out.append(sigmoid(z))
    return np.concatenate(out) if out else np.zeros(0)


def backward_batch(model: KwsModel, cache: ForwardCache, targets, params: dict | None = None):
    """Gradients of the mean BCE over the batch held in ``cache``."""
    params = params if params is not None else model.params
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    n = len(y)
    dz = (sigmoid(cache.logits) - y) / n
    grads = {
        "dense.weight": (dz @ cache.latent)[None, :],
        "dense.bias": np.array([dz.sum()]),
    }
    dlatent = np.outer(dz, params["dense.weight"][0])
    for k, p in enumerate(model.paths):
        acts = cache.acts[p]
        g = dlatent[:, k * PATH_LATENT:(k + 1) * PATH_LATENT].reshape(acts[-1].shape)
        for i in range(len(CONV_CHANNELS), 0, -1):
            g = g * (acts[i - 1] > 0)
            x_in = acts[i - 2] if i > 1 else cache.inputs[p]
            dx, dw, db = conv2d_backward(x_in, params[f"{p}.conv{i}.weight"], g)
            grads[f"{p}.conv{i}.weight"] = dw
            grads[f"{p}.conv{i}.bias"] = db
            g = dx
    return grads


def loss_and_grads(model: KwsModel, mfcc, logmel, targets, params: dict | None = None):
    logits, _, cache = forward_batch(model, mfcc, logmel, params)
    return bce_with_logits(logits, targets), backward_batch(model, cache, targets, params)


def backward(model: KwsModel, pair: FeaturePair, target: int) -> dict[str, np.ndarray]:
    _, grads = loss_and_grads(model, pair.mfcc, pair.logmel, [target])
    return grads


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs_per_update: int = 5
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "sgd"  # "sgd" or "adam"
    fake_quant: bool = False


class _Adam:
    def __init__(self, params, b1=0.9, b2=0.999, eps=1e-7):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.b1, self.b2, self.eps, self.t = b1, b2, eps, 0

    def step(self, params, grads, lr):
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mh = self.m[k] / (1 - self.b1 ** self.t)
            vh = self.v[k] / (1 - self.b2 ** self.t)
            params[k] -= lr * mh / (np.sqrt(vh) + self.eps)


def pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = list(pairs)
    mfcc = np.stack([p.mfcc for p in pairs])
    logmel = np.stack([p.logmel for p in pairs])
    labels = np.array([-1 if p.label is None else p.label for p in pairs])
    return mfcc, logmel, labels


def train_arrays(model: KwsModel, mfcc, logmel, targets, cfg: TrainConfig):
    """Mini-batch training on stacked arrays; returns (new model, mean loss per epoch)."""
    targets = np.asarray(targets, dtype=np.float64)
    if len(targets) == 0:
        raise ValueError("empty training batch")
    if len(np.unique(targets)) < 2:
        logger.warning("training batch contains a single class")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = _Adam(model.params) if cfg.optimizer == "adam" else None
    if cfg.optimizer not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
    if cfg.fake_quant:
        from .quant import fake_quant_weights
    n = len(targets)
    losses = []
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            params = fake_quant_weights(model.params) if cfg.fake_quant else None
            loss, grads = loss_and_grads(model, mfcc[idx], logmel[idx], targets[idx], params)
            total += loss * len(idx)
            if cfg.learning_rate == 0:
                continue
            if opt is None:
                for k, g in grads.items():
                    model.params[k] -= cfg.learning_rate * g
            else:
                opt.step(model.params, grads, cfg.learning_rate)
        losses.append(total / n)
    return model, losses


def train(model: KwsModel, batch, cfg: TrainConfig):
    """Train on a list of labelled FeaturePairs."""
    batch = list(batch)
    if not batch:
        raise ValueError("empty training batch")
    mfcc, logmel, labels = pairs_to_arrays(batch)
    if np.any(labels < 0):
        raise ValueError("every training pair needs a label")
    return train_arrays(model, mfcc, logmel, labels, cfg)


def accuracy(model: KwsModel, mfcc, logmel, labels) -> float:
    p = predict_proba(model, mfcc, logmel)
    return float(np.mean((p > 0.5).astype(int) == np.asarray(labels)))


def clone(model: KwsModel) -> KwsModel:
    return copy.deepcopy(model)
