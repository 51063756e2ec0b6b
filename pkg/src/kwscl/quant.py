"""INT8 quantization and integer-only inference for KwsModel.

Weights use per-tensor symmetric quantization (zero point 0). Activation
sites are affine with min/max calibration. After the inputs are quantized
every step runs on integers: int64 accumulators saturated to int32,
fixed-point requantization multipliers, and a 256-entry lookup table for
the sigmoid. The probability site is fixed to scale 1/256, zero point -128.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CalibrationError
from .nn import CONV_CHANNELS, KERNEL, PATH_LATENT, KwsModel, forward_batch, sigmoid
from .wavelet import round_half_away

logger = logging.getLogger(__name__)

QMIN, QMAX = -128, 127
INT32_MIN, INT32_MAX = -(2 ** 31), 2 ** 31 - 1
MIN_SCALE = 1e-6
PROB_SCALE = 1.0 / 256
PROB_ZERO_POINT = -128
MIN_CALIBRATION = 16

LATENT_SITE = "latent"
LOGIT_SITE = "logit"
PROB_SITE = "prob"


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not QMIN <= self.zero_point <= QMAX:
            raise ValueError("zero point outside int8 range")


def affine_params(lo: float, hi: float) -> QuantParams:
    """Affine params covering [min(lo, 0), max(hi, 0)]."""
    lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
    scale = max((hi - lo) / (QMAX - QMIN), MIN_SCALE)
    zp = int(np.clip(round_half_away(QMIN - lo / scale), QMIN, QMAX))
    return QuantParams(scale, zp)


def symmetric_params(w) -> QuantParams:
    return QuantParams(max(float(np.max(np.abs(w))) / QMAX, MIN_SCALE), 0)


def quantize(x, qp: QuantParams) -> np.ndarray:
    q = round_half_away(np.asarray(x, dtype=np.float64) / qp.scale) + qp.zero_point
    return np.clip(q, QMIN, QMAX).astype(np.int8)


def dequantize(q, qp: QuantParams) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) - qp.zero_point) * qp.scale


def fake_quant_weights(params: dict) -> dict:
    """Round weights through the INT8 grid (straight-through in training)."""
    out = {}
    for k, v in params.items():
        out[k] = dequantize(quantize(v, symmetric_params(v)), symmetric_params(v)) if k.endswith("weight") else v
    return out


# ---------------------------------------------------------------------------
# fixed-point requantization


@dataclass(frozen=True)
class FixedMultiplier:
    """real multiplier ~= mantissa * 2**-shift, mantissa in [2**30, 2**31)."""
    mantissa: int
    shift: int

    @classmethod
    def from_real(cls, m: float) -> "FixedMultiplier":
        if m <= 0:
            return cls(0, 0)
        frac, exp = math.frexp(m)  # m = frac * 2**exp, frac in [0.5, 1)
        mant = int(round(frac * (1 << 31)))
        if mant == 1 << 31:
            mant //= 2
            exp += 1
        return cls(mant, 31 - exp)

    @property
    def real(self) -> float:
        return self.mantissa * 2.0 ** -self.shift

    def apply(self, acc) -> np.ndarray:
        """Round-half-away-from-zero of acc * mantissa / 2**shift, on integers."""
        acc = np.clip(np.asarray(acc, dtype=np.int64), INT32_MIN, INT32_MAX)
        if self.mantissa == 0 or self.shift > 62:
            return np.zeros_like(acc)
        if self.shift <= 0:
            big = acc.astype(object) * self.mantissa * (1 << -self.shift)
            return np.clip(big, INT32_MIN, INT32_MAX).astype(np.int64)
        prod = acc * np.int64(self.mantissa)
        mag = (np.abs(prod) + (np.int64(1) << np.int64(self.shift - 1))) >> np.int64(self.shift)
        return np.sign(prod) * mag


# ---------------------------------------------------------------------------
# calibration


def site_names(arch_paths) -> list[str]:
    sites = [f"input.{p}" for p in arch_paths]
    for p in arch_paths:
        sites += [f"{p}.conv{i}" for i in range(1, len(CONV_CHANNELS))]
    return sites + [LATENT_SITE, LOGIT_SITE]


def calibrate(model: KwsModel, mfcc, logmel) -> dict[str, QuantParams]:
    """Min/max calibration of every activation site over a batch of maps."""
    mfcc = np.asarray(mfcc, dtype=np.float64)
    if mfcc.ndim == 2:
        mfcc = mfcc[None]
    if len(mfcc) == 0:
        raise CalibrationError("empty calibration batch")
    if len(mfcc) < MIN_CALIBRATION:
        logger.warning("calibrating on %d samples (< %d)", len(mfcc), MIN_CALIBRATION)
    logits, latent, cache = forward_batch(model, mfcc, logmel)
    ranges = {}
    for p in model.paths:
        x = cache.inputs[p]
        ranges[f"input.{p}"] = (x.min(), x.max())
        for i, a in enumerate(cache.acts[p][:-1], start=1):
            ranges[f"{p}.conv{i}"] = (a.min(), a.max())
    ranges[LATENT_SITE] = (latent.min(), latent.max())
    ranges[LOGIT_SITE] = (logits.min(), logits.max())
    params = {k: affine_params(lo, hi) for k, (lo, hi) in ranges.items()}
    params[PROB_SITE] = QuantParams(PROB_SCALE, PROB_ZERO_POINT)
    return params


def calibrate_pairs(model: KwsModel, pairs) -> dict[str, QuantParams]:
    pairs = list(pairs)
    if not pairs:
        raise CalibrationError("empty calibration batch")
    return calibrate(model, np.stack([p.mfcc for p in pairs]), np.stack([p.logmel for p in pairs]))


# ---------------------------------------------------------------------------
# quantized model


@dataclass
class QuantizedModel:
    arch: str
    paths: tuple[str, ...]
    weights: dict[str, np.ndarray]          # int8
    weight_params: dict[str, QuantParams]
    biases: dict[str, np.ndarray]           # int32, scale = s_in * s_w
    act_params: dict[str, QuantParams]
    multipliers: dict[str, FixedMultiplier] = field(default_factory=dict)
    sigmoid_lut: np.ndarray | None = None   # int8 prob-site value per int8 logit

    @property
    def latent_size(self) -> int:
        return PATH_LATENT * len(self.paths)

    @property
    def latent_params(self) -> QuantParams:
        return self.act_params[LATENT_SITE]


def _layer_io(paths):
    """(layer name, input site, output site) in evaluation order."""
    io = []
    n = len(CONV_CHANNELS)
    for p in paths:
        for i in range(1, n + 1):
            src = f"input.{p}" if i == 1 else f"{p}.conv{i - 1}"
            dst = LATENT_SITE if i == n else f"{p}.conv{i}"
            io.append((f"{p}.conv{i}", src, dst))
    io.append(("dense", LATENT_SITE, LOGIT_SITE))
    return io


def quantize_model(model: KwsModel, act_params: dict[str, QuantParams]) -> QuantizedModel:
    weights, wparams, biases, mults = {}, {}, {}, {}
    for layer, src, dst in _layer_io(model.paths):
        w = model.params[f"{layer}.weight"]
        b = model.params[f"{layer}.bias"]
        wp = symmetric_params(w)
        weights[layer] = quantize(w, wp)
        wparams[layer] = wp
        s_acc = act_params[src].scale * wp.scale
        biases[layer] = np.clip(round_half_away(b / s_acc), INT32_MIN, INT32_MAX).astype(np.int32)
        mults[layer] = FixedMultiplier.from_real(s_acc / act_params[dst].scale)
    logit_qp, prob_qp = act_params[LOGIT_SITE], act_params[PROB_SITE]
    grid = np.arange(QMIN, QMAX + 1)
    lut = quantize(sigmoid(dequantize(grid, logit_qp)), prob_qp)
    return QuantizedModel(model.arch, model.paths, weights, wparams, biases,
                          dict(act_params), mults, lut)


def dequantize_model(qm: QuantizedModel) -> KwsModel:
    params = {}
    for layer, src, _ in _layer_io(qm.paths):
        wp = qm.weight_params[layer]
        params[f"{layer}.weight"] = dequantize(qm.weights[layer], wp)
        params[f"{layer}.bias"] = qm.biases[layer].astype(np.float64) * qm.act_params[src].scale * wp.scale
    return KwsModel(qm.arch, params)


def quantize_from_batch(model: KwsModel, mfcc, logmel) -> QuantizedModel:
    return quantize_model(model, calibrate(model, mfcc, logmel))


# ---------------------------------------------------------------------------
# integer inference


def _int_conv(x_q, zp_in, w_q, b_q, mult: FixedMultiplier, zp_out):
    x = x_q.astype(np.int64) - zp_in
    win = sliding_window_view(x, (KERNEL, KERNEL), axis=(2, 3))
    acc = np.tensordot(win, w_q.astype(np.int64), axes=([1, 4, 5], [1, 2, 3]))
    acc = acc.transpose(0, 3, 1, 2) + b_q.astype(np.int64)[None, :, None, None]
    out = np.clip(mult.apply(acc) + zp_out, QMIN, QMAX)
    return np.maximum(out, zp_out).astype(np.int8)  # ReLU: real 0 sits at zp_out


@dataclass(frozen=True)
class QuantResult:
    cls: int
    confidence_q: int
    latent_q: np.ndarray
    prob_q: int  # 0..255, probability = prob_q / 256


@dataclass
class QuantBatch:
    prob_q: np.ndarray
    confidence_q: np.ndarray
    cls: np.ndarray
    latent_q: np.ndarray

    def __len__(self):
        return len(self.cls)

    def __getitem__(self, i) -> QuantResult:
        return QuantResult(int(self.cls[i]), int(self.confidence_q[i]),
                           self.latent_q[i], int(self.prob_q[i]))


def confidence_from_prob(prob_q):
    """Integer confidence max(p, 1-p) on the /256 grid, capped at 255."""
    u = np.asarray(prob_q, dtype=np.int64)
    return np.minimum(np.maximum(u, 256 - u), 255)


def quantize_inputs(qm: QuantizedModel, mfcc, logmel) -> dict[str, np.ndarray]:
    src = {"mfcc": mfcc, "logmel": logmel}
    out = {}
    for p in qm.paths:
        x = np.asarray(src[p], dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        out[p] = quantize(x, qm.act_params[f"input.{p}"])[:, None]
    return out


def integer_forward(qm: QuantizedModel, inputs_q: dict[str, np.ndarray]) -> QuantBatch:
    """Integer-only path from quantized inputs to class, confidence and latent."""
    flat = []
    for p in qm.paths:
        a = inputs_q[p]
        for i in range(1, len(CONV_CHANNELS) + 1):
            layer = f"{p}.conv{i}"
            src = f"input.{p}" if i == 1 else f"{p}.conv{i - 1}"
            dst = LATENT_SITE if i == len(CONV_CHANNELS) else layer
            a = _int_conv(a, qm.act_params[src].zero_point, qm.weights[layer], qm.biases[layer],
                          qm.multipliers[layer], qm.act_params[dst].zero_point)
        flat.append(a.reshape(a.shape[0], -1))
    latent_q = np.concatenate(flat, axis=1)
    lat_zp = qm.act_params[LATENT_SITE].zero_point
    acc = (latent_q.astype(np.int64) - lat_zp) @ qm.weights["dense"][0].astype(np.int64)
    acc = acc + np.int64(qm.biases["dense"][0])
    logit_zp = qm.act_params[LOGIT_SITE].zero_point
    logit_q = np.clip(qm.multipliers["dense"].apply(acc) + logit_zp, QMIN, QMAX)
    prob_q = qm.sigmoid_lut[logit_q - QMIN].astype(np.int64) - PROB_ZERO_POINT
    cls = (prob_q > 128).astype(np.int64)
    return QuantBatch(prob_q, confidence_from_prob(prob_q), cls, latent_q)


def quantized_inference_batch(qm: QuantizedModel, mfcc, logmel) -> QuantBatch:
    return integer_forward(qm, quantize_inputs(qm, mfcc, logmel))


def quantized_inference(qm: QuantizedModel, pair) -> QuantResult:
    return quantized_inference_batch(qm, pair.mfcc, pair.logmel)[0]


def dequantize_latent(qm: QuantizedModel, latent_q) -> np.ndarray:
    return dequantize(latent_q, qm.latent_params)


def confidence_threshold_q(fraction: float) -> int:
    """Map a confidence fraction onto the integer grid: ceil(f * 255)."""
    return int(math.ceil(round(fraction * 255, 9)))
