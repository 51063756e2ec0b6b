"""Effective-sample selection and the continual-learning update loop.

A runtime input becomes an effective sample when the integer confidence
clears the threshold and its dequantized latent lies within
mu + n*sigma (MAE) of its predicted class prototype. The confidence test
runs first; distance is only evaluated for confident inputs.

An update trains the dequantized model on rehearsal features, their
noise-augmented copies and the pseudo-labelled effective samples, then
requantizes and rebuilds the class artifacts from the same mini-batch.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import NO, YES
from .audio import AudioClip
from .errors import RehearsalError
from .features import FeaturePair, mfcc_from_logmel_map
from .nn import KwsModel, TrainConfig, train_arrays
from .pipeline import FrontEnd, process_clips, stack_clips
from .prototypes import (ClassArtifacts, DEFAULT_N_SIGMA, OpCounter, compute_artifacts,
                         distance_ops, mae_distance)
from .quant import (QuantBatch, QuantResult, QuantizedModel, calibrate, dequantize_latent,
                    dequantize_model, quantize_model, quantized_inference_batch)

logger = logging.getLogger(__name__)

REJECT_CONFIDENCE = "low_confidence"
REJECT_DISTANCE = "far_from_prototype"


@dataclass(frozen=True)
class CLConfig:
    confidence_threshold_q: int = 217
    n_sigma: float = DEFAULT_N_SIGMA
    interval: int = 1024
    rehearsal_per_class: int = 64
    epochs_per_update: int = 5
    alpha: float = 0.5
    learning_rate: float = 0.001
    batch_size: int = 32
    optimizer: str = "sgd"
    effective_cap: int = 256
    retrain: bool = True
    wavelet: bool = True
    spectral: bool = True
    recalibrate: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.confidence_threshold_q <= 255:
            raise ValueError("confidence threshold must be on the 0..255 grid")
        for name in ("interval", "rehearsal_per_class", "epochs_per_update", "effective_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_sigma < 0:
            raise ValueError("n_sigma must be non-negative")

    @property
    def front_end(self) -> FrontEnd:
        return FrontEnd(self.wavelet, self.spectral, self.alpha)

    def train_config(self, update_index: int = 0) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs_per_update, self.batch_size,
                           self.seed + update_index, self.optimizer)


@dataclass(frozen=True)
class EffectiveSample:
    pair: FeaturePair
    pseudo_label: int
    confidence_q: int
    distance: float


@dataclass(frozen=True)
class Rejection:
    reason: str
    confidence_q: int
    distance: float | None = None


# ---------------------------------------------------------------------------
# rehearsal buffer


@dataclass(frozen=True)
class RehearsalBuffer:
    """Clean training features kept before feature-domain denoising.

    Arrays are read-only; updates never touch them.
    """
    mfcc: np.ndarray
    logmel: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        for name in ("mfcc", "logmel", "labels"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.mfcc) == len(self.logmel) == len(self.labels)):
            raise ValueError("rehearsal arrays differ in length")

    def __len__(self):
        return len(self.labels)

    @property
    def per_class(self) -> dict[int, int]:
        return {c: int(np.count_nonzero(self.labels == c)) for c in (NO, YES)}

    def pairs(self) -> list[FeaturePair]:
        return [FeaturePair(m, l, int(y), "rehearsal")
                for m, l, y in zip(self.mfcc, self.logmel, self.labels)]

    @classmethod
    def select(cls, mfcc, logmel, labels, per_class: int, seed: int = 0) -> "RehearsalBuffer":
        """Balanced random subset of raw training features."""
        rng = np.random.default_rng(seed)
        labels = np.asarray(labels)
        idx = []
        for c in (NO, YES):
            members = np.flatnonzero(labels == c)
            if len(members) < per_class:
                raise RehearsalError(f"class {c} has only {len(members)} samples")
            idx.extend(np.sort(rng.choice(members, per_class, replace=False)))
        idx = np.array(idx)
        # stored at float32 precision so snapshots round-trip exactly
        as32 = lambda a: np.asarray(a)[idx].astype(np.float32).astype(np.float64)
        return cls(as32(mfcc), as32(logmel), labels[idx])


# ---------------------------------------------------------------------------
# effective-sample filter


def decide(result: QuantResult, qm: QuantizedModel, artifacts: dict[int, ClassArtifacts],
           threshold_q: int, counter: OpCounter | None = distance_ops):
    """Accept/reject one quantized inference result."""
    if result.confidence_q < threshold_q:
        return Rejection(REJECT_CONFIDENCE, result.confidence_q)
    art = artifacts[result.cls]
    dist = mae_distance(dequantize_latent(qm, result.latent_q), art.prototype, counter)
    if dist <= art.threshold:
        return dist
    return Rejection(REJECT_DISTANCE, result.confidence_q, dist)


def filter_effective(qm: QuantizedModel, artifacts: dict[int, ClassArtifacts], pair: FeaturePair,
                     cfg: CLConfig, counter: OpCounter | None = distance_ops):
    """Return an EffectiveSample or a Rejection for one denoised pair."""
    res = quantized_inference_batch(qm, pair.mfcc, pair.logmel)[0]
    out = decide(res, qm, artifacts, cfg.confidence_threshold_q, counter)
    if isinstance(out, Rejection):
        return out
    return EffectiveSample(pair.with_label(res.cls), res.cls, res.confidence_q, out)


# ---------------------------------------------------------------------------
# augmentation


def noise_logmel(noise_clips, fe: FrontEnd) -> np.ndarray:
    """Raw LogMel maps of one or more noise clips, shape (k, 20, 16)."""
    if isinstance(noise_clips, AudioClip):
        noise_clips = [noise_clips]
    _, logmel = fe.raw_features(stack_clips(noise_clips))
    return logmel


def mix_noise_features(logmel_clean, logmel_noise):
    """Add noise power to clean maps in the mel-power domain.

    Returns raw (mfcc, logmel) with the MFCC recomputed from the mixed LogMel.
    Noise maps are cycled when there are fewer of them than clean maps.
    """
    clean = np.asarray(logmel_clean, dtype=np.float64)
    noise = np.asarray(logmel_noise, dtype=np.float64)
    if noise.ndim == 2:
        noise = noise[None]
    if clean.ndim == 2:
        mixed = np.logaddexp(clean, noise[0])
    else:
        mixed = np.logaddexp(clean, noise[np.arange(len(clean)) % len(noise)])
    return mfcc_from_logmel_map(mixed), mixed


def augment_rehearsal(buffer: RehearsalBuffer, noise_clips, cfg: CLConfig) -> list[FeaturePair]:
    fe = cfg.front_end
    mfcc, logmel = mix_noise_features(buffer.logmel, noise_logmel(noise_clips, fe))
    return [FeaturePair(m, l, int(y), "augmented")
            for m, l, y in zip(fe.denoise(mfcc), fe.denoise(logmel), buffer.labels)]


# ---------------------------------------------------------------------------
# Algorithm II


@dataclass
class CLState:
    qm: QuantizedModel
    artifacts: dict[int, ClassArtifacts]
    rehearsal: RehearsalBuffer
    model: KwsModel | None = None
    effective: list[EffectiveSample] = field(default_factory=list)
    updates: int = 0


def minibatch(state: CLState, noise_clips, effective, cfg: CLConfig):
    """Stack rehearsal, augmented rehearsal and effective samples (all denoised)."""
    fe = cfg.front_end
    parts_m = [fe.denoise(state.rehearsal.mfcc)]
    parts_l = [fe.denoise(state.rehearsal.logmel)]
    parts_y = [state.rehearsal.labels]
    if noise_clips is not None and (not isinstance(noise_clips, list) or noise_clips):
        aug = augment_rehearsal(state.rehearsal, noise_clips, cfg)
        parts_m.append(np.stack([p.mfcc for p in aug]))
        parts_l.append(np.stack([p.logmel for p in aug]))
        parts_y.append(np.array([p.label for p in aug]))
    if effective:
        parts_m.append(np.stack([e.pair.mfcc for e in effective]))
        parts_l.append(np.stack([e.pair.logmel for e in effective]))
        parts_y.append(np.array([e.pseudo_label for e in effective]))
    return np.concatenate(parts_m), np.concatenate(parts_l), np.concatenate(parts_y)


def artifacts_for(qm: QuantizedModel, mfcc, logmel, labels, n_sigma: float):
    res = quantized_inference_batch(qm, mfcc, logmel)
    return compute_artifacts(dequantize_latent(qm, res.latent_q), labels, n_sigma)


def continual_update(state: CLState, effective, noise_clips, cfg: CLConfig) -> CLState:
    if len(state.rehearsal) == 0:
        raise RehearsalError("refusing to update without rehearsal data")
    effective = list(effective)
    mfcc, logmel, labels = minibatch(state, noise_clips, effective, cfg)
    model = dequantize_model(state.qm)
    if cfg.retrain:
        model, losses = train_arrays(model, mfcc, logmel, labels, cfg.train_config(state.updates))
        logger.debug("update %d: loss %.4f -> %.4f", state.updates, losses[0], losses[-1])
    act = calibrate(model, mfcc, logmel) if cfg.recalibrate else state.qm.act_params
    qm = quantize_model(model, act)
    artifacts = artifacts_for(qm, mfcc, logmel, labels, cfg.n_sigma)
    return CLState(qm, artifacts, state.rehearsal, model, [], state.updates + 1)


def initial_state(model: KwsModel, rehearsal: RehearsalBuffer, cfg: CLConfig,
                  qm: QuantizedModel | None = None) -> CLState:
    """Deployed state before any adaptation: artifacts from the rehearsal buffer."""
    fe = cfg.front_end
    mfcc, logmel = fe.denoise(rehearsal.mfcc), fe.denoise(rehearsal.logmel)
    if qm is None:
        qm = quantize_model(model, calibrate(model, mfcc, logmel))
    return CLState(qm, artifacts_for(qm, mfcc, logmel, rehearsal.labels, cfg.n_sigma),
                   rehearsal, model)


# ---------------------------------------------------------------------------
# deployment loop


@dataclass
class IntervalMetrics:
    interval_index: int
    n_inputs: int
    n_keywords: int
    n_correct: int
    n_accepted: int
    n_rejected_conf: int
    n_rejected_dist: int
    mean_confidence: float
    confidence_hist: list[int]
    n_accepted_noise: int = 0

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_keywords if self.n_keywords else float("nan")


HIST_EDGES = np.linspace(128, 256, 9)


def evaluate_interval(state: CLState, mfcc, logmel, labels, cfg: CLConfig, index: int,
                      counter: OpCounter | None = distance_ops):
    """Classify one interval with the frozen model; returns (metrics, accepted samples)."""
    res: QuantBatch = quantized_inference_batch(state.qm, mfcc, logmel)
    accepted = []
    n_conf = n_dist = n_noise = 0
    for i in range(len(res)):
        out = decide(res[i], state.qm, state.artifacts, cfg.confidence_threshold_q, counter)
        if isinstance(out, Rejection):
            if out.reason == REJECT_CONFIDENCE:
                n_conf += 1
            else:
                n_dist += 1
            continue
        cls = int(res.cls[i])
        accepted.append(EffectiveSample(FeaturePair(mfcc[i], logmel[i], cls, "runtime"),
                                        cls, int(res.confidence_q[i]), out))
        n_noise += int(labels[i] < 0)
    kw = labels >= 0
    hist, _ = np.histogram(res.confidence_q, bins=HIST_EDGES)
    metrics = IntervalMetrics(
        interval_index=index,
        n_inputs=len(res),
        n_keywords=int(kw.sum()),
        n_correct=int(np.sum(res.cls[kw] == labels[kw])),
        n_accepted=len(accepted),
        n_rejected_conf=n_conf,
        n_rejected_dist=n_dist,
        mean_confidence=float(np.mean(res.confidence_q) / 256.0) if len(res) else float("nan"),
        confidence_hist=hist.tolist(),
        n_accepted_noise=n_noise,
    )
    return metrics, accepted


def run_deployment(state: CLState, stream: list[AudioClip], cfg: CLConfig, max_noise_clips: int = 8,
                   on_interval=None, on_update=None, start_interval: int = 0, adapt: bool = True):
    """Process a labelled stream; update the model after every ``cfg.interval`` inputs.

    Noise-only items of an interval supply the clips for rehearsal
    augmentation. A trailing partial interval is evaluated but triggers no
    update. ``on_interval(k, mfcc, logmel, labels)`` sees each interval's
    denoised features; ``on_update(state, k)`` runs after each update.
    With ``adapt=False`` the state stays frozen.
    """
    fe = cfg.front_end
    effective: deque = deque(maxlen=cfg.effective_cap)
    history = []
    for k in range(start_interval, -(-len(stream) // cfg.interval)):
        chunk = stream[k * cfg.interval:(k + 1) * cfg.interval]
        mfcc, logmel, labels = process_clips(chunk, fe)
        if on_interval is not None:
            on_interval(k, mfcc, logmel, labels)
        metrics, accepted = evaluate_interval(state, mfcc, logmel, labels, cfg, k)
        effective.extend(accepted)
        history.append(metrics)
        if len(chunk) < cfg.interval or not adapt:
            continue
        noise = [c for c in chunk if c.label == "noise"][:max_noise_clips]
        state = continual_update(state, list(effective), noise or None, cfg)
        effective.clear()
        if on_update is not None:
            on_update(state, k)
    return state, history


