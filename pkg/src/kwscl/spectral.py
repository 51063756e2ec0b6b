"""Feature-domain denoising: normalise, centre along each axis, mask, recombine.

Maps are (bands, frames). The temporal mean of a frame is the average
over its bands (axis -2); the spectral mean of a band averages over
frames (axis -1). Every function accepts a single map or a stack.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeaturePair

DEFAULT_ALPHA = 0.5

BAND_AXIS = -2
FRAME_AXIS = -1


@dataclass(frozen=True)
class DenoiseConfig:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class MaskPair:
    temporal_mask: np.ndarray
    spectral_mask: np.ndarray


def normalize01(x) -> np.ndarray:
    """Min-max scale each map to [0, 1]; constant maps become zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=(-2, -1), keepdims=True)
    hi = x.max(axis=(-2, -1), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


def temporal_mean(x):
    return np.mean(x, axis=BAND_AXIS, keepdims=True)


def spectral_mean(x):
    return np.mean(x, axis=FRAME_AXIS, keepdims=True)


def mean_subtract(x_n):
    x_n = np.asarray(x_n, dtype=np.float64)
    return x_n - temporal_mean(x_n), x_n - spectral_mean(x_n)


def build_masks(x_t, x_s) -> MaskPair:
    m_t = (x_t > temporal_mean(x_t)).astype(np.float64)
    m_s = (x_s > spectral_mean(x_s)).astype(np.float64)
    return MaskPair(m_t, m_s)


def recombine(x_n, x_t, x_s, masks: MaskPair, cfg: DenoiseConfig) -> np.ndarray:
    a = cfg.alpha
    return ((1 - a) * (a * x_s * masks.spectral_mask + (1 - a) * x_t * masks.temporal_mask)
            + a * x_n)


def denoise_map(x, cfg: DenoiseConfig | None = None) -> np.ndarray:
    cfg = cfg or DenoiseConfig()
    x_n = normalize01(x)
    x_t, x_s = mean_subtract(x_n)
    return recombine(x_n, x_t, x_s, build_masks(x_t, x_s), cfg)


def denoise_pair(pair: FeaturePair, cfg: DenoiseConfig | None = None) -> FeaturePair:
    return FeaturePair(denoise_map(pair.mfcc, cfg), denoise_map(pair.logmel, cfg),
                       pair.label, pair.provenance)
