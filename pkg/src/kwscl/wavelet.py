"""Framed single-level Haar denoising with VisuShrink soft thresholding.

Each non-overlapping 1024-sample frame gets its own threshold, estimated
from the MAD of that frame's detail coefficients. The reconstructed
waveform is mapped to 8 bits by a fixed divide-by-256.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .errors import ShapeError

FRAME_LEN = 1024
MAD_NORMALIZER = 0.6745
OUT_SCALE = 256


@dataclass(frozen=True)
class WaveletFrame:
    approx: np.ndarray
    detail: np.ndarray
    frame_len: int = FRAME_LEN

    def __post_init__(self):
        half = self.frame_len // 2
        if len(self.approx) != half or len(self.detail) != half:
            raise ShapeError("coefficient lengths must be frame_len / 2")


@dataclass(frozen=True)
class DenoiseParams:
    mad: float
    tau: float


@dataclass(frozen=True)
class AudioClip8:
    """Wavelet-stage output: int8 samples at 16 kHz."""
    samples: np.ndarray
    label: str | None = None

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1:
            raise ShapeError("expected 1-D samples")
        s = s.astype(np.int8, copy=True)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)


def _haar_rows(x):
    even, odd = x[..., 0::2], x[..., 1::2]
    return (even + odd) / np.sqrt(2.0), (even - odd) / np.sqrt(2.0)


def _ihaar_rows(a, d):
    out = np.empty(a.shape[:-1] + (2 * a.shape[-1],))
    out[..., 0::2] = (a + d) / np.sqrt(2.0)
    out[..., 1::2] = (a - d) / np.sqrt(2.0)
    return out


def haar_decompose(frame) -> WaveletFrame:
    x = np.asarray(frame, dtype=np.float64)
    if x.shape != (FRAME_LEN,):
        raise ShapeError(f"frame must have {FRAME_LEN} samples, got {x.shape}")
    a, d = _haar_rows(x)
    return WaveletFrame(a, d)


def haar_reconstruct(wf: WaveletFrame) -> np.ndarray:
    return _ihaar_rows(np.asarray(wf.approx, float), np.asarray(wf.detail, float))


def _median(x, axis=-1):
    # np.median averages the two central order statistics for even lengths
    return np.median(x, axis=axis)


def mad_sigma(detail):
    d = np.asarray(detail, dtype=np.float64)
    if d.shape[-1] == 0:
        raise ShapeError("empty detail sequence")
    med = _median(d)
    dev = np.abs(d - np.expand_dims(med, -1))
    out = _median(dev) / MAD_NORMALIZER
    return float(out) if np.ndim(out) == 0 else out


def universal_threshold(mad, n: int = FRAME_LEN):
    return mad * np.sqrt(2.0 * np.log(n))


def soft_threshold(coeffs, tau):
    c = np.asarray(coeffs, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    return np.sign(c) * np.maximum(np.abs(c) - tau, 0.0)


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_int8(x, scale: float = OUT_SCALE) -> np.ndarray:
    return np.clip(round_half_away(np.asarray(x) / scale), -128, 127).astype(np.int8)


def _frames(samples):
    x = np.asarray(samples, dtype=np.float64)
    lead = x.shape[:-1]
    n = x.shape[-1]
    n_frames = max(1, -(-n // FRAME_LEN))
    padded = np.zeros(lead + (n_frames * FRAME_LEN,))
    padded[..., :n] = x
    return padded.reshape(lead + (n_frames, FRAME_LEN)), n


def denoise_waveform(samples, threshold: bool = True):
    """Denoise in the input scale; returns (float waveform, per-frame tau).

    Works on a single clip or a batch with samples along the last axis.
    """
    frames, n = _frames(samples)
    a, d = _haar_rows(frames)
    if threshold:
        tau = universal_threshold(mad_sigma(d), FRAME_LEN)
        d = soft_threshold(d, np.expand_dims(tau, -1))
    else:
        tau = np.zeros(frames.shape[:-1])
    rec = _ihaar_rows(a, d).reshape(frames.shape[:-2] + (-1,))
    return rec[..., :n], np.asarray(tau)


def denoise_samples(samples, threshold: bool = True) -> np.ndarray:
    """Batched int16 -> int8 path used by the pipeline."""
    rec, _ = denoise_waveform(samples, threshold)
    return to_int8(rec)


def denoise_clip(clip: AudioClip, threshold: bool = True) -> AudioClip8:
    return AudioClip8(denoise_samples(clip.samples, threshold), clip.label)


def frame_params(clip: AudioClip) -> list[DenoiseParams]:
    frames, _ = _frames(clip.samples)
    _, d = _haar_rows(frames)
    mads = np.atleast_1d(mad_sigma(d))
    return [DenoiseParams(float(m), float(universal_threshold(m))) for m in mads]


def tau_csv(clip: AudioClip) -> str:
    """Per-frame MAD and threshold as CSV, for debugging."""
    lines = ["frame,mad,tau"]
    for i, p in enumerate(frame_params(clip)):
        lines.append(f"{i},{p.mad:.6f},{p.tau:.6f}")
    return "\n".join(lines) + "\n"
