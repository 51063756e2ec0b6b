"""LogMel and MFCC maps (20 bands x 16 frames) from 8-bit one-second clips.

MFCCs are the orthonormal DCT-II of the LogMel columns, so both maps come
out of one pass over the spectrum.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import SAMPLE_RATE
from .errors import ShapeError

N_BANDS = 20
N_FRAMES = 16
FFT_SIZE = 1024
N_BINS = FFT_SIZE // 2 + 1
BLOCK = N_FRAMES * FFT_SIZE  # 16384 samples
LOG_FLOOR = 1e-6
MAP_SHAPE = (N_BANDS, N_FRAMES)

KIND_MFCC = "MFCC"
KIND_LOGMEL = "LogMel"
_KIND_TAGS = {KIND_MFCC: 0, KIND_LOGMEL: 1}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
PROVENANCES = ("runtime", "rehearsal", "augmented")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, float) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_filters, n_bins)
    centers_hz: np.ndarray
    f_low: float = 0.0
    f_high: float = SAMPLE_RATE / 2

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]

    @property
    def fft_size(self) -> int:
        return 2 * (self.weights.shape[1] - 1)


def build_filterbank(n_filters=N_BANDS, fft_size=FFT_SIZE, f_low=0.0,
                     f_high=SAMPLE_RATE / 2, sample_rate=SAMPLE_RATE) -> MelFilterbank:
    """Triangular filters evenly spaced on the HTK mel scale."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_filters + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    w = np.zeros((n_filters, len(freqs)))
    for m in range(n_filters):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        rise = (freqs - lo) / (c - lo)
        fall = (hi - freqs) / (hi - c)
        w[m] = np.maximum(0.0, np.minimum(rise, fall))
    w.setflags(write=False)
    return MelFilterbank(w, edges[1:-1], f_low, f_high)


@lru_cache(maxsize=None)
def default_filterbank() -> MelFilterbank:
    return build_filterbank()


@lru_cache(maxsize=None)
def dct_matrix(n: int = N_BANDS) -> np.ndarray:
    """Orthonormal DCT-II as an (n, n) matrix: y = D @ x."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    d[0] /= np.sqrt(2.0)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def _hann(n: int = FFT_SIZE) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != MAP_SHAPE:
            raise ShapeError(f"feature maps are {MAP_SHAPE}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature map has non-finite values")
        if self.kind not in _KIND_TAGS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "values", v)

    def to_bytes(self) -> bytes:
        return pack_map(self.kind, self.values)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "FeatureMap":
        kind, values = unpack_map(buf)
        return cls(values, kind)


@dataclass(frozen=True)
class FeaturePair:
    mfcc: np.ndarray
    logmel: np.ndarray
    label: int | None = None
    provenance: str = "runtime"

    def __post_init__(self):
        for name in ("mfcc", "logmel"):
            v = np.array(getattr(self, name), dtype=np.float64)
            if v.shape != MAP_SHAPE:
                raise ShapeError(f"{name} must be {MAP_SHAPE}, got {v.shape}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def with_label(self, label, provenance=None) -> "FeaturePair":
        return FeaturePair(self.mfcc, self.logmel, label, provenance or self.provenance)


# binary record: uint8 kind tag + 320 little-endian float32, row-major (band, frame)
MAP_RECORD = struct.Struct("<B")
MAP_RECORD_SIZE = MAP_RECORD.size + 4 * N_BANDS * N_FRAMES


def pack_map(kind: str, values) -> bytes:
    v = np.ascontiguousarray(values, dtype="<f4")
    if v.shape != MAP_SHAPE:
        raise ShapeError(f"feature maps are {MAP_SHAPE}, got {v.shape}")
    return MAP_RECORD.pack(_KIND_TAGS[kind]) + v.tobytes()


def unpack_map(buf: bytes) -> tuple[str, np.ndarray]:
    if len(buf) != MAP_RECORD_SIZE:
        raise ShapeError(f"feature record must be {MAP_RECORD_SIZE} bytes, got {len(buf)}")
    (tag,) = MAP_RECORD.unpack_from(buf)
    if tag not in _TAG_KINDS:
        raise ValueError(f"unknown kind tag {tag}")
    values = np.frombuffer(buf, dtype="<f4", offset=1).reshape(MAP_SHAPE).astype(np.float64)
    return _TAG_KINDS[tag], values


def frame_clip(samples) -> np.ndarray:
    """Pad to 16384 samples and split into 16 frames of 1024 (leading batch dims allowed)."""
    x = np.asarray(getattr(samples, "samples", samples), dtype=np.float64)
    n = x.shape[-1]
    if n > BLOCK:
        raise ShapeError(f"clip longer than {BLOCK} samples")
    padded = np.zeros(x.shape[:-1] + (BLOCK,))
    padded[..., :n] = x
    return padded.reshape(x.shape[:-1] + (N_FRAMES, FFT_SIZE))


def power_spectrum(frames) -> np.ndarray:
    spec = np.fft.rfft(np.asarray(frames, float) * _hann(FFT_SIZE), axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def logmel_frame(frame, fb: MelFilterbank | None = None) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] != FFT_SIZE:
        raise ShapeError(f"frames must have {FFT_SIZE} samples")
    fb = fb or default_filterbank()
    energies = power_spectrum(frame) @ fb.weights.T
    return np.log(energies + LOG_FLOOR)


def mfcc_frame(logmel) -> np.ndarray:
    return np.asarray(logmel, dtype=np.float64) @ dct_matrix(np.shape(logmel)[-1]).T


def inverse_mfcc(mfcc) -> np.ndarray:
    return np.asarray(mfcc, dtype=np.float64) @ dct_matrix(np.shape(mfcc)[-1])


def mfcc_from_logmel_map(logmel_map) -> np.ndarray:
    """DCT along the band axis of a (..., 20, 16) map."""
    return np.swapaxes(mfcc_frame(np.swapaxes(logmel_map, -1, -2)), -1, -2)


def extract_maps(samples, fb: MelFilterbank | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (mfcc, logmel) maps of shape (..., 20, 16) for one clip or a batch."""
    frames = frame_clip(samples)
    lm = logmel_frame(frames, fb)  # (..., 16, 20)
    logmel = np.swapaxes(lm, -1, -2)
    return mfcc_from_logmel_map(logmel), logmel


def extract_pair(clip, label=None, provenance: str = "runtime") -> FeaturePair:
    mfcc, logmel = extract_maps(clip)
    if label is None:
        label = _label_id(getattr(clip, "label", None))
    return FeaturePair(mfcc, logmel, label, provenance)


def _label_id(label):
    return {"yes": 1, "no": 0}.get(label) if isinstance(label, str) else label
