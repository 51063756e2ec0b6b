"""Batch front end: waveform denoising, feature extraction, feature denoising."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, fix_length
from .features import FeaturePair, extract_maps
from .spectral import DenoiseConfig, denoise_map
from .wavelet import denoise_samples


@dataclass(frozen=True)
class FrontEnd:
    wavelet: bool = True
    spectral: bool = True
    alpha: float = 0.5

    def waveform(self, samples) -> np.ndarray:
        """int16 samples -> int8 samples (thresholding only when wavelet is on)."""
        return denoise_samples(samples, threshold=self.wavelet)

    def raw_features(self, samples) -> tuple[np.ndarray, np.ndarray]:
        """(mfcc, logmel) before feature-domain denoising."""
        return extract_maps(self.waveform(samples))

    def denoise(self, maps) -> np.ndarray:
        if not self.spectral:
            return np.asarray(maps, dtype=np.float64)
        return denoise_map(maps, DenoiseConfig(self.alpha))

    def features(self, samples) -> tuple[np.ndarray, np.ndarray]:
        mfcc, logmel = self.raw_features(samples)
        return self.denoise(mfcc), self.denoise(logmel)


def stack_clips(clips) -> np.ndarray:
    return np.stack([fix_length(c.samples) for c in clips]).astype(np.int16)


def clip_labels(clips) -> np.ndarray:
    """1 for yes, 0 for no, -1 for noise-only or unlabelled."""
    return np.array([{"yes": 1, "no": 0}.get(c.label, -1) for c in clips])


def process_clips(clips: list[AudioClip], fe: FrontEnd, chunk: int = 256, denoise: bool = True):
    """Run clips through the front end in chunks; returns (mfcc, logmel, labels)."""
    mfccs, logmels = [], []
    for s in range(0, len(clips), chunk):
        block = stack_clips(clips[s:s + chunk])
        m, l = fe.features(block) if denoise else fe.raw_features(block)
        mfccs.append(m)
        logmels.append(l)
    return np.concatenate(mfccs), np.concatenate(logmels), clip_labels(clips)


def to_pairs(mfcc, logmel, labels, provenance="runtime") -> list[FeaturePair]:
    return [FeaturePair(m, l, None if y < 0 else int(y), provenance)
            for m, l, y in zip(mfcc, logmel, labels)]
