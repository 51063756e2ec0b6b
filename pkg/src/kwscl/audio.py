"""Audio ingestion: WAV loading, resampling, SNR mixing and synthetic corpora.

All clips are held as int16 numpy arrays at 16 kHz. Mixing happens in
float64 and saturates back to the 16-bit range, like an ADC would.
"""
from __future__ import annotations

import logging
import wave
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from . import CLIP_SAMPLES, SAMPLE_RATE
from .errors import AudioFormatError, DatasetError, DegenerateMixError, UnsupportedAudioError

logger = logging.getLogger(__name__)

LABELS = ("yes", "no", "noise")
DEMAND_ENVIRONMENTS = ("DWASHING", "NFIELD", "OOFFICE", "TCAR")
SYNTHETIC_ENVIRONMENTS = ("WHITE", "PINK", "BABBLE")
DEFAULT_SNRS_DB = (-10, -5, 0, 5, 10)
DEMAND_DURATION_S = 300

INT16_MIN, INT16_MAX = -32768, 32767
# keyword clips may be up to one analysis block (16 frames of 1024)
MAX_KEYWORD_SAMPLES = 16384


def _as_int16(samples) -> np.ndarray:
    arr = np.asarray(samples)
    if arr.ndim != 1:
        raise ValueError(f"expected 1-D samples, got shape {arr.shape}")
    if arr.dtype != np.int16:
        if arr.size and (arr.min() < INT16_MIN or arr.max() > INT16_MAX):
            raise ValueError("samples outside the signed 16-bit range")
        arr = arr.astype(np.int16)
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_int16(self.samples))
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"clips must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.label in ("yes", "no") and len(self.samples) > MAX_KEYWORD_SAMPLES:
            raise ValueError("keyword clips must not exceed 1.024 s")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class NoiseRecording:
    samples: np.ndarray
    environment: str
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_int16(self.samples))
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"recordings must be {SAMPLE_RATE} Hz")
        if self.environment not in DEMAND_ENVIRONMENTS + SYNTHETIC_ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.environment!r}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def segment(self, offset: int, length: int) -> np.ndarray:
        if offset < 0 or offset + length > len(self.samples):
            raise ValueError("noise segment out of range")
        return self.samples[offset:offset + length]


@dataclass(frozen=True)
class MixSpec:
    snr_db: float
    noise_offset_s: float = 0.0
    seed: int = 0


def fix_length(samples, n: int = CLIP_SAMPLES) -> np.ndarray:
    """Zero-pad at the end or truncate to exactly ``n`` samples."""
    samples = np.asarray(samples)
    if len(samples) >= n:
        return samples[:n]
    return np.concatenate([samples, np.zeros(n - len(samples), dtype=samples.dtype)])


def resample(samples, sr_in: int, sr_out: int = SAMPLE_RATE) -> np.ndarray:
    """Windowed-sinc polyphase resampling; returns float64."""
    x = np.asarray(samples, dtype=np.float64)
    if sr_in == sr_out:
        return x
    g = gcd(sr_in, sr_out)
    return resample_poly(x, sr_out // g, sr_in // g)


def saturate16(x) -> np.ndarray:
    return np.clip(np.round(x), INT16_MIN, INT16_MAX).astype(np.int16)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Return (samples as float64 of shape (n, channels), sample_rate)."""
    try:
        with wave.open(str(path), "rb") as w:
            n_channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedAudioError(f"{path}: {msg}") from exc
        raise AudioFormatError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise AudioFormatError(f"{path}: truncated header") from exc
    if width != 2:
        raise UnsupportedAudioError(f"{path}: only 16-bit PCM is supported (width {width})")
    data = np.frombuffer(raw, dtype="<i2")
    usable = len(data) - len(data) % n_channels
    return data[:usable].reshape(-1, n_channels).astype(np.float64), rate


def load_wav(path, label: str | None = None) -> AudioClip:
    """Load a PCM16 WAV file as a mono 16 kHz clip.

    Stereo is averaged to mono before resampling. Keyword clips
    (``label`` in yes/no) are padded or truncated to one second.
    """
    data, rate = read_wav(path)
    mono = data.mean(axis=1)
    out = saturate16(resample(mono, rate))
    if label in ("yes", "no"):
        out = fix_length(out)
    return AudioClip(out, SAMPLE_RATE, label)


def load_noise(path, environment: str) -> NoiseRecording:
    data, rate = read_wav(path)
    out = saturate16(resample(data.mean(axis=1), rate))
    rec = NoiseRecording(out, environment)
    if environment in DEMAND_ENVIRONMENTS and abs(rec.duration_s - DEMAND_DURATION_S) > 1.0:
        logger.warning("%s: DEMAND recordings are %d s, got %.1f s",
                       path, DEMAND_DURATION_S, rec.duration_s)
    return rec


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE) -> None:
    data = np.asarray(samples)
    if data.ndim == 1:
        data = data[:, None]
    with wave.open(str(path), "wb") as w:
        w.setnchannels(data.shape[1])
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(data.astype("<i2").tobytes())


def power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def snr_gain(p_clean: float, p_noise: float, snr_db: float) -> float:
    """Gain applied to the noise so that P_clean / (g^2 P_noise) hits ``snr_db``."""
    if p_noise <= 0.0:
        raise DegenerateMixError("noise segment has zero power")
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_samples(clean, noise_seg, snr_db: float) -> tuple[np.ndarray, float]:
    """Float mix before saturation; returns (mixture, noise gain)."""
    clean = np.asarray(clean, dtype=np.float64)
    noise_seg = np.asarray(noise_seg, dtype=np.float64)
    if len(noise_seg) < len(clean):
        raise ValueError("noise segment shorter than clean clip")
    noise_seg = noise_seg[:len(clean)]
    p_clean = power(clean)
    if p_clean <= 0.0:
        raise DegenerateMixError("clean clip has zero power")
    g = snr_gain(p_clean, power(noise_seg), snr_db)
    return clean + g * noise_seg, g


def mix_at_snr(clean: AudioClip, noise: NoiseRecording, spec: MixSpec) -> AudioClip:
    offset = int(round(spec.noise_offset_s * SAMPLE_RATE))
    seg = noise.segment(offset, len(clean))
    mixed, _ = mix_samples(clean.samples, seg, spec.snr_db)
    return AudioClip(saturate16(mixed), SAMPLE_RATE, clean.label)


def random_offset(rng: np.random.Generator, noise: NoiseRecording, length: int = CLIP_SAMPLES) -> int:
    hi = len(noise.samples) - length
    if hi < 0:
        raise ValueError("noise recording shorter than one clip")
    return int(rng.integers(0, hi + 1))


# ---------------------------------------------------------------------------
# synthetic corpus


def _harmonic_glide(rng, n, f_start, f_end, max_freq=4000.0, tilt=1.0):
    t = np.arange(n) / SAMPLE_RATE
    # exponential glide keeps harmonics proportional
    f0 = f_start * (f_end / f_start) ** (t / max(t[-1], 1e-9))
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    out = np.zeros(n)
    k_max = int(max_freq // max(f_start, f_end))
    for k in range(1, k_max + 1):
        out += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k ** tilt
    return out


def _envelope(n, attack=0.15, release=0.25):
    env = np.ones(n)
    a, r = max(int(n * attack), 1), max(int(n * release), 1)
    env[:a] = np.sin(0.5 * np.pi * np.arange(a) / a) ** 2
    env[-r:] = np.cos(0.5 * np.pi * np.arange(r) / r) ** 2
    return env


def synth_keyword(rng: np.random.Generator, label: str) -> np.ndarray:
    """One synthetic keyword: a voiced pitch glide with a class-specific shape.

    "yes" rises and ends in a high tonal sweep; "no" falls and opens
    with a low nasal hum.
    """
    dur = rng.uniform(0.45, 0.7)
    n = int(dur * SAMPLE_RATE)
    f_lo = rng.uniform(110, 170)
    ratio = rng.uniform(1.6, 2.1)
    if label == "yes":
        voiced_n = int(n * rng.uniform(0.7, 0.75))
        voiced = _harmonic_glide(rng, voiced_n, f_lo, f_lo * ratio, tilt=0.8)
        voiced *= _envelope(voiced_n)
        fric_n = n - voiced_n
        t = np.arange(fric_n) / SAMPLE_RATE
        f0, f1 = rng.uniform(3300, 3700), rng.uniform(5000, 5600)
        phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / t[-1] * t * t)
        sweep = np.sin(phase) * _envelope(fric_n, 0.3, 0.4)
        sweep *= 1.5 * np.std(voiced) / max(np.std(sweep), 1e-9)
        sig = np.concatenate([voiced, sweep])
    elif label == "no":
        nasal_n = int(n * rng.uniform(0.2, 0.3))
        t = np.arange(nasal_n) / SAMPLE_RATE
        nasal = np.sin(2 * np.pi * f_lo * ratio * t) + 0.5 * np.sin(4 * np.pi * f_lo * ratio * t)
        nasal *= _envelope(nasal_n, 0.3, 0.1)
        voiced_n = n - nasal_n
        voiced = _harmonic_glide(rng, voiced_n, f_lo * ratio, f_lo, tilt=1.4)
        voiced *= _envelope(voiced_n, 0.05, 0.35)
        sig = np.concatenate([0.7 * nasal, voiced])
    else:
        raise ValueError(f"not a keyword label: {label!r}")
    peak = rng.uniform(4000, 9000)
    sig *= peak / np.max(np.abs(sig))
    start = int(rng.uniform(0.05, 0.95 - dur) * SAMPLE_RATE)
    out = np.zeros(CLIP_SAMPLES)
    out[start:start + n] = sig
    return out


def synth_test_corpus(n_per_class: int, seed: int) -> list[AudioClip]:
    """Deterministic labelled corpus of ``n_per_class`` yes and no clips (interleaved)."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    clips = []
    for _ in range(n_per_class):
        for label in ("yes", "no"):
            clips.append(AudioClip(saturate16(synth_keyword(rng, label)), SAMPLE_RATE, label))
    return clips


def _pink(rng, n):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / SAMPLE_RATE)
    spec[1:] /= np.sqrt(f[1:])
    spec[0] = 0
    return np.fft.irfft(spec, n)


def _babble(rng, n, streams=6):
    out = np.zeros(n)
    for _ in range(streams):
        pos = int(rng.integers(0, SAMPLE_RATE // 4))
        while pos < n:
            seg_n = int(rng.uniform(0.08, 0.25) * SAMPLE_RATE)
            f0 = rng.uniform(100, 260)
            f1 = f0 * rng.uniform(0.85, 1.15)
            seg = _harmonic_glide(rng, seg_n, f0, f1, tilt=1.0) * _envelope(seg_n, 0.2, 0.3)
            end = min(pos + seg_n, n)
            out[pos:end] += rng.uniform(0.3, 1.0) * seg[:end - pos]
            pos += seg_n + int(rng.uniform(0.0, 0.12) * SAMPLE_RATE)
    return out


def synth_noise_recordings(seed: int, duration_s: float = DEMAND_DURATION_S,
                           rms: float = 2000.0) -> dict[str, NoiseRecording]:
    """White, pink and babble-like recordings standing in for DEMAND environments."""
    rng = np.random.default_rng(seed)
    n = int(duration_s * SAMPLE_RATE)
    raw = {
        "WHITE": rng.standard_normal(n),
        "PINK": _pink(rng, n),
        "BABBLE": _babble(rng, n),
    }
    out = {}
    for env, x in raw.items():
        x = x * (rms / np.sqrt(np.mean(x * x)))
        out[env] = NoiseRecording(saturate16(x), env)
    return out


# ---------------------------------------------------------------------------
# on-disk dataset layouts


@dataclass
class GscdSplit:
    train: list[AudioClip] = field(default_factory=list)
    test: list[AudioClip] = field(default_factory=list)


def load_gscd(root, keywords=("yes", "no")) -> GscdSplit:
    """Load the yes/no subset of a Speech Commands v2 tree.

    Files listed in ``testing_list.txt`` form the test split; everything
    else (including the validation list) trains.
    """
    root = Path(root)
    missing = [kw for kw in keywords if not (root / kw).is_dir()]
    if missing:
        raise DatasetError(f"{root}: no keyword directories {', '.join(missing)}")
    test_list = root / "testing_list.txt"
    test_names = set(test_list.read_text().split()) if test_list.exists() else set()
    split = GscdSplit()
    for kw in keywords:
        for path in sorted((root / kw).glob("*.wav")):
            clip = load_wav(path, label=kw)
            rel = f"{kw}/{path.name}"
            (split.test if rel in test_names else split.train).append(clip)
    return split


def load_demand(root, environments=DEMAND_ENVIRONMENTS, channel: str = "ch01.wav") -> dict[str, NoiseRecording]:
    """Load one channel per environment from a DEMAND tree (``<ENV>/ch01.wav``)."""
    root = Path(root)
    out = {}
    for env in environments:
        path = root / env / channel
        if not path.exists():
            candidates = sorted((root / env).glob("*.wav"))
            if not candidates:
                raise DatasetError(f"no recording for {env} under {root}")
            path = candidates[0]
        out[env] = load_noise(path, env)
    return out
