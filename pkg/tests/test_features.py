import math

import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from kwscl.errors import ShapeError
from kwscl.features import (FFT_SIZE, KIND_LOGMEL, KIND_MFCC, LOG_FLOOR, MAP_RECORD_SIZE, FeatureMap,
                            FeaturePair, default_filterbank, dct_matrix, extract_maps, extract_pair,
                            frame_clip, inverse_mfcc, logmel_frame, mfcc_frame, mfcc_from_logmel_map,
                            pack_map, unpack_map)
from kwscl.wavelet import AudioClip8


def test_frame_16000():
    frames = frame_clip(np.ones(16000))
    assert frames.shape == (16, 1024)
    # 16000 = 15 * 1024 + 640: the last frame holds 640 samples then 384 zeros
    assert np.all(frames[-1, 640:] == 0) and np.all(frames[-1, :640] == 1)
    assert np.all(frames[:-1] == 1)


def test_frame_empty():
    frames = frame_clip(np.zeros(0))
    assert frames.shape == (16, 1024) and not np.any(frames)


def test_frame_exact():
    x = np.arange(16384.0)
    np.testing.assert_array_equal(frame_clip(x).ravel(), x)


def test_frame_too_long():
    with pytest.raises(ShapeError):
        frame_clip(np.zeros(16385))


def test_frame_accepts_clip8():
    clip = AudioClip8(np.ones(100, np.int8))
    assert frame_clip(clip)[0, :100].sum() == 100


def test_filterbank_shape_and_coverage():
    fb = default_filterbank()
    assert fb.weights.shape == (20, 513) and fb.fft_size == 1024
    assert np.all(fb.weights >= 0)
    for m in range(19):
        assert np.any((fb.weights[m] > 0) & (fb.weights[m + 1] > 0))
    freqs = np.arange(513) * 16000 / 1024
    between = (freqs >= fb.centers_hz[0]) & (freqs <= fb.centers_hz[-1])
    assert np.all(fb.weights[:, between].sum(axis=0) > 0)


def test_logmel_zero_frame():
    out = logmel_frame(np.zeros(1024))
    np.testing.assert_allclose(out, math.log(LOG_FLOOR))
    assert math.log(1e-6) == pytest.approx(-13.8155, abs=1e-4)


def test_logmel_tone_at_center():
    fb = default_filterbank()
    t = np.arange(1024)
    for m in (3, 10, 17):
        # tone on the FFT bin nearest to the filter center
        k = int(round(fb.centers_hz[m] * 1024 / 16000))
        out = logmel_frame(np.sin(2 * np.pi * k * t / 1024) * 1000)
        assert np.argmax(out) == m


def test_logmel_scaling(rng):
    x = rng.normal(0, 1000, 1024)
    np.testing.assert_allclose(logmel_frame(2 * x) - logmel_frame(x), math.log(4), atol=1e-6)


def test_logmel_brute_force(rng):
    x = rng.normal(0, 100, 1024)
    n = np.arange(1024)
    win = 0.5 - 0.5 * np.cos(2 * np.pi * n / 1024)
    spec = np.abs(np.fft.fft(x * win)[:513]) ** 2
    ref = np.log(default_filterbank().weights @ spec + 1e-6)
    np.testing.assert_allclose(logmel_frame(x), ref, rtol=1e-10)


def test_mfcc_constant():
    out = mfcc_frame(np.full(20, 2.5))
    assert out[0] == pytest.approx(2.5 * math.sqrt(20))
    np.testing.assert_allclose(out[1:], 0, atol=1e-12)


def test_mfcc_matches_scipy(rng):
    x = rng.normal(size=20)
    np.testing.assert_allclose(mfcc_frame(x), scipy.fft.dct(x, type=2, norm="ortho"), atol=1e-12)


def test_dct_orthonormal():
    d = dct_matrix(20)
    np.testing.assert_allclose(d @ d.T, np.eye(20), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 20, elements=st.floats(-30, 30)))
def test_mfcc_roundtrip(x):
    np.testing.assert_allclose(inverse_mfcc(mfcc_frame(x)), x, atol=1e-6)


def test_mfcc_alternating_energy_at_top():
    out = mfcc_frame(np.tile([1.0, -1.0], 10))
    assert np.argmax(np.abs(out)) == 19


def test_extract_zero_clip():
    mfcc, logmel = extract_maps(np.zeros(16000))
    assert mfcc.shape == logmel.shape == (20, 16)
    np.testing.assert_allclose(logmel, math.log(LOG_FLOOR))
    col = mfcc_frame(np.full(20, math.log(LOG_FLOOR)))
    np.testing.assert_allclose(mfcc, np.repeat(col[:, None], 16, axis=1), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 16384), st.integers(0, 2 ** 31 - 1))
def test_extract_shape_invariance(n, seed):
    x = np.random.default_rng(seed).integers(-128, 128, n)
    mfcc, logmel = extract_maps(x)
    assert mfcc.shape == logmel.shape == (20, 16)
    assert np.all(np.isfinite(mfcc)) and np.all(np.isfinite(logmel))


def test_shared_intermediate(rng):
    mfcc, logmel = extract_maps(rng.integers(-128, 128, 16000))
    np.testing.assert_array_equal(mfcc_from_logmel_map(logmel), mfcc)


def test_extract_batch_matches_single(rng):
    xs = rng.integers(-128, 128, (3, 16000))
    bm, bl = extract_maps(xs)
    for i in range(3):
        m, l = extract_maps(xs[i])
        np.testing.assert_allclose(bm[i], m, atol=1e-12)
        np.testing.assert_allclose(bl[i], l, atol=1e-12)


def test_extract_pair_deterministic(rng):
    clip = AudioClip8(rng.integers(-128, 128, 16000), label="yes")
    a, b = extract_pair(clip), extract_pair(clip)
    np.testing.assert_array_equal(a.mfcc, b.mfcc)
    np.testing.assert_array_equal(a.logmel, b.logmel)
    assert a.label == 1


def test_white_noise_is_finite(rng):
    for _ in range(5):
        m, l = extract_maps(rng.integers(-128, 128, 16000))
        assert np.all(np.isfinite(l))


def test_feature_map_invariants():
    with pytest.raises(ShapeError):
        FeatureMap(np.zeros((16, 20)), KIND_MFCC)
    with pytest.raises(ValueError):
        FeatureMap(np.full((20, 16), np.nan), KIND_MFCC)
    with pytest.raises(ValueError):
        FeaturePair(np.zeros((20, 16)), np.zeros((20, 16)), provenance="other")


def test_map_record_roundtrip(rng):
    v = rng.normal(size=(20, 16)).astype(np.float32)
    buf = pack_map(KIND_LOGMEL, v)
    assert len(buf) == MAP_RECORD_SIZE == 1 + 4 * 320
    assert buf[0] == 1
    kind, back = unpack_map(buf)
    assert kind == KIND_LOGMEL
    np.testing.assert_array_equal(back, v)
    fm = FeatureMap.from_bytes(FeatureMap(v, KIND_MFCC).to_bytes())
    assert fm.kind == KIND_MFCC
    # row-major (band, frame) little-endian float32 after the tag
    assert np.frombuffer(buf[1:5], "<f4")[0] == v[0, 0]
    assert np.frombuffer(buf[5:9], "<f4")[0] == v[0, 1]
    with pytest.raises(ShapeError):
        unpack_map(buf[:-1])
