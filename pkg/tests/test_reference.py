import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from turbmit.errors import ConfigurationError, ParameterError
from turbmit.reference import (NlConfig, build_reference, ideal_kernel, ideal_short_exposure,
                               min_patch_distances, patch_distance, sliding_reference_variance,
                               temporal_average, temporal_weight)


def brute_min_distances(frames, cfg):
    d, r = cfg.patch_d, cfg.L // 2
    T, H, W = frames.shape
    out = np.zeros((T, H - d + 1, W - d + 1))
    for t in range(1, T):
        fp = np.pad(frames[t], r, mode="symmetric")
        for i in range(H - d + 1):
            for j in range(W - d + 1):
                ref = frames[0, i : i + d, j : j + d]
                out[t, i, j] = min(
                    patch_distance(fp[r + i + dy : r + i + dy + d, r + j + dx : r + j + dx + d], ref)
                    for dy in range(-r, r + 1) for dx in range(-r, r + 1))
    return out


def brute_reference(frames, cfg):
    d = cfg.patch_d
    T, H, W = frames.shape
    deltas = brute_min_distances(frames, cfg)
    s = d // 2
    ar = sorted(set(list(range(0, H - d + 1, s)) + [H - d]))
    ac = sorted(set(list(range(0, W - d + 1, s)) + [W - d]))
    acc, cnt = np.zeros((H, W)), np.zeros((H, W))
    for i in ar:
        for j in ac:
            w = np.array([math.exp(-cfg.beta * deltas[t, i, j]) for t in range(T)])
            w /= w.sum()
            acc[i : i + d, j : j + d] += np.tensordot(w, frames[:, i : i + d, j : j + d], 1)
            cnt[i : i + d, j : j + d] += 1
    return acc / cnt


def test_min_distances_match_brute_force(rng):
    frames = rng.random((3, 10, 9))
    cfg = NlConfig(3, 3, 3, 1.0)
    np.testing.assert_allclose(min_patch_distances(frames, 0, cfg), brute_min_distances(frames, cfg),
                               atol=1e-12)


def test_reference_matches_brute_force(rng):
    frames = rng.random((4, 11, 12))
    cfg = NlConfig(5, 3, 4, 2.0)
    np.testing.assert_allclose(build_reference(frames, cfg), brute_reference(frames, cfg), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 9, 9), elements=st.floats(0, 1)), st.sampled_from([0.0, 0.5, 10.0, math.inf]))
def test_reference_within_temporal_envelope(frames, beta):
    ref = build_reference(frames, NlConfig(3, 3, 3, beta))
    assert np.all(ref >= frames.min(0) - 1e-12) and np.all(ref <= frames.max(0) + 1e-12)


def test_identical_frames_reproduce_input(rng):
    x = rng.random((16, 16))
    np.testing.assert_allclose(build_reference(np.stack([x] * 5), NlConfig(5, 3, 5, 3.0)), x, atol=1e-14)


def test_beta_zero_is_temporal_average(rng):
    f = rng.random((4, 12, 12))
    np.testing.assert_allclose(build_reference(f, NlConfig(5, 3, 4, 0.0)), temporal_average(f), atol=1e-14)


def test_beta_inf_keeps_exact_matches_only(rng):
    x = rng.random((16, 16))
    frames = np.stack([x, x, rng.random((16, 16)), rng.random((16, 16))])
    np.testing.assert_allclose(build_reference(frames, NlConfig(5, 3, 4, math.inf)), x, atol=1e-14)


def test_moving_block_is_retained():
    bg = np.full((32, 32), 0.2)
    frames = np.stack([bg.copy() for _ in range(8)])
    frames[0, 10:18, 10:18] = 1.0  # present only in the reference frame
    ref = build_reference(frames, NlConfig(5, 3, 8, 50.0))
    ta = temporal_average(frames)
    block = (slice(12, 16), slice(12, 16))
    assert np.abs(ref[block] - 1.0).max() < 1e-6
    assert np.abs(ta[block] - 1.0).max() > 0.6


def test_sliding_variance_falls_with_T():
    rng = np.random.default_rng(1)
    x = rng.random((24, 24))
    frames = x + 0.1 * rng.standard_normal((24, 24, 24)).transpose(2, 0, 1)
    v4 = sliding_reference_variance(frames, NlConfig(5, 3, 4, 1.0), 4)
    v16 = sliding_reference_variance(frames, NlConfig(5, 3, 16, 1.0), 4)
    assert v16 < v4


def test_temporal_weight():
    assert temporal_weight([0.0, 1.0], 5.0) == 1.0
    assert temporal_weight([2.0, 3.0], 0.5) == pytest.approx(math.exp(-1.0))
    with pytest.raises(ParameterError):
        temporal_weight([], 1.0)


def test_config_and_input_errors(rng):
    for bad in (dict(patch_d=4), dict(L=2), dict(T=0), dict(beta=-1.0)):
        with pytest.raises(ParameterError):
            NlConfig(**bad)
    with pytest.raises(ConfigurationError):
        build_reference(rng.random((2, 8, 8)), NlConfig(3, 3, 5))
    with pytest.raises(ConfigurationError):
        build_reference(np.zeros((0, 8, 8)), NlConfig(3, 3, 1))
    with pytest.raises(ConfigurationError):
        patch_distance(np.zeros(3), np.zeros(4))


def test_ideal_kernel_recentres():
    a = np.zeros((7, 7)); a[3, 3] = 1
    b = np.zeros((7, 7)); b[1, 5] = 1
    k = ideal_kernel([a, b])
    assert k[3, 3] == pytest.approx(1.0)
    x = np.random.default_rng(0).random((10, 10))
    np.testing.assert_allclose(ideal_short_exposure(x, [a, b]), x)
