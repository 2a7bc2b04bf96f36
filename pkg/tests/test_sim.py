import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from turbmit.errors import ConfigurationError, ParameterError
from turbmit.optics import ApertureSpec, OpticalConfig
from turbmit.phase_screen import TurbulenceParams
from turbmit.sim import (PsfGrid, anchor_positions, apply_spatially_varying, build_psf_grid,
                         interpolate_psfs, isoplanatic_psfs, required_screen_n, screen_shift_factors,
                         simulate_sequence)


def per_pixel_oracle(x, g):
    k = g.psf_size
    h = k // 2
    xp = np.pad(x, h, mode="symmetric")
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            psf = interpolate_psfs(g, (i, j))
            win = xp[i : i + k, j : j + k][::-1, ::-1]
            out[i, j] = np.sum(win * psf)
    return out


def test_spatially_varying_matches_per_pixel_loop(rng):
    x = rng.random((20, 18))
    psfs = rng.random((2, 3, 5, 5))
    psfs /= psfs.sum(axis=(2, 3), keepdims=True)
    g = PsfGrid(anchor_positions(20, 10), anchor_positions(18, 6), psfs, (20, 18))
    np.testing.assert_allclose(apply_spatially_varying(x, g), per_pixel_oracle(x, g), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(1, 64))
def test_anchor_positions(n, stride):
    a = anchor_positions(n, stride)
    assert np.all(np.diff(a) > 0) or len(a) == 1
    assert a.min() >= 0 and a.max() < n
    if stride >= n:
        assert a.tolist() == [n // 2]


def test_interpolated_psf_unit_sum_and_anchor_exact(rng):
    psfs = rng.random((2, 2, 3, 3))
    psfs /= psfs.sum(axis=(2, 3), keepdims=True)
    g = PsfGrid(np.array([4, 12]), np.array([4, 12]), psfs, (16, 16))
    np.testing.assert_allclose(interpolate_psfs(g, (4, 12)), psfs[0, 1])
    np.testing.assert_allclose(interpolate_psfs(g, (0, 0)), psfs[0, 0])
    for px in [(8, 8), (5, 10), (15, 2)]:
        assert interpolate_psfs(g, px).sum() == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        interpolate_psfs(g, (16, 0))


def test_constant_image_is_preserved(rng):
    psfs = rng.random((2, 2, 5, 5))
    psfs /= psfs.sum(axis=(2, 3), keepdims=True)
    g = PsfGrid(np.array([3, 9]), np.array([3, 9]), psfs, (12, 12))
    np.testing.assert_allclose(apply_spatially_varying(np.full((12, 12), 0.4), g), 0.4)


def test_shift_factors_fall_to_pupil():
    f = screen_shift_factors(TurbulenceParams(r0=0.1, crop_n=8))
    np.testing.assert_allclose(f, [1.0, 0.75, 0.5, 0.25])


def test_no_screens_gives_identical_psfs():
    p = TurbulenceParams(r0=0.1, crop_n=128, n_screens=0)
    opt = OpticalConfig(ApertureSpec("circle", 0.2))
    g = build_psf_grid((32, 32), 16, p, opt, [])
    np.testing.assert_allclose(g.psfs[0, 0], g.psfs[1, 1], atol=1e-14)


def test_build_psf_grid_reports_small_screens():
    p = TurbulenceParams(r0=0.1, crop_n=128, screen_n=128, n_screens=1)
    from turbmit.phase_screen import generate_screen
    s = generate_screen(p)
    with pytest.raises(ConfigurationError):
        build_psf_grid((64, 64), 16, p, OpticalConfig(), [s])


def test_simulate_sequence_deterministic_and_sized():
    p = TurbulenceParams(r0=0.1, crop_n=128, seed=4)
    opt = OpticalConfig(ApertureSpec("circle", 0.2))
    x = np.random.default_rng(0).random((32, 32))
    a = simulate_sequence(x, p, opt, 2, stride=32)
    b = simulate_sequence(x, p, opt, 2, stride=32)
    np.testing.assert_array_equal(a.frames, b.frames)
    assert a.frames.shape == (2, 32, 32) and len(a) == 2
    assert not np.array_equal(a.frames[0], a.frames[1])
    assert required_screen_n((32, 32), 32, p) >= 64


def test_isoplanatic_psfs_unit_sum():
    p = TurbulenceParams(r0=0.1, crop_n=128, seed=1)
    psfs = isoplanatic_psfs(p, OpticalConfig(ApertureSpec("circle", 0.2)), 3)
    assert psfs.shape == (3, 15, 15)
    np.testing.assert_allclose(psfs.sum(axis=(1, 2)), 1.0, atol=1e-12)
    assert np.all(psfs >= 0)
