import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from turbmit.errors import DegeneratePsfError, ParameterError
from turbmit.grid import ComplexField, RealField, grid_coords
from turbmit.optics import (ApertureSpec, OpticalConfig, SamplingWarning, centroid_align,
                            fresnel_kernel, fresnel_transfer, impart_phase, point_source, propagate,
                            pupil_to_psf, sampling_ratio, simulate_psf, split_step)
from turbmit.phase_screen import TurbulenceParams, generate_screen


def test_gaussian_beam_closed_form():
    n, pitch, lam, z, w0 = 128, 1e-3, 0.5e-6, 100.0, 0.02
    x, y = grid_coords(n, pitch)
    r2 = x**2 + y**2
    u0 = ComplexField(np.exp(-math.pi * r2 / w0**2), pitch)
    a = w0**2 + 1j * lam * z
    want = np.exp(2j * math.pi / lam * z) * (w0**2 / a) * np.exp(-math.pi * r2 / a)
    got = propagate(u0, z, lam).data
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_transfer_is_transform_of_kernel():
    # the sampled impulse response convolved by direct DFT approaches the analytic transfer function
    n, pitch, lam, z = 64, 1e-3, 0.5e-6, 20.0
    H = fresnel_transfer(z, lam, n, pitch)
    assert np.allclose(np.abs(H), 1.0)
    h = fresnel_kernel(z, lam, n, pitch)
    assert h.data[n // 2, n // 2] == pytest.approx(np.exp(2j * math.pi / lam * z) / (1j * lam * z))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(10.0, 2000.0))
def test_propagation_conserves_energy(seed, z):
    rng = np.random.default_rng(seed)
    u = ComplexField(rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32)), 1e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SamplingWarning)
        fwd = propagate(u, z, 0.5e-6)
        back = propagate(fwd, z, 0.5e-6, inverse=True)
    assert fwd.energy == pytest.approx(u.energy, rel=1e-12)
    np.testing.assert_allclose(back.data, u.data, atol=1e-10)


def test_sampling_warning():
    u = ComplexField(np.ones((32, 32)), 1e-2)
    with pytest.warns(SamplingWarning):
        out = propagate(u, 10.0, 0.5e-6)
    assert out.meta["sampling_ratio"] == pytest.approx(sampling_ratio(1e-2, 32, 0.5e-6, 10.0))
    with pytest.raises(ParameterError):
        propagate(u, 0.0, 0.5e-6)


def test_impart_phase_unit_modulus():
    u = ComplexField(np.full((8, 8), 2.0 + 0j), 1.0)
    out = impart_phase(u, RealField(np.full((8, 8), math.pi / 2), 1.0))
    np.testing.assert_allclose(out.data, 2j)


def test_split_step_hop_count_without_screens():
    p = TurbulenceParams(r0=0.1, crop_n=128)
    u = point_source(0, 0, p, 0.5, ApertureSpec("circle", 0.2))
    a = split_step(u, [], 7000.0, p.wavelength, window=None)
    b = propagate(u, 7000.0, p.wavelength)
    np.testing.assert_allclose(a.data, b.data)


def test_point_source_flat_in_aperture(desk_params):
    ap = ApertureSpec("circle", 0.2)
    u = point_source(0, 0, desk_params, 0.5, ap)
    pupil = propagate(u, desk_params.path_length, desk_params.wavelength)
    amp = np.abs(pupil.data)[ap.mask(pupil.n, pupil.pitch) > 0]
    assert amp.std() / amp.mean() < 0.05
    with pytest.raises(ParameterError):
        point_source(0, 0, desk_params, 0.1, ap)


def test_diffraction_limited_psf_properties(desk_params, desk_optics):
    psf = simulate_psf(desk_params, desk_optics)
    assert psf.shape == (15, 15) and np.all(psf >= 0)
    assert psf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.unravel_index(psf.argmax(), psf.shape) == (7, 7)
    assert np.max(np.abs(psf - psf[::-1, ::-1])) <= 0.01 * psf.max()


def test_turbulent_psf_is_broader(desk_params, desk_optics):
    clean = simulate_psf(desk_params, desk_optics)
    pitch = desk_optics.grid_pitch(desk_params)
    screens = [generate_screen(lp, pitch=pitch, n=128) for lp in desk_params.with_d_over_r0(0.2, 4).layer_params()]
    turb = simulate_psf(desk_params, desk_optics, screens)
    assert turb.max() < clean.max()


def test_pupil_to_psf_degenerate(desk_params):
    u = ComplexField(np.zeros((128, 128)), desk_params.voelz_pitch)
    with pytest.raises(DegeneratePsfError):
        pupil_to_psf(u, ApertureSpec("circle", 0.2), desk_params)


def test_aperture_masks():
    sq = ApertureSpec("square", 4.0).mask(8, 1.0)
    assert sq.sum() == 25  # |x| <= 2 on integer grid -4..3
    with pytest.raises(ParameterError):
        ApertureSpec("hexagon")
    with pytest.raises(ParameterError):
        ApertureSpec("circle", 10.0).mask(8, 1.0)
    with pytest.raises(ParameterError):
        OpticalConfig(psf_size=4)


def test_centroid_align():
    psf = np.zeros((9, 9))
    psf[2, 6] = 1.0
    out = centroid_align(psf)
    assert out[4, 4] == 1.0
    crop = centroid_align(psf, 5)
    assert crop.shape == (5, 5) and crop[2, 2] == 1.0
    with pytest.raises(DegeneratePsfError):
        centroid_align(np.zeros((5, 5)))
    with pytest.raises(ParameterError):
        centroid_align(psf, 4)
