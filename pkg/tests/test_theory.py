import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from turbmit.errors import CalibrationError, ParameterError
from turbmit.theory import (BETA_GRID, CalibrationSetup, ShiftModel, ShortPsf1D, SmoothingKernel,
                            bernstein_bound, bernstein_frames, binomial_se, boxcar_g,
                            boxcar_increasing_check, boxcar_v0, calibrate_beta, finite_sample_psf,
                            frame_budget, is_unimodal, long_psf, measure_sigma_nu,
                            monte_carlo_deviation, motion_frame_bound, psf_moments, sup_variance,
                            variance_v)

G = SmoothingKernel.gaussian()
B = SmoothingKernel.boxcar()


def norm_pdf(x, var):
    return mp.exp(-x * x / (2 * var)) / mp.sqrt(2 * mp.pi * var)


def gaussian_variance_oracle(x, nu, sigma):
    # h^2 is a scaled Gaussian of variance nu^2/2, so both moments have closed forms
    x, nu, sigma = mp.mpf(x), mp.mpf(nu), mp.mpf(sigma)
    m2 = norm_pdf(x, nu**2 / 2 + sigma**2) / (2 * nu * mp.sqrt(mp.pi))
    m1 = norm_pdf(x, nu**2 + sigma**2)
    return m2 - m1**2


@pytest.mark.parametrize("nu,sigma,x", [(1, 1, 0), (1, 0.5, 0.7), (2, 3, -1.5), (0.5, 0.1, 0.2)])
def test_gaussian_long_psf_and_variance(nu, sigma, x):
    h, s = ShortPsf1D(G, nu), ShiftModel(sigma)
    assert long_psf(h, s, x) == pytest.approx(float(norm_pdf(mp.mpf(x), mp.mpf(nu) ** 2 + mp.mpf(sigma) ** 2)),
                                              rel=1e-9)
    assert variance_v(h, s, x) == pytest.approx(float(gaussian_variance_oracle(x, nu, sigma)), rel=1e-7,
                                                abs=1e-14)


def test_small_sigma_variance_is_accurate():
    # the stable form keeps relative accuracy where E[h^2] - E[h]^2 cancels
    h, s = ShortPsf1D(G, 1.0), ShiftModel(0.01)
    want = float(gaussian_variance_oracle(1.0, 1.0, 0.01))
    assert variance_v(h, s, 1.0) == pytest.approx(want, rel=1e-5)


def test_boxcar_long_psf_and_v0_match_mpmath():
    h, s = ShortPsf1D(B, 1.0), ShiftModel(0.8)
    g = mp.erf(1 / (mp.mpf("0.8") * mp.sqrt(2)))
    assert long_psf(h, s, 0.0) == pytest.approx(float(g / 2), rel=1e-9)
    assert variance_v(h, s, 0.0) == pytest.approx(float((g - g * g) / 4), rel=1e-8)
    assert boxcar_v0(1.0, 0.8) == pytest.approx(float((g - g * g) / 4), rel=1e-12)


def test_sigma_zero_is_exact():
    h = ShortPsf1D(G, 1.0)
    assert long_psf(h, ShiftModel(0.0), 0.3) == float(h(0.3))
    assert variance_v(h, ShiftModel(0.0), 0.3) == 0.0
    assert sup_variance(h, ShiftModel(0.0)) == (0.0, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.05, 3.0))
def test_sup_variance_bounds(nu, sigma):
    h, s = ShortPsf1D(G, nu), ShiftModel(sigma)
    v, x = sup_variance(h, s)
    assert 0 <= v <= h.peak_bound**2 / 4 + 1e-15  # variance of a [0, M/nu] variable
    assert v >= float(gaussian_variance_oracle(0.0, nu, sigma)) * (1 - 1e-9)
    assert v == pytest.approx(float(gaussian_variance_oracle(x, nu, sigma)), rel=1e-6)


def test_finite_sample_psf_pinned_shifts():
    h = ShortPsf1D(G, 1.0)
    got = finite_sample_psf(h, ShiftModel(1.0), 3, 0, [0.0, 1.0], thetas=[0.0, 0.5, -0.5])
    want = [(h(0) + 2 * h(0.5)) / 3, (h(1) + h(0.5) + h(1.5)) / 3]
    np.testing.assert_allclose(got, want)
    with pytest.raises(ParameterError):
        finite_sample_psf(h, ShiftModel(1.0), 0, 0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 0.5), st.integers(1, 10**5), st.floats(1e-6, 0.1))
def test_bernstein_bound_is_decreasing_in_T(eps, T, v):
    b1 = bernstein_bound(eps, T, v, G.M, 1.0)
    b2 = bernstein_bound(eps, T + 1, v, G.M, 1.0)
    assert 0 <= b2 <= b1 <= 2


def test_bernstein_bound_closed_form():
    got = bernstein_bound(0.05, 100, 0.01, 1 / math.sqrt(2 * math.pi), 1.0)
    want = 2 * mp.exp(-mp.mpf("0.0025") * 100 / (mp.mpf("0.02") + 2 * mp.mpf(0.05) / (3 * mp.sqrt(2 * mp.pi))))
    assert got == pytest.approx(float(want), rel=1e-13)
    with pytest.raises(ParameterError):
        bernstein_bound(0.0, 10, 0.01, 1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 0.5), st.floats(1e-4, 1.0), st.floats(1e-6, 0.1))
def test_bernstein_frames_is_minimal(eps, alpha, v):
    T = bernstein_frames(eps, alpha, v, G.M, 1.0)
    assert bernstein_bound(eps, T, v, G.M, 1.0) <= alpha * (1 + 1e-9)
    if T > 1:
        assert bernstein_bound(eps, T - 1, v, G.M, 1.0) > alpha * (1 - 1e-9)


def test_monte_carlo_replayable_and_bounded():
    h, s = ShortPsf1D(G, 1.0), ShiftModel(1.0)
    a = monte_carlo_deviation(h, s, 20, 0.02, 0.0, 500, seed=3)
    assert a == monte_carlo_deviation(h, s, 20, 0.02, 0.0, 500, seed=3)
    sv, _ = sup_variance(h, s)
    assert a <= bernstein_bound(0.02, 20, sv, G.M, 1.0) + 3 * binomial_se(a, 500)
    assert monte_carlo_deviation(h, ShiftModel(0.0), 20, 0.02, 0.0, 10, 0) == 0.0


def test_boxcar_boundary_and_monotone():
    chk = boxcar_increasing_check(1.0)
    assert chk.boundary == pytest.approx(1.0 / float(mp.sqrt(2) * mp.erfinv(mp.mpf(1) / 2)), rel=1e-12)
    assert chk.increasing
    assert boxcar_v0(1.0, chk.boundary) == pytest.approx(0.0625, abs=1e-12)
    # past the boundary V(0) decreases
    v = boxcar_v0(1.0, np.linspace(chk.boundary, 10, 50))
    assert np.all(np.diff(v) < 0)
    assert float(boxcar_g(1.0, 0.0)) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0))
def test_boxcar_boundary_scales_with_nu(nu):
    assert boxcar_increasing_check(nu, points=50).boundary == pytest.approx(nu * 1.482602218505602, rel=1e-9)


def test_motion_bound():
    assert motion_frame_bound(1.0, 0.0, 1.0) == math.inf
    assert motion_frame_bound(10.0, 1.0, 2.0) == 9
    assert motion_frame_bound(1.0, 5.0, 1.0) == 1
    assert frame_budget(12, motion_frame_bound(10.0, 1.0, 2.0)) == 9
    assert frame_budget(12, math.inf) == 12
    with pytest.raises(ParameterError):
        motion_frame_bound(1.0, -1.0, 1.0)


def test_is_unimodal():
    assert is_unimodal([1, 2, 3, 2, 1])
    assert is_unimodal([1, 2, 1.99, 3, 1], 0.02)
    assert not is_unimodal([1, 3, 1, 3, 1])


def test_psf_moments_and_sigma_nu():
    k = 41
    ax = np.arange(k) - 20
    rng = np.random.default_rng(0)
    shifts = rng.normal(0, 2.0, (400, 2))
    psfs = np.exp(-((ax[None, :, None] - shifts[:, 0, None, None]) ** 2
                    + (ax[None, None, :] - shifts[:, 1, None, None]) ** 2) / (2 * 1.5**2))
    cent, var = psf_moments(psfs)
    np.testing.assert_allclose(cent, shifts, atol=1e-6)
    np.testing.assert_allclose(var, 1.5**2, rtol=1e-4)
    sigma, nu = measure_sigma_nu(psfs)
    assert nu == pytest.approx(1.5, rel=1e-4)
    assert sigma == pytest.approx(2.0, rel=0.1)


def test_tabulated_kernel():
    K = SmoothingKernel.tabulated([0, 1, 2], [1.0, 0.5, 0.0])
    assert K(-0.5) == pytest.approx(0.75) and K(3.0) == 0 and K.M == 1.0
    with pytest.raises(ParameterError):
        SmoothingKernel.tabulated([1, 2], [1, 1])


def test_calibration_trivial_eps_and_failure():
    setup = CalibrationSetup(frames=3, reference_frames=4, psf_size=15, L=3)
    grid = BETA_GRID[::8]
    c = calibrate_beta(2.0, 1e9, 1, setup, grid)
    assert c.beta == grid.max() and c.errors.shape == (1, len(grid))
    with pytest.raises(CalibrationError) as ei:
        calibrate_beta(2.0, 1e-12, 1, setup, grid)
    assert ei.value.diagnostics["min_error"] > 1e-12
