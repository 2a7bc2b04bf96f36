"""One-dimensional shift model of the short-exposure PSF.

A short PSF is ``h_nu(x - Theta)`` with ``h_nu(x) = K(x / nu) / nu`` and a
Gaussian shift ``Theta ~ N(0, sigma^2)``. This module evaluates the long
exposure, the pointwise variance surface, the Bernstein tail bound for
finite-frame averages, the boxcar closed form, the frame bound from object
motion, and an empirical calibration of the non-local weight ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import interp1d

from .errors import AccuracyError, CalibrationError, ParameterError

QUAD_TOL = 1e-10


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class SmoothingKernel:
    """Even, bounded, integrable kernel ``K`` with ``0 <= K <= M``.

    ``support`` is the half-width of a compact support (``None`` if
    unbounded); it is used to place quadrature breakpoints.
    """

    kind: str
    M: float
    evaluator: Callable = field(repr=False, compare=False)
    support: float | None = None

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    @classmethod
    def gaussian(cls) -> "SmoothingKernel":
        c = 1.0 / math.sqrt(2.0 * math.pi)
        return cls("gaussian", c, lambda x: c * np.exp(-0.5 * x * x))

    @classmethod
    def boxcar(cls) -> "SmoothingKernel":
        return cls("boxcar", 0.5, lambda x: np.where(np.abs(x) <= 1.0, 0.5, 0.0), 1.0)

    @classmethod
    def tabulated(cls, x, values) -> "SmoothingKernel":
        """Kernel from samples on ``x >= 0``; mirrored, linear in between, zero beyond."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or np.any(np.diff(x) <= 0) or x[0] != 0:
            raise ParameterError("tabulated kernel needs increasing x starting at 0")
        if np.any(v < 0):
            raise ParameterError("kernel values must be nonnegative")
        f = interp1d(x, v, bounds_error=False, fill_value=0.0)
        return cls("tabulated", float(v.max()), lambda t: f(np.abs(t)), float(x[-1]))


@dataclass(frozen=True)
class ShortPsf1D:
    kernel: SmoothingKernel
    nu: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ParameterError(f"nu must be positive, got {self.nu}")

    def __call__(self, x):
        return self.kernel(np.asarray(x, dtype=float) / self.nu) / self.nu

    @property
    def peak_bound(self) -> float:
        """``M / nu``, the largest value ``h_nu`` can take."""
        return self.kernel.M / self.nu


@dataclass(frozen=True)
class ShiftModel:
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")

    def pdf(self, theta):
        s = self.sigma
        return np.exp(-0.5 * (np.asarray(theta) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))


# ---------------------------------------------------------------------------
# long PSF and variance


def _span(h: ShortPsf1D, s: ShiftModel) -> float:
    # every integrand carries the shift density; its mass beyond 10 sigma is ~1e-23
    return 10.0 * s.sigma


def _theta_points(h: ShortPsf1D, s: ShiftModel, x: float) -> list[float]:
    """Kernel discontinuities in the shift variable, inside the integration range."""
    lim = _span(h, s)
    if h.kernel.support is None:
        return [0.0]
    a = h.kernel.support * h.nu
    return sorted(t for t in (x - a, x + a, 0.0) if -lim < t < lim)


def _quad(f, lo, hi, points):
    val, err = integrate.quad(f, lo, hi, points=points or None, epsabs=QUAD_TOL, epsrel=QUAD_TOL,
                              limit=400)
    if not np.isfinite(val) or err > 1e3 * QUAD_TOL:
        raise AccuracyError(f"quadrature did not converge (error estimate {err:.2e})", err)
    return val


def long_psf(h: ShortPsf1D, s: ShiftModel, x: float) -> float:
    """``E[h_nu(x - Theta)]`` by adaptive quadrature; ``h_nu(x)`` exactly when sigma is 0."""
    x = float(x)
    if s.sigma == 0:
        return float(h(x))
    lim = _span(h, s)
    return _quad(lambda t: h(x - t) * s.pdf(t), -lim, lim, _theta_points(h, s, x))


def finite_sample_psf(h: ShortPsf1D, s: ShiftModel, T: int, seed: int, x, thetas=None):
    """Average of ``T`` shifted copies ``h_nu(x - theta_t)``.

    ``thetas`` overrides the random draw (used to pin shifts in tests).
    """
    if T < 1:
        raise ParameterError("T must be >= 1")
    if thetas is None:
        thetas = s.sigma * np.random.default_rng(seed).standard_normal(T)
    thetas = np.asarray(thetas, dtype=float)
    x = np.asarray(x, dtype=float)
    return h(x[..., None] - thetas).mean(axis=-1)


def variance_v(h: ShortPsf1D, s: ShiftModel, x: float) -> float:
    """``Var_Theta[h_nu(x - Theta)]``.

    Evaluated as ``E[(h(x-Theta) - h(x))^2] - (E[h(x-Theta)] - h(x))^2``, which
    avoids the cancellation of the raw second-moment form at small sigma.
    """
    x = float(x)
    if s.sigma == 0:
        return 0.0
    c = float(h(x))
    lim = _span(h, s)
    pts = _theta_points(h, s, x)
    m1 = _quad(lambda t: (h(x - t) - c) * s.pdf(t), -lim, lim, pts)
    m2 = _quad(lambda t: (h(x - t) - c) ** 2 * s.pdf(t), -lim, lim, pts)
    return max(m2 - m1 * m1, 0.0)


def _variance_grid(h: ShortPsf1D, s: ShiftModel, xs: np.ndarray) -> np.ndarray:
    c = h(xs)
    lim = _span(h, s)

    def f(t):
        d = h(xs - t) - c
        p = s.pdf(t)
        return np.concatenate([d * p, d * d * p])

    val, _ = integrate.quad_vec(f, -lim, lim, epsabs=QUAD_TOL, epsrel=1e-8, limit=2000)
    m1, m2 = val[: len(xs)], val[len(xs):]
    return np.maximum(m2 - m1 * m1, 0.0)


def sup_variance(h: ShortPsf1D, s: ShiftModel) -> tuple[float, float]:
    """``(sup_x V(x), argmax)`` from a grid search refined by a bounded 1-D search."""
    if s.sigma == 0:
        return 0.0, 0.0
    w = h.nu + s.sigma
    xs = np.linspace(-6.0 * w, 6.0 * w, 2401)  # step w / 200
    v = _variance_grid(h, s, xs)
    i = int(np.argmax(v))
    if i == 0 or i == len(xs) - 1:
        return float(v[i]), float(xs[i])
    res = optimize.minimize_scalar(lambda t: -variance_v(h, s, t), bounds=(xs[i - 1], xs[i + 1]),
                                   method="bounded", options={"xatol": 1e-9 * w})
    xm, vm = float(res.x), -float(res.fun)
    if vm < v[i]:
        return float(v[i]), float(xs[i])
    return float(vm), float(xm)


@dataclass
class VarianceCurve:
    sigma: np.ndarray
    sup_v: np.ndarray
    argmax_x: np.ndarray
    peak_index: int
    unimodal: bool

    @property
    def peak_sigma(self) -> float:
        return float(self.sigma[self.peak_index])


def is_unimodal(values, rel_tol: float = 0.02) -> bool:
    """Rise-then-fall up to a relative tolerance on each step."""
    v = np.asarray(values, dtype=float)
    k = int(np.argmax(v))
    up = all(v[j + 1] >= v[j] * (1.0 - rel_tol) for j in range(k))
    down = all(v[j + 1] <= v[j] * (1.0 + rel_tol) for j in range(k, len(v) - 1))
    return up and down


def variance_peak_scan(h: ShortPsf1D, sigma_grid, rel_tol: float = 0.02) -> VarianceCurve:
    """``sup_x V`` over a sigma grid; non-unimodal curves are flagged, not rejected."""
    sig = np.asarray(sigma_grid, dtype=float)
    out = np.array([sup_variance(h, ShiftModel(float(s))) for s in sig])
    sup_v, arg = out[:, 0], out[:, 1]
    return VarianceCurve(sig, sup_v, arg, int(np.argmax(sup_v)), is_unimodal(sup_v, rel_tol))


# ---------------------------------------------------------------------------
# concentration


def bernstein_bound(eps: float, T: int, sup_v: float, M: float, nu: float) -> float:
    """Tail bound on ``P(|h~_nu(x) - (h_nu * p)(x)| > eps)`` for a ``T``-frame average."""
    for name, v in (("eps", eps), ("T", T), ("sup_v", sup_v), ("M", M), ("nu", nu)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    return 2.0 * math.exp(-eps * eps * T / (2.0 * sup_v + 2.0 * M * eps / (3.0 * nu)))


def bernstein_frames(eps: float, alpha: float, sup_v: float, M: float, nu: float) -> int:
    """Smallest ``T`` whose Bernstein bound does not exceed ``alpha``."""
    if not 0 < alpha < 2:
        raise ParameterError("alpha must lie in (0, 2)")
    t = math.log(2.0 / alpha) * (2.0 * sup_v + 2.0 * M * eps / (3.0 * nu)) / (eps * eps)
    return max(1, math.ceil(t - 1e-12))


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def monte_carlo_deviation(h: ShortPsf1D, s: ShiftModel, T: int, eps: float, x: float,
                          trials: int, seed: int, target: float | None = None) -> float:
    """Fraction of trials with ``|h~_nu(x) - long_psf(x)| > eps``.

    Trial ``i`` draws its shifts from ``default_rng([seed, i])`` so any trial
    can be replayed on its own.
    """
    if trials < 1 or T < 1:
        raise ParameterError("trials and T must be >= 1")
    if s.sigma == 0:
        return 0.0
    mu = long_psf(h, s, x) if target is None else target
    theta = np.empty((trials, T))
    for i in range(trials):
        theta[i] = np.random.default_rng([seed, i]).standard_normal(T)
    est = h(x - s.sigma * theta).mean(axis=1)
    return float(np.mean(np.abs(est - mu) > eps))


# ---------------------------------------------------------------------------
# boxcar closed form


def boxcar_g(nu: float, sigma):
    """``P(|Theta| <= nu) = 2 Phi(nu / sigma) - 1``; 1 at sigma = 0."""
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(sigma > 0, 2.0 * special.ndtr(nu / np.where(sigma > 0, sigma, 1.0)) - 1.0, 1.0)


def _boxcar_q(nu: float, sigma):
    """``1 - g`` without cancellation."""
    sigma = np.asarray(sigma, dtype=float)
    safe = np.where(sigma > 0, sigma, 1.0)
    return np.where(sigma > 0, 2.0 * special.ndtr(-nu / safe), 0.0)


def boxcar_v0(nu: float, sigma):
    """``V(0, sigma)`` for the boxcar kernel."""
    if not nu > 0:
        raise ParameterError("nu must be positive")
    g = boxcar_g(nu, sigma)
    v = g * _boxcar_q(nu, sigma) / (4.0 * nu * nu)
    return float(v) if np.ndim(v) == 0 else v


@dataclass
class BoxcarCheck:
    boundary: float
    analytic: float
    increasing: bool
    grid: np.ndarray


def boxcar_increasing_check(nu: float, points: int = 1000, upto: float | None = None) -> BoxcarCheck:
    """Locate the sigma where ``1 - 2g`` changes sign and test monotonicity below it.

    ``upto`` caps the monotonicity grid (default: the boundary itself).
    """
    if not nu > 0:
        raise ParameterError("nu must be positive")
    analytic = nu / special.ndtri(0.75)
    boundary = optimize.brentq(lambda s: 1.0 - 2.0 * boxcar_g(nu, s), 0.5 * analytic, 2.0 * analytic,
                               xtol=1e-14, rtol=1e-15)
    grid = np.linspace(0.0, boundary if upto is None else upto, points)
    # log domain: at small sigma V is far below the smallest double
    pos = grid[grid > 0]
    logv = (np.log(boxcar_g(nu, pos)) + math.log(2.0) + special.log_ndtr(-nu / pos)
            - math.log(4.0 * nu * nu))
    return BoxcarCheck(float(boundary), float(analytic), bool(np.all(np.diff(logv) > 0)), grid)


# ---------------------------------------------------------------------------
# object motion


def motion_frame_bound(B: float, c: float, R: float) -> float:
    """``floor(2B / (cR) - 1)``, at least 1; ``math.inf`` for a static object (c = 0)."""
    if not (B > 0 and R > 0) or c < 0:
        raise ParameterError("need B > 0, R > 0, c >= 0")
    if c == 0:
        return math.inf
    return max(1, math.floor(2.0 * B / (c * R) - 1.0 + 1e-12))


def frame_budget(t_shift: float, t_motion: float) -> float:
    return min(t_shift, t_motion)


# ---------------------------------------------------------------------------
# simulated PSF statistics


def psf_moments(psfs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame centroids ``(n, 2)`` and per-axis central second moments ``(n, 2)`` in pixels."""
    psfs = np.asarray(psfs, dtype=float)
    k = psfs.shape[-1]
    ax = np.arange(k) - (k - 1) / 2.0
    tot = psfs.sum(axis=(1, 2))
    py, px = psfs.sum(axis=2) / tot[:, None], psfs.sum(axis=1) / tot[:, None]
    cy, cx = py @ ax, px @ ax
    vy = py @ (ax**2) - cy**2
    vx = px @ (ax**2) - cx**2
    return np.stack([cy, cx], 1), np.stack([vy, vx], 1)


def measure_sigma_nu(psfs: np.ndarray) -> tuple[float, float]:
    """Shift std (centroid scatter) and bandwidth (second-moment radius), per axis, in pixels."""
    cent, var = psf_moments(psfs)
    sigma = math.sqrt(float(np.mean(cent.var(axis=0))))
    nu = math.sqrt(float(np.mean(var)))
    return sigma, nu


# ---------------------------------------------------------------------------
# beta calibration

BETA_GRID = np.logspace(-2, 3, 32)


@dataclass
class BetaCalibration:
    d_over_r0: float
    beta: float
    per_trial: list
    errors: np.ndarray  # (trials, len(grid)) squared errors
    eps: float
    grid: np.ndarray = field(default_factory=lambda: BETA_GRID.copy())

    @property
    def std(self) -> float:
        return float(np.std(self.per_trial))


@dataclass(frozen=True)
class CalibrationSetup:
    """Point-source experiment used for ``calibrate_beta``."""

    frames: int = 30
    reference_frames: int = 200
    psf_size: int = 31
    patch_d: int = 7
    L: int = 5
    diameter: float = 0.2
    crop_n: int = 128
    base_seed: int = 0


def calibrate_beta(d_over_r0: float, eps: float, trials: int = 10, setup: CalibrationSetup | None = None,
                   grid: np.ndarray | None = None) -> BetaCalibration:
    """Largest ``beta`` on a log grid with ``||z0 - y0_hat||^2 <= eps``, averaged over trials.

    ``z0`` is the long-exposure point-source image (mean of an independent
    set of frames) and ``y0_hat`` the non-local reference built from
    ``setup.frames`` short exposures. Frames are scaled so that ``z0`` has
    unit peak, which makes ``eps`` and ``beta`` dimensionless.
    """
    from .optics import ApertureSpec, OpticalConfig
    from .phase_screen import TurbulenceParams
    from .reference import NlConfig, build_reference
    from .sim import isoplanatic_psfs

    setup = setup or CalibrationSetup()
    grid = BETA_GRID if grid is None else np.asarray(grid, dtype=float)
    if not d_over_r0 > 0:
        raise ParameterError("d_over_r0 must be positive")
    optics = OpticalConfig(ApertureSpec("circle", setup.diameter), psf_size=setup.psf_size)
    p = TurbulenceParams(r0=setup.diameter / d_over_r0, crop_n=setup.crop_n, seed=setup.base_seed)
    z0 = isoplanatic_psfs(p, optics, setup.reference_frames, seed=p.seed + 7919).mean(axis=0)
    scale = 1.0 / z0.max()
    z0 = z0 * scale
    per_trial, errors = [], np.empty((trials, len(grid)))
    for trial in range(trials):
        frames = isoplanatic_psfs(p, optics, setup.frames, seed=setup.base_seed + 104729 * (trial + 1))
        frames = frames * scale
        for j, beta in enumerate(grid):
            cfg = NlConfig(patch_d=setup.patch_d, L=setup.L, T=setup.frames, beta=float(beta))
            errors[trial, j] = float(np.sum((z0 - build_reference(frames, cfg)) ** 2))
        ok = np.flatnonzero(errors[trial] <= eps)
        if ok.size == 0:
            raise CalibrationError(
                f"no beta on the grid meets eps={eps} at D/r0={d_over_r0} (trial {trial})",
                {"d_over_r0": d_over_r0, "trial": trial, "min_error": float(errors[trial].min()),
                 "errors": errors[trial].tolist()},
            )
        per_trial.append(float(grid[ok.max()]))
    return BetaCalibration(d_over_r0, float(np.mean(per_trial)), per_trial, errors, eps, grid.copy())
