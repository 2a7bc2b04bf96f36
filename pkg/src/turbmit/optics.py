"""Point source, Fresnel propagation, split-step phase screens and PSF formation."""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegeneratePsfError, ParameterError
from .grid import ComplexField, RealField, apply_window, area_resample_matrix, fft2, grid_coords
from .phase_screen import TurbulenceParams


class SamplingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ApertureSpec:
    shape: str = "circle"
    diameter: float = 0.2

    def __post_init__(self):
        if self.shape not in ("circle", "square"):
            raise ParameterError(f"unknown aperture shape {self.shape!r}")
        if not self.diameter > 0:
            raise ParameterError("aperture diameter must be positive")

    def mask(self, n: int, pitch: float) -> np.ndarray:
        if self.diameter > n * pitch:
            raise ParameterError(f"aperture {self.diameter} m exceeds grid extent {n * pitch} m")
        x, y = grid_coords(n, pitch)
        half = self.diameter / 2.0
        if self.shape == "circle":
            return (x**2 + y**2 <= half**2).astype(float)
        return ((np.abs(x) <= half) & (np.abs(y) <= half)).astype(float)


@dataclass(frozen=True)
class OpticalConfig:
    """Imaging geometry that is not turbulence.

    ``pixel_pitch`` is the object-plane size of one image pixel (m); it
    defaults to Nyquist sampling of the diffraction limit, lambda*L/(2D).
    ``pitch`` overrides the Voelz pitch of the propagation grid.
    """

    aperture: ApertureSpec = field(default_factory=ApertureSpec)
    flat_factor: float = 2.5
    psf_size: int = 15
    pixel_pitch: float | None = None
    pitch: float | None = None
    window: tuple = (8, 0.9)

    def __post_init__(self):
        if self.psf_size < 1 or self.psf_size % 2 == 0:
            raise ParameterError("psf_size must be a positive odd integer")

    def grid_pitch(self, p: TurbulenceParams) -> float:
        return p.voelz_pitch if self.pitch is None else self.pitch

    def image_pitch(self, p: TurbulenceParams) -> float:
        if self.pixel_pitch is not None:
            return self.pixel_pitch
        return p.wavelength * p.path_length / (2.0 * self.aperture.diameter)

    def flat_size(self) -> float:
        return self.flat_factor * self.aperture.diameter


def point_source(x0: float, y0: float, p: TurbulenceParams, flat_size: float,
                 aperture: ApertureSpec, pitch: float | None = None) -> ComplexField:
    """Gaussian-windowed sinc^2 source that lights a flat disc of width ``flat_size`` at range L."""
    n = p.crop_n
    pitch = p.voelz_pitch if pitch is None else pitch
    if not aperture.diameter <= flat_size <= n * pitch:
        raise ParameterError(
            f"flat region {flat_size} m must lie in [D={aperture.diameter}, grid width={n * pitch}]"
        )
    lam, L = p.wavelength, p.path_length
    R = flat_size / (lam * L)
    x, y = grid_coords(n, pitch)
    x = x - x0
    y = y - y0
    r2 = x**2 + y**2
    u0 = (lam * L * R**2 * np.exp(-1j * p.k / (2 * L) * r2)
          * np.sinc(R * x) * np.sinc(R * y) * np.exp(-(R**2) / 16.0 * r2))
    return ComplexField(u0, pitch)


def fresnel_kernel(z: float, wavelength: float, n: int, pitch: float) -> ComplexField:
    """Sampled Fresnel impulse response h(x, y, z)."""
    if not z > 0:
        raise ParameterError("propagation distance must be positive")
    k = 2 * math.pi / wavelength
    x, y = grid_coords(n, pitch)
    h = np.exp(1j * k * z) / (1j * wavelength * z) * np.exp(1j * k / (2 * z) * (x**2 + y**2))
    return ComplexField(h, pitch)


def fresnel_transfer(z: float, wavelength: float, n: int, pitch: float) -> np.ndarray:
    """Analytic Fourier transform of :func:`fresnel_kernel`, in unshifted FFT order.

    Unit modulus, so propagation by spectral multiplication conserves energy
    exactly and ``conj`` of it propagates backwards.
    """
    return _transfer(float(z), float(wavelength), int(n), float(pitch)).copy()


@functools.lru_cache(maxsize=16)
def _transfer(z: float, wavelength: float, n: int, pitch: float) -> np.ndarray:
    f = np.fft.fftfreq(n, d=pitch)
    fx, fy = np.meshgrid(f, f, indexing="xy")
    k = 2 * math.pi / wavelength
    H = np.exp(1j * k * z) * np.exp(-1j * math.pi * wavelength * z * (fx**2 + fy**2))
    H.setflags(write=False)
    return H


def sampling_ratio(pitch: float, n: int, wavelength: float, distance: float) -> float:
    """``pitch / sqrt(lambda * distance / n)``; 1 is the Voelz critical sampling."""
    return pitch / math.sqrt(wavelength * abs(distance) / n)


def propagate(u: ComplexField, z: float, wavelength: float, path_length: float | None = None,
              inverse: bool = False) -> ComplexField:
    """Fresnel propagation over ``z`` via spectral multiplication.

    The sampling check uses ``path_length`` (default ``z``); a ratio outside
    [0.5, 2] emits :class:`SamplingWarning` and is recorded in ``meta``.
    """
    if not z > 0:
        raise ParameterError("propagation distance must be positive")
    H = _transfer(float(z), float(wavelength), u.n, float(u.pitch))
    if inverse:
        H = np.conj(H)
    spec = np.fft.fft2(np.fft.ifftshift(u.data), norm="ortho")
    out = np.fft.fftshift(np.fft.ifft2(spec * H, norm="ortho"))
    meta = {}
    ratio = sampling_ratio(u.pitch, u.n, wavelength, path_length or z)
    if not 0.5 <= ratio <= 2.0 and "sampling_ratio" not in u.meta:
        meta["sampling_ratio"] = ratio
        warnings.warn(f"grid pitch is {ratio:.3g}x the Voelz pitch", SamplingWarning, stacklevel=2)
    return u.with_data(out, **meta)


def impart_phase(u: ComplexField, psi: RealField) -> ComplexField:
    if psi.data.shape != u.data.shape:
        raise ConfigurationError(f"screen shape {psi.data.shape} != field shape {u.data.shape}")
    return u.with_data(u.data * np.exp(1j * psi.data))


def split_step(u0: ComplexField, screens, hop: float, wavelength: float,
               window=(8, 0.9), path_length: float | None = None) -> ComplexField:
    """Alternate hop/window/screen for every screen, then one last hop to the pupil.

    The path is ``(len(screens) + 1) * hop`` long. ``window=None`` disables
    windowing.
    """
    path_length = path_length or hop * (len(screens) + 1)
    u = u0
    for psi in screens:
        u = propagate(u, hop, wavelength, path_length)
        if window is not None:
            u = apply_window(u, window)
        u = impart_phase(u, psi)
    u = propagate(u, hop, wavelength, path_length)
    if window is not None:
        u = apply_window(u, window)
    return u


def pupil_to_psf(u: ComplexField, aperture: ApertureSpec, p: TurbulenceParams,
                 psf_size: int = 15, pixel_pitch: float | None = None) -> np.ndarray:
    """Focus the aperture-limited pupil field and return an image-plane PSF.

    The intensity |FFT(r)|^2 lives on an object-plane grid of pitch
    lambda*L/(n*pitch); it is resampled to ``pixel_pitch`` by integrating its
    bilinear interpolant over each pixel, cropped to ``psf_size`` and scaled
    to unit sum.
    """
    lam, L = p.wavelength, p.path_length
    a = aperture.mask(u.n, u.pitch)
    x, y = u.coords()
    r = a * u.data * np.exp(-1j * math.pi * (x**2 + y**2) / (lam * L))
    if not np.any(np.abs(r) > 0):
        raise DegeneratePsfError("aperture passes no light")
    intensity = np.abs(fft2(ComplexField(r, u.pitch)).data) ** 2
    if pixel_pitch is None:
        pixel_pitch = lam * L / (2.0 * aperture.diameter)
    obj_pitch = lam * L / (u.n * u.pitch)
    W = area_resample_matrix(u.n, obj_pitch, psf_size, pixel_pitch)
    psf = W @ intensity @ W.T
    psf = np.maximum(psf, 0.0)
    total = psf.sum()
    if not total > 0:
        raise DegeneratePsfError("PSF has no energy inside the crop")
    return psf / total


def centroid_align(psf: np.ndarray, size: int | None = None) -> np.ndarray:
    """Shift ``psf`` by whole pixels so its centroid sits on the centre pixel.

    Vacated pixels are zero. With ``size`` the aligned kernel is cropped to
    ``size x size`` about the centre. The result has unit sum.
    """
    psf = np.asarray(psf, dtype=float)
    n = psf.shape[0]
    if psf.ndim != 2 or psf.shape[1] != n:
        raise ParameterError("expected a square PSF")
    total = psf.sum()
    if not total > 0:
        raise DegeneratePsfError("PSF has no energy")
    ax = np.arange(n)
    cy = float(psf.sum(axis=1) @ ax) / total
    cx = float(psf.sum(axis=0) @ ax) / total
    c = n // 2
    sy, sx = int(round(c - cy)), int(round(c - cx))
    out = np.zeros_like(psf)
    ys, yd = (slice(0, n - sy), slice(sy, n)) if sy >= 0 else (slice(-sy, n), slice(0, n + sy))
    xs, xd = (slice(0, n - sx), slice(sx, n)) if sx >= 0 else (slice(-sx, n), slice(0, n + sx))
    out[yd, xd] = psf[ys, xs]
    if size is not None:
        if size > n or size % 2 == 0:
            raise ParameterError(f"crop size must be odd and <= {n}")
        h = size // 2
        out = out[c - h : c + h + 1, c - h : c + h + 1]
    s = out.sum()
    if not s > 0:
        raise DegeneratePsfError("aligned PSF crop has no energy")
    return out / s


def path_geometry(p: TurbulenceParams) -> tuple[float, np.ndarray]:
    """Hop length and screen distances from the source for equally spaced screens."""
    hop = p.path_length / (p.n_screens + 1)
    return hop, hop * np.arange(1, p.n_screens + 1)


def simulate_psf(p: TurbulenceParams, optics: OpticalConfig, screens=(), psf_size: int | None = None,
                 source: ComplexField | None = None) -> np.ndarray:
    """PSF of one on-axis point source through the given propagation-grid screens."""
    screens = list(screens)
    pitch = optics.grid_pitch(p)
    hop = p.path_length / (len(screens) + 1)
    if source is None:
        source = point_source(0.0, 0.0, p, optics.flat_size(), optics.aperture, pitch)
    u = split_step(source, screens, hop, p.wavelength, optics.window, p.path_length)
    return pupil_to_psf(u, optics.aperture, p, psf_size or optics.psf_size, optics.image_pitch(p))
