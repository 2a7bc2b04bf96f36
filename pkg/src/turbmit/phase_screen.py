"""Von Karman phase screens: single, cropped, and AR(1)-correlated sequences."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CropRangeError, ParameterError
from .grid import RealField

FRIED_CONSTANT = 0.423


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for ``(seed, *keys)``; no shared RNG state."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def r0_from_cn2(cn2: float, wavelength: float, path_length: float) -> float:
    """Plane-wave Fried parameter for a constant-Cn2 path."""
    if cn2 <= 0 or path_length <= 0 or wavelength <= 0:
        raise ParameterError("cn2, wavelength and path_length must be positive")
    k = 2.0 * math.pi / wavelength
    return (FRIED_CONSTANT * k**2 * cn2 * path_length) ** (-3.0 / 5.0)


def cn2_from_r0(r0: float, wavelength: float, path_length: float) -> float:
    k = 2.0 * math.pi / wavelength
    return r0 ** (-5.0 / 3.0) / (FRIED_CONSTANT * k**2 * path_length)


def split_r0(r0: float, n_screens: int) -> list[float]:
    """Equal shares of ``r0**(-5/3)`` across screens."""
    if n_screens < 1:
        raise ParameterError("n_screens must be >= 1")
    return [r0 * n_screens ** (3.0 / 5.0)] * n_screens


@dataclass(frozen=True)
class TurbulenceParams:
    """Path and turbulence description.

    Give either ``r0`` or ``cn2`` (or both, if consistent). ``screen_n``
    defaults to ``3 * crop_n``, i.e. a margin of one crop on each side.
    """

    r0: float | None = None
    cn2: float | None = None
    l0: float = 0.01
    L0: float = 100.0
    wavelength: float = 0.525e-6
    path_length: float = 7000.0
    n_screens: int = 4
    crop_n: int = 512
    screen_n: int | None = None
    seed: int = 0
    subharmonics: bool = False

    def __post_init__(self):
        if self.r0 is None and self.cn2 is None:
            raise ParameterError("one of r0 or cn2 is required")
        if self.wavelength <= 0 or self.path_length <= 0:
            raise ParameterError("wavelength and path_length must be positive")
        if self.cn2 is not None:
            if self.cn2 <= 0:
                raise ParameterError("cn2 must be positive")
            r0 = r0_from_cn2(self.cn2, self.wavelength, self.path_length)
            if self.r0 is None:
                object.__setattr__(self, "r0", r0)
            elif abs(self.r0 - r0) > 1e-6 * r0:
                raise ParameterError(f"r0={self.r0} inconsistent with cn2 (gives {r0})")
        if not self.r0 > 0:
            raise ParameterError(f"r0 must be positive, got {self.r0}")
        if not (self.l0 > 0 and self.L0 > self.l0):
            raise ParameterError("need 0 < l0 < L0")
        if self.n_screens < 0:
            raise ParameterError("n_screens must be >= 0")
        if self.crop_n < 2 or self.crop_n & (self.crop_n - 1):
            raise ParameterError(f"crop_n must be a power of two, got {self.crop_n}")
        if self.screen_n is None:
            object.__setattr__(self, "screen_n", 3 * self.crop_n)
        if self.crop_n > self.screen_n:
            raise ParameterError("crop_n must not exceed screen_n")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def voelz_pitch(self) -> float:
        return math.sqrt(self.wavelength * self.path_length / self.crop_n)

    def with_d_over_r0(self, diameter: float, ratio: float) -> "TurbulenceParams":
        return replace(self, r0=diameter / ratio, cn2=None)

    def layer_params(self) -> list["TurbulenceParams"]:
        """One parameter set per screen, with split r0 and derived seeds."""
        if self.n_screens == 0:
            return []
        return [
            replace(self, r0=r0_i, cn2=None, seed=derive_seed(self.seed, i))
            for i, r0_i in enumerate(split_r0(self.r0, self.n_screens))
        ]


def von_karman_psd(rho, p: TurbulenceParams):
    """Modified Von Karman phase PSD at spatial frequency magnitude ``rho`` (1/m)."""
    if not p.r0 > 0:
        raise ParameterError("r0 must be positive")
    rho = np.asarray(rho, dtype=float)
    fm = 5.92 / (2.0 * math.pi * p.l0)
    return (
        0.023
        * np.exp(-((rho / fm) ** 2))
        / (p.r0 ** (5.0 / 3.0) * (rho**2 + (1.0 / p.L0) ** 2) ** (11.0 / 6.0))
    )


# ---------------------------------------------------------------------------
# noise -> screen. The noise layout is one flat complex vector so that the
# AR(1) recursion treats the FFT bins and subharmonic bins identically.

_SH_LEVELS = 3


def _noise_size(n: int, subharmonics: bool) -> int:
    return n * n + (_SH_LEVELS * 9 if subharmonics else 0)


def _draw_noise(rng: np.random.Generator, n: int, subharmonics: bool) -> np.ndarray:
    size = _noise_size(n, subharmonics)
    a = rng.standard_normal(size)
    b = rng.standard_normal(size)
    return a + 1j * b


@functools.lru_cache(maxsize=16)
def _amplitude(n: int, pitch: float, r0: float, l0: float, L0: float) -> np.ndarray:
    """``sqrt(PSD) * df`` on the FFT grid, DC removed; cached, read-only."""
    f = np.fft.fftfreq(n, d=pitch)
    fx, fy = np.meshgrid(f, f, indexing="xy")
    psd = von_karman_psd(np.hypot(fx, fy), TurbulenceParams(r0=r0, l0=l0, L0=L0, crop_n=2, screen_n=2))
    psd[0, 0] = 0.0
    a = np.sqrt(psd) / (n * pitch)
    a.setflags(write=False)
    return a


def _screen_from_noise(noise: np.ndarray, p: TurbulenceParams, n: int, pitch: float) -> np.ndarray:
    coeffs = noise[: n * n].reshape(n, n) * _amplitude(n, float(pitch), p.r0, p.l0, p.L0)
    phase = np.real(np.fft.ifft2(coeffs)) * (n * n)
    if p.subharmonics:
        phase = phase + _subharmonic_phase(noise[n * n :], p, n, pitch)
    return phase


def _subharmonic_phase(noise, p, n, pitch):
    # Lane-style 3x3 low-frequency patches at 1/3, 1/9, 1/27 of the grid spacing;
    # simplified: equal-weight bins, no bin-area correction for the centre cell.
    x = (np.arange(n) - n // 2) * pitch
    xx, yy = np.meshgrid(x, x, indexing="xy")
    out = np.zeros((n, n))
    width = n * pitch
    for level in range(1, _SH_LEVELS + 1):
        df = 1.0 / (3**level * width)
        k = np.array([-1.0, 0.0, 1.0]) * df
        fx, fy = np.meshgrid(k, k, indexing="xy")
        psd = von_karman_psd(np.hypot(fx, fy), p)
        psd[1, 1] = 0.0
        c = noise[(level - 1) * 9 : level * 9].reshape(3, 3) * np.sqrt(psd) * df
        for iy in range(3):
            for ix in range(3):
                if c[iy, ix] != 0:
                    out += np.real(c[iy, ix] * np.exp(2j * np.pi * (fx[iy, ix] * xx + fy[iy, ix] * yy)))
    return out - out.mean()


def generate_screen(p: TurbulenceParams, noise_seed: int | None = None, pitch: float | None = None,
                    n: int | None = None) -> RealField:
    """Single master phase screen (radians), zero mean.

    ``pitch`` defaults to the Voelz pitch of the propagation grid and ``n``
    to ``p.screen_n``.
    """
    n = p.screen_n if n is None else n
    pitch = p.voelz_pitch if pitch is None else pitch
    rng = np.random.default_rng(p.seed if noise_seed is None else noise_seed)
    noise = _draw_noise(rng, n, p.subharmonics)
    return RealField(_screen_from_noise(noise, p, n, pitch), pitch)


@dataclass(frozen=True)
class PhaseScreenSeq:
    screens: list
    correlation: float
    seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.screens)

    def __getitem__(self, i):
        return self.screens[i]


def iter_screens(p: TurbulenceParams, t: int, correlation: float = 0.0,
                 pitch: float | None = None, n: int | None = None):
    """Yield ``t`` screens whose driving noise follows an AR(1) recursion.

    ``correlation=0`` gives independent frames. Every frame has the marginal
    law of :func:`generate_screen`, and frame 0 equals it for the same seed.
    """
    if t < 1:
        raise ParameterError("t must be >= 1")
    rho = float(correlation)
    if not 0.0 <= rho < 1.0:
        raise ParameterError(f"correlation must lie in [0, 1), got {rho}")
    n = p.screen_n if n is None else n
    pitch = p.voelz_pitch if pitch is None else pitch
    rng = np.random.default_rng(p.seed)
    noise = _draw_noise(rng, n, p.subharmonics)
    yield RealField(_screen_from_noise(noise, p, n, pitch), pitch)
    innovation = math.sqrt(1.0 - rho * rho)
    for _ in range(1, t):
        noise = rho * noise + innovation * _draw_noise(rng, n, p.subharmonics)
        yield RealField(_screen_from_noise(noise, p, n, pitch), pitch)


def generate_sequence(p: TurbulenceParams, t: int, correlation: float = 0.0,
                      pitch: float | None = None, n: int | None = None) -> PhaseScreenSeq:
    """Materialised :func:`iter_screens`."""
    screens = list(iter_screens(p, t, correlation, pitch, n))
    rho = float(correlation)
    mode = "uncorrelated" if rho == 0.0 else f"ar1({rho})"
    return PhaseScreenSeq(screens, rho, p.seed, {"mode": mode, "r0": p.r0})


def crop_screen(s: RealField, center: tuple[int, int], crop_n: int) -> RealField:
    """Copy the ``crop_n x crop_n`` window whose index ``crop_n // 2`` lands on ``center`` (row, col)."""
    r, c = center
    r0, c0 = r - crop_n // 2, c - crop_n // 2
    if r0 < 0 or c0 < 0 or r0 + crop_n > s.data.shape[0] or c0 + crop_n > s.data.shape[1]:
        raise CropRangeError(
            f"crop of {crop_n} at {center} falls outside screen of shape {s.data.shape}"
        )
    return RealField(s.data[r0 : r0 + crop_n, c0 : c0 + crop_n].copy(), s.pitch)


def screen_center(s: RealField) -> tuple[int, int]:
    return (s.data.shape[0] // 2, s.data.shape[1] // 2)
