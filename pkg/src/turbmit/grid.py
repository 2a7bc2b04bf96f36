"""Sampled optical fields, the unitary DFT pair, and propagation windows."""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParameterError


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_square(data: np.ndarray) -> int:
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ConfigurationError(f"field must be square 2-D, got shape {data.shape}")
    return data.shape[0]


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude on an ``n x n`` grid with physical sample pitch (m).

    ``meta`` carries non-fatal diagnostics such as sampling warnings.
    """

    data: np.ndarray
    pitch: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        n = _check_square(data)
        if not _is_pow2(n):
            raise ConfigurationError(f"grid side must be a power of two, got {n}")
        if not self.pitch > 0:
            raise ParameterError(f"pitch must be positive, got {self.pitch}")
        if not np.isfinite(data).all():
            raise ConfigurationError("field contains non-finite samples")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return grid_coords(self.n, self.pitch)

    def with_data(self, data, **meta) -> "ComplexField":
        merged = {**self.meta, **meta}
        return ComplexField(data, self.pitch, merged)


@dataclass(frozen=True)
class RealField:
    """Real-valued map (phase in radians, aperture mask) on a square grid."""

    data: np.ndarray
    pitch: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ConfigurationError(f"field must be 2-D, got shape {data.shape}")
        if not self.pitch > 0:
            raise ParameterError(f"pitch must be positive, got {self.pitch}")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]


def grid_coords(n: int, pitch: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample coordinates with the origin at index ``n // 2``."""
    x = (np.arange(n) - n // 2) * pitch
    return np.meshgrid(x, x, indexing="xy")


def fft2(f: ComplexField) -> ComplexField:
    """Centered unitary DFT; the output pitch is the frequency spacing 1/(n*pitch)."""
    spec = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(f.data), norm="ortho"))
    return ComplexField(spec, 1.0 / (f.n * f.pitch), dict(f.meta))


def ifft2(f: ComplexField) -> ComplexField:
    """Inverse of :func:`fft2`."""
    data = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(f.data), norm="ortho"))
    return ComplexField(data, 1.0 / (f.n * f.pitch), dict(f.meta))


@functools.lru_cache(maxsize=32)
def super_gaussian_window(n: int, order: int = 8, width: float = 0.9) -> np.ndarray:
    """Radial super-Gaussian ``exp(-(r/r_w)**order)`` with ``r_w = width * n/2`` samples.

    Equal to 1 at the grid origin and strictly below 1 elsewhere. The
    returned array is cached and read-only.
    """
    if width <= 0 or order <= 0:
        raise ParameterError("window order and width must be positive")
    i = np.arange(n) - n // 2
    r = np.hypot(*np.meshgrid(i, i, indexing="xy"))
    w = np.exp(-((r / (width * n / 2.0)) ** order))
    w.setflags(write=False)
    return w


def apply_window(f: ComplexField, kind=None) -> ComplexField:
    """Multiply by a window.

    ``kind`` is ``None`` (default super-Gaussian), an ``(order, width)`` pair,
    or an explicit ``n x n`` array with values in [0, 1].
    """
    if kind is None:
        w = super_gaussian_window(f.n)
    elif isinstance(kind, np.ndarray):
        w = kind
    else:
        order, width = kind
        w = super_gaussian_window(f.n, order, width)
    if w.shape != f.data.shape:
        raise ConfigurationError(f"window shape {w.shape} != field shape {f.data.shape}")
    return f.with_data(f.data * w)


# little-endian float64: n, pitch, then row-major samples (complex interleaved re, im)
_HEADER = struct.Struct("<dd")


def save_field(path, f) -> None:
    data = f.data
    if np.iscomplexobj(data):
        payload = np.ascontiguousarray(data, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(float(data.shape[0]), float(f.pitch)))
        fh.write(payload.tobytes(order="C"))


def load_field(path):
    raw = Path(path).read_bytes()
    n_f, pitch = _HEADER.unpack_from(raw)
    n = int(n_f)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size == n * n:
        return RealField(body.reshape(n, n).copy(), pitch)
    if body.size == 2 * n * n:
        return ComplexField(body.view("<c16").reshape(n, n).copy(), pitch)
    raise ConfigurationError(f"{path}: payload of {body.size} doubles does not match n={n}")


def _hat_antiderivative(t):
    # integral of the unit hat max(0, 1-|s|) from -inf to t
    t = np.clip(t, -1.0, 1.0)
    return np.where(t < 0, 0.5 * (1 + t) ** 2, 1.0 - 0.5 * (1 - t) ** 2)


def area_resample_matrix(n_src: int, pitch_src: float, n_dst: int, pitch_dst: float) -> np.ndarray:
    """1-D operator integrating the linear interpolant of a sampled density over target pixels.

    Both grids are centred (index ``n // 2`` at the origin). Applied as
    ``W @ img @ W.T`` to a 2-D array of per-sample masses it returns per-pixel
    masses, so totals are preserved for content well inside both grids.
    """
    xs = (np.arange(n_src) - n_src // 2) * pitch_src
    edges = (np.arange(n_dst + 1) - n_dst // 2 - 0.5) * pitch_dst
    lo = (edges[:-1, None] - xs[None, :]) / pitch_src
    hi = (edges[1:, None] - xs[None, :]) / pitch_src
    # hat integral over [lo, hi] in units of pitch_src; mass/pitch_src is the density height
    return _hat_antiderivative(hi) - _hat_antiderivative(lo)
