"""Anisoplanatic imaging: PSF lattice, bilinear PSF interpolation, spatially varying blur."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, CropRangeError, ParameterError
from .optics import OpticalConfig, path_geometry, point_source, pupil_to_psf, split_step
from .phase_screen import TurbulenceParams, crop_screen, derive_seed, iter_screens, screen_center


@dataclass
class PsfGrid:
    """PSFs on a separable lattice of anchor pixels.

    ``psfs[a, b]`` belongs to pixel ``(rows[a], cols[b])``.
    """

    rows: np.ndarray
    cols: np.ndarray
    psfs: np.ndarray
    image_dims: tuple[int, int]

    @property
    def anchors(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r in self.rows for c in self.cols]

    @property
    def psf_size(self) -> int:
        return self.psfs.shape[-1]


@dataclass
class VideoSequence:
    frames: np.ndarray
    meta: list = field(default_factory=list)
    psf_grids: list = field(default_factory=list)

    def __len__(self):
        return self.frames.shape[0]


def anchor_positions(n: int, stride: int) -> np.ndarray:
    """Cell-centred lattice; ``stride >= n`` leaves a single anchor at the centre."""
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    count = max(1, math.ceil(n / stride))
    pos = np.floor((np.arange(count) + 0.5) * n / count).astype(int)
    return np.clip(pos, 0, n - 1)


def screen_shift_factors(p: TurbulenceParams) -> np.ndarray:
    """Crop-centre displacement per image pixel for each screen.

    One master-screen sample per pixel at the first screen, falling
    linearly to zero at the pupil.
    """
    _, z = path_geometry(p)
    if len(z) == 0:
        return z
    L = p.path_length
    return (L - z) / (L - z[0])


def build_psf_grid(image_dims, stride: int, p: TurbulenceParams, optics: OpticalConfig,
                   screens) -> PsfGrid:
    """Propagate one point source per anchor through its crop of each master screen.

    ``screens`` holds one master :class:`RealField` per phase screen, ordered
    from source to pupil.
    """
    screens = list(screens)
    if len(screens) != p.n_screens:
        raise ConfigurationError(f"expected {p.n_screens} screens, got {len(screens)}")
    H, W = image_dims
    rows, cols = anchor_positions(H, stride), anchor_positions(W, stride)
    factors = screen_shift_factors(p)
    pitch = optics.grid_pitch(p)
    hop, _ = path_geometry(p)
    source = point_source(0.0, 0.0, p, optics.flat_size(), optics.aperture, pitch)
    k = optics.psf_size
    psfs = np.empty((len(rows), len(cols), k, k))
    centre_r, centre_c = (H - 1) / 2.0, (W - 1) / 2.0
    for a, r in enumerate(rows):
        for b, c in enumerate(cols):
            crops = []
            for s, f in zip(screens, factors):
                sr, sc = screen_center(s)
                centre = (sr + int(round((r - centre_r) * f)), sc + int(round((c - centre_c) * f)))
                try:
                    crops.append(crop_screen(s, centre, p.crop_n))
                except CropRangeError as exc:
                    raise ConfigurationError(
                        f"anchor ({r}, {c}) needs a larger master screen: {exc}"
                    ) from exc
            u = split_step(source, crops, hop, p.wavelength, optics.window, p.path_length)
            psfs[a, b] = pupil_to_psf(u, optics.aperture, p, k, optics.image_pitch(p))
    return PsfGrid(rows, cols, psfs, (H, W))


def _axis_weights(n: int, anchors: np.ndarray) -> np.ndarray:
    """``(n, len(anchors))`` linear-interpolation weights, clamped outside the lattice."""
    w = np.zeros((n, len(anchors)))
    if len(anchors) == 1:
        w[:, 0] = 1.0
        return w
    x = np.arange(n, dtype=float)
    j = np.clip(np.searchsorted(anchors, x, side="right") - 1, 0, len(anchors) - 2)
    t = (x - anchors[j]) / (anchors[j + 1] - anchors[j])
    t = np.clip(t, 0.0, 1.0)
    w[np.arange(n), j] = 1.0 - t
    w[np.arange(n), j + 1] += t
    return w


def interpolate_psfs(g: PsfGrid, pixel) -> np.ndarray:
    i, j = pixel
    H, W = g.image_dims
    if not (0 <= i < H and 0 <= j < W):
        raise ParameterError(f"pixel {pixel} outside image {g.image_dims}")
    wr = _axis_weights(H, g.rows)[i]
    wc = _axis_weights(W, g.cols)[j]
    psf = np.einsum("a,b,abij->ij", wr, wc, g.psfs)
    return psf / psf.sum()


def convolve_symmetric(x: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Same-size convolution with symmetric (edge-mirrored) boundary extension."""
    return ndimage.convolve(np.asarray(x, dtype=float), psf, mode="reflect")


def apply_spatially_varying(x: np.ndarray, g: PsfGrid) -> np.ndarray:
    """Convolve every pixel with its own interpolated PSF.

    Bilinear PSF blending is linear, so the per-pixel result equals the same
    blend of whole-image convolutions with the anchor PSFs.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != tuple(g.image_dims):
        raise ConfigurationError(f"image shape {x.shape} != grid dims {g.image_dims}")
    wr = _axis_weights(x.shape[0], g.rows)
    wc = _axis_weights(x.shape[1], g.cols)
    out = np.zeros_like(x)
    for a in range(len(g.rows)):
        for b in range(len(g.cols)):
            out += wr[:, a, None] * wc[None, :, b] * convolve_symmetric(x, g.psfs[a, b])
    return out


def required_screen_n(image_dims, stride: int, p: TurbulenceParams) -> int:
    """Smallest master side such that every anchor's crop fits."""
    H, W = image_dims
    rows, cols = anchor_positions(H, stride), anchor_positions(W, stride)
    reach = max(np.abs(rows - (H - 1) / 2).max(), np.abs(cols - (W - 1) / 2).max())
    return p.crop_n + 2 * (int(math.ceil(reach)) + 1)


def simulate_sequence(x: np.ndarray, p: TurbulenceParams, optics: OpticalConfig, t: int,
                      correlation: float = 0.0, stride: int = 32, keep_psfs: bool = False) -> VideoSequence:
    """Simulate ``t`` frames of ``x`` through correlated or independent screen sequences."""
    if t < 1:
        raise ParameterError("t must be >= 1")
    x = np.asarray(x, dtype=float)
    if p.screen_n < required_screen_n(x.shape, stride, p):
        p = replace(p, screen_n=required_screen_n(x.shape, stride, p))
    pitch = optics.grid_pitch(p)
    layers = p.layer_params()
    streams = [iter_screens(lp, t, correlation, pitch=pitch, n=p.screen_n) for lp in layers]
    frames = np.empty((t,) + x.shape)
    meta, grids = [], []
    for i in range(t):
        g = build_psf_grid(x.shape, stride, p, optics, [next(s) for s in streams])
        frames[i] = apply_spatially_varying(x, g)
        meta.append({"frame": i, "seed": p.seed, "layer_seeds": [lp.seed for lp in layers],
                     "correlation": correlation})
        if keep_psfs:
            grids.append(g)
    return VideoSequence(frames, meta, grids)


def frame_params(p: TurbulenceParams, frame: int) -> TurbulenceParams:
    """Independent per-frame parameters (derived seed) for isoplanatic point-source runs."""
    return replace(p, seed=derive_seed(p.seed, 1_000_003, frame))


def isoplanatic_psfs(p: TurbulenceParams, optics: OpticalConfig, count: int,
                     psf_size: int | None = None, seed: int | None = None) -> np.ndarray:
    """``count`` independent on-axis PSFs, each through fresh propagation-size screens."""
    from .optics import simulate_psf
    from .phase_screen import generate_screen

    base = p if seed is None else replace(p, seed=seed)
    pitch = optics.grid_pitch(p)
    k = psf_size or optics.psf_size
    out = np.empty((count, k, k))
    for i in range(count):
        fp = frame_params(base, i)
        screens = [generate_screen(lp, pitch=pitch, n=p.crop_n) for lp in fp.layer_params()]
        out[i] = simulate_psf(fp, optics, screens, psf_size=k)
    return out
