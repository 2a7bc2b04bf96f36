"""Spatial-temporal non-local reference frames."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, ParameterError
from .optics import centroid_align
from .sim import convolve_symmetric


@dataclass(frozen=True)
class NlConfig:
    """Patch side ``patch_d``, spatial search side ``L``, frames ``T``, weight sharpness ``beta``.

    ``beta = inf`` keeps only frames that contain an exact spatial match.
    """

    patch_d: int = 7
    L: int = 11
    T: int = 100
    beta: float = 1.0

    def __post_init__(self):
        if self.patch_d < 1 or self.patch_d % 2 == 0:
            raise ParameterError(f"patch_d must be odd and positive, got {self.patch_d}")
        if self.L < 1 or self.L % 2 == 0:
            raise ParameterError(f"L must be odd and positive, got {self.L}")
        if self.T < 1:
            raise ParameterError("T must be >= 1")
        if not self.beta >= 0:
            raise ParameterError("beta must be >= 0")


def patch_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigurationError(f"patch shapes differ: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


def temporal_weight(deltas, beta: float) -> float:
    """``exp(-beta * min(deltas))``."""
    d = np.asarray(deltas, dtype=float)
    if d.size == 0:
        raise ParameterError("empty search window")
    m = float(d.min())
    if m == 0 or beta == 0:
        return 1.0
    return math.exp(-beta * m)


def _frames(seq) -> np.ndarray:
    frames = getattr(seq, "frames", seq)
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise ConfigurationError("expected a non-empty (T, H, W) frame stack")
    return frames


def _anchors(n: int, d: int, stride: int) -> np.ndarray:
    if d > n:
        raise ConfigurationError(f"patch side {d} exceeds image side {n}")
    a = list(range(0, n - d + 1, stride))
    if a[-1] != n - d:
        a.append(n - d)
    return np.array(a)


def min_patch_distances(frames: np.ndarray, t0: int, cfg: NlConfig) -> np.ndarray:
    """``min_i ||y_{i,t} - y_{0,t0}||^2`` for every frame and patch origin.

    Returns ``(T, H - d + 1, W - d + 1)``; candidate patches reaching past
    the border see a mirror-padded frame.
    """
    d, r = cfg.patch_d, cfg.L // 2
    ref = frames[t0]
    H, W = ref.shape
    out = np.empty((frames.shape[0], H - d + 1, W - d + 1))
    lo = d // 2
    for t, f in enumerate(frames):
        if t == t0:
            out[t] = 0.0
            continue
        fp = np.pad(f, r, mode="symmetric")
        best = np.full((H, W), np.inf)
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                diff = (fp[r + dy : r + dy + H, r + dx : r + dx + W] - ref) ** 2
                # box sum over the patch, centred; valid region sliced below
                np.minimum(best, ndimage.uniform_filter(diff, d, mode="constant") * (d * d), out=best)
        out[t] = best[lo : lo + H - d + 1, lo : lo + W - d + 1]
    return np.maximum(out, 0.0)


def _weights(deltas: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0:
        return np.ones_like(deltas)
    if math.isinf(beta):
        return (deltas == 0).astype(float)
    # shift by the per-patch minimum so extreme beta cannot underflow every frame
    return np.exp(-beta * (deltas - deltas.min(axis=0, keepdims=True)))


def build_reference(seq, cfg: NlConfig, t0: int = 0) -> np.ndarray:
    """Non-local reference for frame ``t0`` from the window ``[t0, t0 + T)``.

    Each patch (stride ``patch_d // 2``) is the ``w_t``-weighted mean of the
    co-located patches ``y_{0,t}``; overlapping patch estimates are averaged.
    """
    frames = _frames(seq)
    if not 0 <= t0 < frames.shape[0]:
        raise ParameterError(f"t0={t0} outside sequence of {frames.shape[0]} frames")
    if cfg.T > frames.shape[0] - t0:
        raise ConfigurationError(f"T={cfg.T} exceeds the {frames.shape[0] - t0} frames available")
    win = frames[t0 : t0 + cfg.T]
    if cfg.T == 1:
        return win[0].copy()
    d = cfg.patch_d
    H, W = win.shape[1:]
    stride = max(1, d // 2)
    ar, ac = _anchors(H, d, stride), _anchors(W, d, stride)
    deltas = min_patch_distances(win, 0, cfg)[:, ar][:, :, ac]
    w = _weights(deltas, cfg.beta)
    w /= w.sum(axis=0, keepdims=True)
    acc = np.zeros((H, W))
    cnt = np.zeros((H, W))
    rows = ar[:, None] + np.arange(d)[None, :]  # (na, d)
    cols = ac[:, None] + np.arange(d)[None, :]
    for u in range(d):
        for v in range(d):
            ri, ci = rows[:, u], cols[:, v]
            vals = np.einsum("tab,tab->ab", w, win[:, ri][:, :, ci])
            acc[np.ix_(ri, ci)] += vals  # anchors are distinct, so no index repeats
            cnt[np.ix_(ri, ci)] += 1.0
    return acc / cnt


def temporal_average(seq, T: int | None = None, t0: int = 0) -> np.ndarray:
    frames = _frames(seq)
    T = frames.shape[0] - t0 if T is None else T
    if T < 1 or t0 + T > frames.shape[0]:
        raise ConfigurationError("temporal window outside the sequence")
    return frames[t0 : t0 + T].mean(axis=0)


def ideal_kernel(psfs) -> np.ndarray:
    """Centroid-aligned (integer shift) average of ``psfs``, unit sum."""
    psfs = np.asarray(psfs, dtype=float)
    if psfs.ndim == 2:
        psfs = psfs[None]
    if psfs.shape[0] == 0:
        raise ParameterError("need at least one PSF")
    k = np.mean([centroid_align(p) for p in psfs], axis=0)
    return k / k.sum()


def ideal_short_exposure(x: np.ndarray, psfs) -> np.ndarray:
    """``x`` blurred by the centroided mean short-exposure PSF."""
    return convolve_symmetric(x, ideal_kernel(psfs))


def sliding_reference_variance(seq, cfg: NlConfig, offsets: int) -> float:
    """Mean per-pixel variance over ``offsets`` references built from windows starting at 0, 1, ..."""
    frames = _frames(seq)
    refs = np.stack([build_reference(frames, cfg, t0) for t0 in range(offsets)])
    return float(refs.var(axis=0).mean())
