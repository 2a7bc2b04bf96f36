"""Block-matching registration toward a reference and gradient-weighted lucky-region fusion."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, ParameterError


def _anchors(n: int, size: int, stride: int) -> np.ndarray:
    size = min(size, n)
    a = list(range(0, n - size + 1, stride))
    if a[-1] != n - size:
        a.append(n - size)
    return np.array(a)


def _block_sums(img: np.ndarray, rows: np.ndarray, cols: np.ndarray, size: int) -> np.ndarray:
    """Sums of ``img`` over ``size x size`` blocks with top-left corners ``rows x cols``."""
    s = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    s[1:, 1:] = img.cumsum(0).cumsum(1)
    r, c = rows[:, None], cols[None, :]
    return s[r + size, c + size] - s[r, c + size] - s[r + size, c] + s[r, c]


def _offsets(radius: int) -> list[tuple[int, int]]:
    # nearest first, so ties resolve to the smallest displacement
    o = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    return sorted(o, key=lambda d: (d[0] ** 2 + d[1] ** 2, d))


def block_flow(frame: np.ndarray, reference: np.ndarray, block: int = 16,
               radius: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Integer block displacements that register ``frame`` onto ``reference``.

    For each block (stride ``block // 2``) the displacement ``(dy, dx)`` in
    ``[-radius, radius]^2`` minimising ``sum (frame[y - dy, x - dx] - reference[y, x])^2``
    is chosen. Returns the warped frame, assembled by averaging overlapping
    blocks, and the ``(rows, cols, 2)`` displacement field.
    """
    frame = np.asarray(frame, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if frame.shape != reference.shape or frame.ndim != 2:
        raise ConfigurationError(f"frame {frame.shape} and reference {reference.shape} differ")
    if block < 1 or radius < 0:
        raise ParameterError("need block >= 1 and radius >= 0")
    H, W = frame.shape
    b = min(block, H, W)
    rows, cols = _anchors(H, b, max(1, b // 2)), _anchors(W, b, max(1, b // 2))
    fp = np.pad(frame, radius, mode="symmetric")
    best = np.full((len(rows), len(cols)), np.inf)
    flow = np.zeros((len(rows), len(cols), 2), dtype=int)
    for dy, dx in _offsets(radius):
        shifted = fp[radius - dy : radius - dy + H, radius - dx : radius - dx + W]
        ssd = _block_sums((shifted - reference) ** 2, rows, cols, b)
        better = ssd < best
        best[better] = ssd[better]
        flow[better] = (dy, dx)
    acc = np.zeros((H, W))
    cnt = np.zeros((H, W))
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            dy, dx = flow[i, j]
            acc[r : r + b, c : c + b] += fp[radius - dy + r : radius - dy + r + b,
                                            radius - dx + c : radius - dx + c + b]
            cnt[r : r + b, c : c + b] += 1.0
    return acc / cnt, flow


def gradient_energy(img: np.ndarray) -> np.ndarray:
    """Squared Sobel gradient magnitude."""
    img = np.asarray(img, dtype=float)
    return ndimage.sobel(img, 0, mode="reflect") ** 2 + ndimage.sobel(img, 1, mode="reflect") ** 2


def lucky_fuse(frames, reference: np.ndarray | None = None, tile: int = 16,
               temperature: float = 0.25, gate: float = 1.0) -> np.ndarray:
    """Fuse registered frames tile by tile, favouring locally sharp content.

    Each overlapping tile (stride ``tile // 2``) gets softmax weights over
    frames of ``E_t / mean(E) - gate * D_t / mean(D)``, divided by
    ``temperature``, where ``E_t`` is the tile's gradient energy and ``D_t``
    its squared distance to ``reference`` (the term is dropped without a
    reference). Overlapping tile estimates are averaged, so every output
    pixel is a convex combination of the inputs.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise ConfigurationError("expected a non-empty (T, H, W) stack")
    if not temperature > 0:
        raise ParameterError("temperature must be positive")
    if frames.shape[0] == 1:
        return frames[0].copy()
    T, H, W = frames.shape
    b = min(tile, H, W)
    rows, cols = _anchors(H, b, max(1, b // 2)), _anchors(W, b, max(1, b // 2))
    energy = np.stack([_block_sums(gradient_energy(f), rows, cols, b) for f in frames])
    logits = energy / np.maximum(energy.mean(axis=0), 1e-300)
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != (H, W):
            raise ConfigurationError("reference shape differs from frames")
        dist = np.stack([_block_sums((f - reference) ** 2, rows, cols, b) for f in frames])
        logits = logits - gate * dist / np.maximum(dist.mean(axis=0), 1e-300)
    logits = logits / temperature
    w = np.exp(logits - logits.max(axis=0, keepdims=True))
    w /= w.sum(axis=0, keepdims=True)
    acc = np.zeros((H, W))
    cnt = np.zeros((H, W))
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            acc[r : r + b, c : c + b] += np.tensordot(w[:, i, j], frames[:, r : r + b, c : c + b], 1)
            cnt[r : r + b, c : c + b] += 1.0
    return acc / cnt


def register_and_fuse(frames, reference: np.ndarray, block: int = 16, radius: int = 3,
                      **fuse_kw) -> np.ndarray:
    """Warp every frame onto ``reference`` then fuse."""
    warped = np.stack([block_flow(f, reference, block, radius)[0] for f in np.asarray(frames)])
    return lucky_fuse(warped, reference, **fuse_kw)
