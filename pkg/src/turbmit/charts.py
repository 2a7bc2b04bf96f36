"""Synthetic test scenes in [0, 1]."""

from __future__ import annotations

import numpy as np


def resolution_chart(n: int = 128, levels: int = 5, background: float = 0.15,
                     foreground: float = 0.85) -> np.ndarray:
    """Three-bar groups of shrinking width, alternating horizontal and vertical bars."""
    img = np.full((n, n), background)
    x0, y0 = n // 16, n // 16
    width = max(1, n // 20)
    for level in range(levels):
        w = max(1, int(round(width / 1.5**level)))
        span = 5 * w
        if y0 + span > n or x0 + 2 * span + w > n:
            break
        for b in range(3):
            r = y0 + 2 * b * w
            img[r : r + w, x0 : x0 + span] = foreground
            c = x0 + span + w + 2 * b * w
            img[y0 : y0 + span, c : c + w] = foreground
        y0 += span + 2 * w
        x0 += w
    # a filled square and a disk give large flat regions and a curved edge
    s = n // 5
    img[n - s - n // 10 : n - n // 10, n - s - n // 10 : n - n // 10] = foreground
    yy, xx = np.mgrid[:n, :n]
    disk = (yy - 0.35 * n) ** 2 + (xx - 0.72 * n) ** 2 <= (0.12 * n) ** 2
    img[disk] = 0.6
    return img


def checkerboard(n: int = 128, square: int = 8) -> np.ndarray:
    yy, xx = np.mgrid[:n, :n]
    return np.where(((yy // square) + (xx // square)) % 2 == 0, 0.8, 0.2)


def blocks(n: int = 128, seed: int = 0, count: int = 12) -> np.ndarray:
    """Random overlapping rectangles of random gray levels."""
    rng = np.random.default_rng(seed)
    img = np.full((n, n), 0.5)
    for _ in range(count):
        r, c = rng.integers(0, n - 8, 2)
        h, w = rng.integers(6, n // 3, 2)
        img[r : r + h, c : c + w] = rng.uniform(0.1, 0.9)
    return img


def rings(n: int = 128, period: float = 12.0) -> np.ndarray:
    yy, xx = np.mgrid[:n, :n] - (n - 1) / 2.0
    return 0.5 + 0.35 * np.cos(2 * np.pi * np.hypot(yy, xx) / period)


def gradient_edges(n: int = 128) -> np.ndarray:
    yy, xx = np.mgrid[:n, :n] / (n - 1)
    img = 0.2 + 0.5 * xx
    img[yy > 0.5] += 0.25
    return np.clip(img, 0.0, 1.0)


def scene_set(n: int = 128) -> dict[str, np.ndarray]:
    return {
        "chart": resolution_chart(n),
        "checker": checkerboard(n),
        "blocks": blocks(n),
        "rings": rings(n),
        "gradient": gradient_edges(n),
    }
