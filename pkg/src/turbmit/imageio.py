"""Grayscale image and frame-stack I/O. Images are float arrays in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError

_SUFFIXES = (".png", ".pgm", ".tif", ".tiff", ".npy")


def read_image(path) -> np.ndarray:
    """PNG/PGM/TIFF (8- or 16-bit) or ``.npy``, as float64 grayscale."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"{path}: no such file")
    if path.suffix == ".npy":
        arr = np.load(path)
        if arr.ndim != 2:
            raise ConfigurationError(f"{path}: expected a 2-D array")
        return arr.astype(float)
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return arr


def write_image(path, img: np.ndarray, bits: int = 16) -> None:
    """Clip to [0, 1] and write; ``.npy`` keeps full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(img, dtype=float)
    if path.suffix == ".npy":
        np.save(path, img)
        return
    x = np.clip(img, 0.0, 1.0)
    if bits == 16:
        Image.fromarray(np.round(x * 65535).astype(np.uint16)).save(path)
    elif bits == 8:
        Image.fromarray(np.round(x * 255).astype(np.uint8)).save(path)
    else:
        raise ConfigurationError("bits must be 8 or 16")


def read_stack(directory) -> np.ndarray:
    """All images in ``directory`` in name order as ``(T, H, W)``.

    A ``frames.npy`` file, if present, takes precedence.
    """
    d = Path(directory)
    if not d.is_dir():
        raise ConfigurationError(f"{d}: not a directory")
    if (d / "frames.npy").exists():
        return np.load(d / "frames.npy").astype(float)
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in _SUFFIXES)
    if not files:
        raise ConfigurationError(f"{d}: no frames found")
    frames = [read_image(p) for p in files]
    if len({f.shape for f in frames}) != 1:
        raise ConfigurationError(f"{d}: frames differ in size")
    return np.stack(frames)


def write_stack(directory, frames: np.ndarray, png: bool = True) -> None:
    """Write ``frames.npy`` (exact) and, optionally, ``frame_XXXX.png`` previews."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    frames = np.asarray(frames, dtype=float)
    np.save(d / "frames.npy", frames)
    if png:
        for i, f in enumerate(frames):
            write_image(d / f"frame_{i:04d}.png", f)
