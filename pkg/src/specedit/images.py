"""Image array conventions and lossless file I/O.

Everything in-process uses channel-first float32 arrays of shape
``[3, H, W]`` with values in [0, 1]. Files are written as PNG so byte-level
reproducibility survives a save/load round trip.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError


def validate_image_array(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValidationError(f"expected [3, H, W] image array, got shape {arr.shape}")
    if arr.dtype.kind != "f":
        raise ValidationError(f"expected float image array, got dtype {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("image array contains non-finite values")
    return arr.astype(np.float32, copy=False)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    """``[H, W, 3]`` uint8 → ``[3, H, W]`` float32 in [0, 1]."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValidationError(f"expected [H, W, 3] uint8 pixels, got {pixels.shape} {pixels.dtype}")
    return (pixels.astype(np.float32) / 255.0).transpose(2, 0, 1)


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """``[3, H, W]`` float → ``[H, W, 3]`` uint8, clipping to [0, 1]."""
    arr = validate_image_array(arr)
    clipped = np.clip(arr, 0.0, 1.0)
    return np.round(clipped * 255.0).astype(np.uint8).transpose(1, 2, 0)


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return from_uint8(np.asarray(rgb))


def save_image(arr: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(arr), mode="RGB").save(path, format="PNG")
    return path


def resize_image(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize to ``(width, height)`` with bicubic resampling."""
    width, height = size
    if width < 1 or height < 1:
        raise ValidationError(f"target size must be positive, got {size}")
    pil = Image.fromarray(to_uint8(arr), mode="RGB")
    resized = pil.resize((width, height), Image.BICUBIC)
    return from_uint8(np.asarray(resized))


def synthetic_image(width: int, height: int, seed: int = 0) -> np.ndarray:
    """Deterministic structured test image: smooth gradients plus a few
    seeded rectangles, so edits have recognizable content to act on."""
    if width < 1 or height < 1:
        raise ValidationError(f"image dims must be positive, got {width}x{height}")
    ys, xs = np.meshgrid(
        np.linspace(0.0, 1.0, height, dtype=np.float32),
        np.linspace(0.0, 1.0, width, dtype=np.float32),
        indexing="ij",
    )
    base = np.stack([ys * 0.8 + 0.1, xs * 0.8 + 0.1, (ys + xs) / 2.0], axis=0)
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(4):
        top = int(rng.integers(0, max(1, height - 1)))
        left = int(rng.integers(0, max(1, width - 1)))
        box_h = int(rng.integers(1, max(2, height // 3 + 1)))
        box_w = int(rng.integers(1, max(2, width // 3 + 1)))
        color = rng.random(3).astype(np.float32)
        base[:, top : top + box_h, left : left + box_w] = color[:, None, None]
    return np.clip(base, 0.0, 1.0).astype(np.float32)
