"""Synthetic paired low-light scenes.

Each scene is a handful of Gaussian blobs on a vertical brightness ramp.
The ground truth is the well-exposed rendering; the input is the same
scene pushed through a strong color-tinted gain reduction, landing at
mean intensities around 10..25 on the 0..255 scale.  Useful for fast
end-to-end runs and as a deterministic evaluation corpus.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .images import ImageBuffer, save_image

DEFAULT_COUNT = 20
DEFAULT_SIZE = 32
DEFAULT_SEED0 = 100

# dark rendering: blue-deficient tint at roughly 1/8 exposure
_TINT = (1.3, 1.0, 0.7)


def scene_pair(seed: int, size: int = DEFAULT_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """One (dark input, bright ground truth) uint8 pair, H = W = size."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = np.zeros((size, size, 3))
    for _ in range(4):
        cy, cx, r = rng.random(3)
        amp = rng.random() * 120 + 40
        blob = amp * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (0.05 + 0.1 * r)))
        ch = rng.integers(0, 3)
        base[:, :, ch] += blob
    base += 60 * yy[:, :, None] + 40
    gains = np.array(_TINT) * (0.08 + 0.1 * rng.random())
    dark = np.clip(base * gains, 0, 255).astype(np.uint8)
    bright = np.clip(base, 0, 255).astype(np.uint8)
    return dark, bright


def dark_scene(seed: int, size: int = DEFAULT_SIZE) -> np.ndarray:
    return scene_pair(seed, size)[0]


def write_paired_corpus(root, count: int = DEFAULT_COUNT, size: int = DEFAULT_SIZE,
                        seed0: int = DEFAULT_SEED0) -> tuple[Path, Path]:
    """Write input/ and gt/ trees with stem-matched PNGs; returns the dirs."""
    root = Path(root)
    input_dir = root / "input"
    gt_dir = root / "gt"
    input_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        dark, bright = scene_pair(seed0 + i, size)
        name = f"scene{i:03d}.png"
        save_image(ImageBuffer(pixels=dark), input_dir / name)
        save_image(ImageBuffer(pixels=bright), gt_dir / name)
    return input_dir, gt_dir


def add_black_box(pixels: np.ndarray, top: int, left: int, height: int, width: int) -> np.ndarray:
    """Copy of the image with an all-black rectangle burned in."""
    out = np.asarray(pixels).copy()
    out[top : top + height, left : left + width, :] = 0
    return out


def write_boxed_corpus(root, count: int = 8, size: int = DEFAULT_SIZE,
                       seed0: int = 300) -> tuple[Path, Path]:
    """Paired corpus where both sides share a black calibration rectangle.

    The box position/size is drawn per scene (area held at or above the
    detector's 256-pixel minimum) and burned into input and ground truth
    at the same spot, the way a physical occluder appears in both frames.
    """
    root = Path(root)
    input_dir = root / "input"
    gt_dir = root / "gt"
    input_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        dark, bright = scene_pair(seed0 + i, size)
        rng = np.random.default_rng(seed0 + 7919 * (i + 1))
        bh = int(rng.integers(12, min(20, size) + 1))
        bw = min(size, (256 + bh - 1) // bh)
        top = int(rng.integers(0, size - bh + 1))
        left = int(rng.integers(0, size - bw + 1))
        name = f"scene{i:03d}.png"
        save_image(ImageBuffer(pixels=add_black_box(dark, top, left, bh, bw)), input_dir / name)
        save_image(ImageBuffer(pixels=add_black_box(bright, top, left, bh, bw)), gt_dir / name)
    return input_dir, gt_dir
