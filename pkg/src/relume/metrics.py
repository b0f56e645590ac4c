"""Full-reference image metrics and the evaluation report format.

All metrics take (H, W, 3) arrays; uint8 is interpreted on the 0..255
scale and float on the unit interval.  PSNR/MSE/SSIM follow the classic
8-bit conventions (SSIM on Rec.601 luma with an 11x11 sigma-1.5 Gaussian
window, valid windows only).  Color error comes in two flavors: mean
Euclidean distance in CIE Lab, and the mean angle between RGB vectors,
which is invariant to per-pixel exposure scaling.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .color import srgb_to_lab
from .errors import ContractError, DegenerateInputError

PSNR_CAP = 99.0

# Rec.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03

# pixels darker than this (0..1 scale vector norm) have no meaningful hue
ANGLE_NORM_FLOOR = 1e-9

MIN_BOX_AREA = 256


def _as255(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ContractError(f"expected an (H, W, 3) image, got shape {a.shape}")
    if a.dtype == np.uint8:
        return a.astype(np.float64)
    return np.asarray(a, dtype=np.float64) * 255.0


def _pair255(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fa, fb = _as255(a), _as255(b)
    if fa.shape != fb.shape:
        raise ContractError(f"image shapes differ: {fa.shape} vs {fb.shape}")
    return fa, fb


def _select(img: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Unmasked pixels as an (N, 3) list; mask True means excluded."""
    if mask is None:
        return img.reshape(-1, 3)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise ContractError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    kept = img[~mask]
    if kept.size == 0:
        raise DegenerateInputError("mask excludes every pixel")
    return kept


def mse(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean squared error over unmasked pixels on the 0..255 scale."""
    fa, fb = _pair255(a, b)
    return float(np.mean((_select(fa, mask) - _select(fb, mask)) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 (identical images).

    The cap doubles as the zero-MSE sentinel so aggregates stay finite.
    """
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0**2 / err))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _windows(img: np.ndarray, size: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(img, (size, size))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over valid Gaussian-weighted windows."""
    fa, fb = _pair255(a, b)
    if fa.shape[0] < _SSIM_WINDOW or fa.shape[1] < _SSIM_WINDOW:
        raise ContractError(
            f"image {fa.shape[:2]} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window"
        )
    ya, yb = fa @ _LUMA, fb @ _LUMA
    k = _gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    wa, wb = _windows(ya, _SSIM_WINDOW), _windows(yb, _SSIM_WINDOW)
    mu_a = np.tensordot(wa, k, axes=([2, 3], [0, 1]))
    mu_b = np.tensordot(wb, k, axes=([2, 3], [0, 1]))
    ea = np.tensordot(wa**2, k, axes=([2, 3], [0, 1])) - mu_a**2
    eb = np.tensordot(wb**2, k, axes=([2, 3], [0, 1])) - mu_b**2
    cov = np.tensordot(wa * wb, k, axes=([2, 3], [0, 1])) - mu_a * mu_b
    c1 = (_SSIM_K1 * 255.0) ** 2
    c2 = (_SSIM_K2 * 255.0) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (ea + eb + c2)
    return float(np.mean(num / den))


def delta_e_lab(lab_a: np.ndarray, lab_b: np.ndarray) -> np.ndarray:
    """Per-pixel CIE76 distance between two Lab arrays."""
    return np.linalg.norm(np.asarray(lab_a) - np.asarray(lab_b), axis=-1)


def delta_e76(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean CIE76 color difference over unmasked pixels."""
    fa, fb = _pair255(a, b)
    la = srgb_to_lab(_select(fa, mask) / 255.0)
    lb = srgb_to_lab(_select(fb, mask) / 255.0)
    return float(np.mean(delta_e_lab(la, lb)))


def angular_errors(a: np.ndarray, b: np.ndarray,
                   mask: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Per-pixel RGB angles in degrees plus the count of excluded pixels.

    Beyond the optional mask, a pixel is excluded when either image's RGB
    vector is shorter than ANGLE_NORM_FLOOR (on the unit scale):
    near-black pixels carry no hue.  The angle between vectors is the
    arccos of their normalized dot product, computed in the equivalent
    form 2*atan2(|u' - v'|, |u' + v'|) on unit vectors u', v', which is
    stable near 0 and 180 degrees and returns exactly 0 when the inputs
    differ by a power-of-two gain.
    """
    fa, fb = _pair255(a, b)
    u = _select(fa, mask) / 255.0
    v = _select(fb, mask) / 255.0
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    valid = (nu >= ANGLE_NORM_FLOOR) & (nv >= ANGLE_NORM_FLOOR)
    uu = u[valid] / nu[valid, None]
    vv = v[valid] / nv[valid, None]
    diff = np.linalg.norm(uu - vv, axis=1)
    summ = np.linalg.norm(uu + vv, axis=1)
    angles = np.degrees(2.0 * np.arctan2(diff, summ))
    return angles, int((~valid).sum())


def angular_mae(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean RGB angular error in degrees over unmasked pixels with a hue."""
    angles, excluded = angular_errors(a, b, mask)
    if angles.size == 0:
        raise DegenerateInputError(
            f"all {excluded} unmasked pixels are below the norm floor; "
            "angular error undefined"
        )
    return float(angles.mean())


def largest_true_rectangle(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Largest axis-aligned all-True rectangle as (top, left, height, width).

    Histogram-stack sweep, O(H*W).  None when the mask holds no True.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ContractError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    best = (0, 0, 0, 0, 0)  # area, top, left, height, width
    heights = np.zeros(w, dtype=int)
    for row in range(h):
        heights = np.where(mask[row], heights + 1, 0)
        stack: list[int] = []  # column indices with increasing heights
        for col in range(w + 1):
            cur = heights[col] if col < w else 0
            while stack and heights[stack[-1]] >= cur:
                top_h = heights[stack.pop()]
                left = stack[-1] + 1 if stack else 0
                area = top_h * (col - left)
                if area > best[0]:
                    best = (area, row - top_h + 1, left, top_h, col - left)
            stack.append(col)
    if best[0] == 0:
        return None
    return best[1:]


def detect_black_box(pixels: np.ndarray) -> tuple[int, int, int, int] | None:
    """Largest all-black rectangle of area >= 256, or None.

    Black means exactly zero in every channel (uint8 0, float 0.0).
    """
    px = np.asarray(pixels)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ContractError(f"expected an (H, W, 3) image, got shape {px.shape}")
    rect = largest_true_rectangle(np.all(px == 0, axis=2))
    if rect is None or rect[2] * rect[3] < MIN_BOX_AREA:
        return None
    return rect


def write_report(rows: list[tuple[str, str, float]], path) -> None:
    """Write `image,metric,value` rows plus one `__mean__` row per metric.

    Means average over the images present for that metric, in first-seen
    metric order.  Values are written with repr-level precision so equal
    runs produce byte-identical files.
    """
    sums: dict[str, list[float]] = {}
    for _, metric, value in rows:
        sums.setdefault(metric, []).append(float(value))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "metric", "value"])
        for image, metric, value in rows:
            writer.writerow([image, metric, repr(float(value))])
        for metric, values in sums.items():
            writer.writerow(["__mean__", metric, repr(sum(values) / len(values))])


def read_report(path) -> list[tuple[str, str, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["image", "metric", "value"]:
            raise ContractError(f"unexpected report header {header!r}")
        return [(img, metric, float(val)) for img, metric, val in reader]
