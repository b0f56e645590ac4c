"""Image buffers and 8-bit PNG I/O.

Pixels are either uint8 on the 0..255 scale or float64 on the unit
interval; both conventions mean sRGB.  Padding metadata (original size
and offset) rides along so downstream stages can crop back and compute
statistics over the original region only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ContractError


@dataclass(frozen=True)
class ImageBuffer:
    """An H x W x 3 sRGB image plus pre-padding geometry.

    ``orig_size`` is None for images that were never padded; otherwise it
    is the (height, width) of the original content and ``pad_offset`` its
    (top, left) placement inside the padded canvas.
    """

    pixels: np.ndarray
    orig_size: tuple[int, int] | None = None
    pad_offset: tuple[int, int] = (0, 0)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ContractError(f"image must be (H, W, 3), got shape {px.shape}")
        if px.dtype == np.uint8:
            pass
        elif np.issubdtype(px.dtype, np.floating):
            px = px.astype(np.float64, copy=False)
            if not np.all(np.isfinite(px)):
                raise ContractError("float image contains non-finite values")
            if px.min() < 0.0 or px.max() > 1.0:
                raise ContractError("float image values must lie in [0, 1]")
        else:
            raise ContractError(f"unsupported pixel dtype {px.dtype}")
        if self.orig_size is not None:
            oh, ow = self.orig_size
            top, left = self.pad_offset
            if not (0 < oh <= px.shape[0] and 0 < ow <= px.shape[1]):
                raise ContractError("orig_size exceeds padded dims")
            if top + oh > px.shape[0] or left + ow > px.shape[1]:
                raise ContractError("pad_offset places original region out of bounds")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def as_float01(self) -> np.ndarray:
        """Pixels as float64 in [0, 1] regardless of storage convention."""
        if self.pixels.dtype == np.uint8:
            return self.pixels.astype(np.float64) / 255.0
        return self.pixels.astype(np.float64, copy=True)

    def as_float255(self) -> np.ndarray:
        """Pixels as float64 on the 0..255 scale."""
        if self.pixels.dtype == np.uint8:
            return self.pixels.astype(np.float64)
        return self.pixels * 255.0

    def to_uint8(self) -> np.ndarray:
        if self.pixels.dtype == np.uint8:
            return self.pixels.copy()
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    def original_region(self) -> np.ndarray:
        """View of the pre-padding content (whole image if never padded)."""
        if self.orig_size is None:
            return self.pixels
        oh, ow = self.orig_size
        top, left = self.pad_offset
        return self.pixels[top : top + oh, left : left + ow]

    def mean_intensity(self) -> float:
        """Arithmetic mean over the original region, all channels, 0..255 scale."""
        region = self.original_region()
        if region.dtype == np.uint8:
            return float(region.mean(dtype=np.float64))
        return float(region.mean(dtype=np.float64) * 255.0)

    def crop_to_original(self) -> "ImageBuffer":
        if self.orig_size is None:
            return self
        return ImageBuffer(pixels=self.original_region())


def load_image(path) -> ImageBuffer:
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return ImageBuffer(pixels=np.asarray(rgb, dtype=np.uint8))


def save_image(buf: ImageBuffer, path) -> None:
    Image.fromarray(buf.to_uint8(), mode="RGB").save(path, format="PNG")
