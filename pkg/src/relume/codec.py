"""Latent codec: image <-> latent transforms.

The toy codec is exactly invertible so pipeline tests can separate
diffusion-path error from codec error: pixels are normalized to [-1, 1],
folded space-to-depth by a factor of 2 (3 channels -> 12, spatial halved),
then mixed channelwise by a fixed orthogonal matrix.  ``decoder_variant``
selects between the stock decoder and a swapped higher-fidelity one; for
the toy codec both variants are the same exact inverse, the switch exists
so configurations carry through to external codecs that do differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, PaddingError
from .images import ImageBuffer
from .schedule import LatentState

DECODER_VARIANTS = ("default", "alternate")

_MIXING_SEED = 20240117
_FOLD = 2


def _orthogonal_mixing(n: int, seed: int) -> np.ndarray:
    # QR with positive R diagonal: a deterministic orthogonal matrix.
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    q.setflags(write=False)
    return q


@dataclass(frozen=True)
class LatentCodec:
    latent_channels: int
    downscale: int
    scale: float
    decoder_variant: str
    mixing: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.decoder_variant not in DECODER_VARIANTS:
            raise ConfigurationError(
                f"decoder_variant must be one of {DECODER_VARIANTS}, got {self.decoder_variant!r}"
            )
        m = np.asarray(self.mixing, dtype=np.float64)
        if m.shape != (self.latent_channels, self.latent_channels):
            raise ConfigurationError("mixing matrix shape must match latent_channels")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mixing", m)


def build_toy_codec(decoder_variant: str = "default") -> LatentCodec:
    c = 3 * _FOLD * _FOLD
    return LatentCodec(
        latent_channels=c,
        downscale=_FOLD,
        scale=1.0,
        decoder_variant=decoder_variant,
        mixing=_orthogonal_mixing(c, _MIXING_SEED),
    )


def _space_to_depth(x: np.ndarray, f: int) -> np.ndarray:
    # (3, H, W) -> (3*f*f, H/f, W/f), channel-major then row/col offset
    c, h, w = x.shape
    x = x.reshape(c, h // f, f, w // f, f)
    x = x.transpose(0, 2, 4, 1, 3)
    return x.reshape(c * f * f, h // f, w // f)


def _depth_to_space(x: np.ndarray, f: int) -> np.ndarray:
    cff, h, w = x.shape
    c = cff // (f * f)
    x = x.reshape(c, f, f, h, w)
    x = x.transpose(0, 3, 1, 4, 2)
    return x.reshape(c, h * f, w * f)


def encode(codec: LatentCodec, img: ImageBuffer) -> LatentState:
    """Image to clean latent (t=0).

    Requires dims divisible by the codec downscale; the pipeline pads
    before encoding, so a violation here is a padding-contract bug.
    """
    h, w = img.height, img.width
    f = codec.downscale
    if h % f or w % f:
        raise PaddingError(f"image dims {h}x{w} not divisible by downscale {f}; pad first")
    x = img.as_float01().astype(np.float64) * 2.0 - 1.0
    x = x.transpose(2, 0, 1)
    folded = _space_to_depth(x, f)
    mixed = np.einsum("ij,jhw->ihw", codec.mixing, folded)
    return LatentState(data=mixed * codec.scale, t=0)


def decode(codec: LatentCodec, z: LatentState) -> ImageBuffer:
    """Clean latent (t=0) back to an image, clamped to the valid range.

    Both decoder variants apply the same exact inverse for the toy codec.
    """
    if z.t != 0:
        raise ContractError(f"decode requires a clean latent at t=0, got t={z.t}")
    if z.data.shape[0] != codec.latent_channels:
        raise ContractError(
            f"latent has {z.data.shape[0]} channels, codec expects {codec.latent_channels}"
        )
    mixed = z.data / codec.scale
    folded = np.einsum("ij,jhw->ihw", codec.mixing.T, mixed)
    x = _depth_to_space(folded, codec.downscale)
    pixels = np.clip((x.transpose(1, 2, 0) + 1.0) / 2.0, 0.0, 1.0)
    return ImageBuffer(pixels=pixels)
