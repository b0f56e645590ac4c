"""The four-stage enhancement pipeline.

    preprocess -> invert (record features) -> renormalize -> denoise
    (replay features) -> decode

Preprocessing lifts very dark inputs to a minimum average intensity and
reflect-pads to the granularity the codec/backend pair needs.  Inversion
walks the clean latent to t=T with the cache in record mode.  The noisy
latent's per-channel statistics are then matched to a seeded standard
normal draw (channelwise adaptive renormalization), and the sampling walk
back to t=0 replays the recorded features at the mirrored timesteps.

Feature/timestep alignment: the features recorded while stepping t->t+1
(conditioning label t+1) are replayed while stepping t+1->t (same label).
Either side conditions on the label of the transition's upper end, so a
T-step run touches labels 1..T exactly once in each direction.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .backends import AttentionCache, DenoiserBackend, TapConfig, predict
from .codec import DECODER_VARIANTS, LatentCodec, decode, encode
from .errors import (
    ConfigurationError,
    DegenerateChannelError,
    DegenerateInputError,
    PaddingError,
)
from .images import ImageBuffer
from .schedule import (
    SCHEDULE_KINDS,
    LatentState,
    NoiseSchedule,
    build_schedule,
    ddim_invert_step,
    ddim_sample_step,
)

FEATURE_SOURCES = ("inversion", "sampling")

# slack on the mean-intensity comparison: a freshly scaled image computes
# back to the threshold only up to float rounding, and must not rescale
_MEAN_SLACK = 1e-9

# a channel with spatial std below this cannot be renormalized
_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs beyond the codec/backend/schedule objects.

    ``intensity_threshold`` of None disables the preprocessing lift.
    ``adain_channel_mask`` of None renormalizes every latent channel;
    ``adain_enabled`` False skips renormalization entirely.
    ``feature_source`` picks where replayed features come from: the
    inversion pass (default) or a preliminary vanilla sampling pass.
    """

    intensity_threshold: float | None = 30.0
    steps: int = 25
    seed: int = 0
    adain_enabled: bool = True
    adain_channel_mask: tuple[int, ...] | None = None
    tap: TapConfig = field(default_factory=TapConfig)
    feature_source: str = "inversion"
    decoder_variant: str = "alternate"
    schedule_kind: str = "linear-beta"

    def __post_init__(self):
        if self.intensity_threshold is not None:
            thr = float(self.intensity_threshold)
            if not (0.0 < thr < 255.0):
                raise ConfigurationError(f"intensity_threshold {thr} outside (0, 255)")
            object.__setattr__(self, "intensity_threshold", thr)
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.feature_source not in FEATURE_SOURCES:
            raise ConfigurationError(
                f"feature_source {self.feature_source!r} not in {FEATURE_SOURCES}"
            )
        if self.decoder_variant not in DECODER_VARIANTS:
            raise ConfigurationError(
                f"decoder_variant {self.decoder_variant!r} not in {DECODER_VARIANTS}"
            )
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise ConfigurationError(
                f"schedule_kind {self.schedule_kind!r} not in {SCHEDULE_KINDS}"
            )
        if self.adain_channel_mask is not None:
            mask = tuple(sorted({int(c) for c in self.adain_channel_mask}))
            if mask and mask[0] < 0:
                raise ConfigurationError("adain_channel_mask indices must be non-negative")
            object.__setattr__(self, "adain_channel_mask", mask)


def _pad_to_granularity(img: ImageBuffer, granularity: int) -> ImageBuffer:
    h, w = img.height, img.width
    ph = (-h) % granularity
    pw = (-w) % granularity
    if ph == 0 and pw == 0:
        if img.orig_size is not None:
            return img
        return ImageBuffer(pixels=img.pixels, orig_size=(h, w), pad_offset=(0, 0))
    top, left = ph // 2, pw // 2
    try:
        padded = np.pad(
            img.pixels, ((top, ph - top), (left, pw - left), (0, 0)), mode="reflect"
        )
    except ValueError as exc:
        raise PaddingError(
            f"cannot reflect-pad {h}x{w} image to a multiple of {granularity}: {exc}"
        ) from exc
    if img.orig_size is None:
        orig, off = (h, w), (top, left)
    else:
        orig = img.orig_size
        off = (img.pad_offset[0] + top, img.pad_offset[1] + left)
    return ImageBuffer(pixels=padded, orig_size=orig, pad_offset=off)


def preprocess(img: ImageBuffer, threshold: float | None, granularity: int = 4) -> ImageBuffer:
    """Lift dark inputs to the target mean intensity, then pad.

    The mean is taken over the original (pre-padding) region on the 0..255
    scale.  Below-threshold images are multiplied by threshold/mean in one
    shot and clamped, so heavy clamping can leave the result slightly
    under the threshold; already-bright images pass through bitwise (apart
    from padding).  All-zero input cannot be lifted and raises.
    """
    if granularity < 1:
        raise ConfigurationError(f"granularity must be >= 1, got {granularity}")
    out = img
    if threshold is not None:
        mean = img.mean_intensity()
        if mean < threshold - _MEAN_SLACK:
            if mean == 0.0:
                raise DegenerateInputError(
                    "input mean intensity is 0 (all-black image); "
                    "scaling to the target level is undefined"
                )
            factor = threshold / mean
            lifted = np.clip(img.as_float01() * factor, 0.0, 1.0)
            out = ImageBuffer(pixels=lifted, orig_size=img.orig_size, pad_offset=img.pad_offset)
    return _pad_to_granularity(out, granularity)


def invert(img: ImageBuffer, codec: LatentCodec, backend: DenoiserBackend,
           sched: NoiseSchedule, tap: TapConfig) -> tuple[LatentState, AttentionCache]:
    """Encode and walk to t=T, recording tapped features at labels 1..T."""
    z = encode(codec, img)
    cache = AttentionCache(mode="record")
    for t in range(sched.T):
        label = sched.timestep_map[t + 1]
        eps = predict(backend, z, label, cache=cache, tap=tap)
        z = ddim_invert_step(z, eps, sched)
    return z, cache


def draw_style_latent(shape: tuple[int, int, int], seed: int) -> np.ndarray:
    """The seeded standard-normal reference latent z_s."""
    return np.random.default_rng(seed).standard_normal(shape)


def adain_to_reference(z: LatentState, reference: np.ndarray,
                       channel_mask: tuple[int, ...] | None = None) -> LatentState:
    """Match per-channel spatial mean/std of z to those of the reference.

    Implemented as the affine form out = r*z + (mu_ref - r*mu_z) with
    r = std_ref/std_z (population std), which is algebraically the usual
    normalize-then-restyle and exactly the identity when z equals the
    reference bitwise.  Unmasked channels pass through untouched.
    """
    data = z.data
    reference = np.asarray(reference, dtype=np.float64)
    if reference.shape != data.shape:
        raise ConfigurationError(
            f"reference shape {reference.shape} does not match latent {data.shape}"
        )
    channels = data.shape[0]
    if channel_mask is None:
        selected = range(channels)
    else:
        bad = [c for c in channel_mask if c >= channels]
        if bad:
            raise ConfigurationError(
                f"channel mask indices {bad} out of range for {channels}-channel latent"
            )
        selected = channel_mask
    out = data.copy()
    for c in selected:
        std_c = float(data[c].std())
        if std_c < _STD_FLOOR:
            raise DegenerateChannelError(c, std_c)
        r = float(reference[c].std()) / std_c
        out[c] = r * data[c] + (float(reference[c].mean()) - r * float(data[c].mean()))
    return LatentState(data=out, t=z.t)


def adain(z: LatentState, seed: int,
          channel_mask: tuple[int, ...] | None = None) -> LatentState:
    return adain_to_reference(z, draw_style_latent(z.shape, seed), channel_mask)


def denoise_with_injection(z: LatentState, cache: AttentionCache, codec: LatentCodec,
                           backend: DenoiserBackend, sched: NoiseSchedule, tap: TapConfig,
                           crop_like: ImageBuffer | None = None) -> ImageBuffer:
    """Sample back to t=0 replaying cached features, decode, crop padding.

    The step that produces z_{t-1} conditions on (and injects features
    cached at) label t.  A missing entry aborts with the (layer, t) pair.
    """
    cache.set_mode("replay")
    for t in range(sched.T, 0, -1):
        label = sched.timestep_map[t]
        eps = predict(backend, z, label, cache=cache, tap=tap)
        z = ddim_sample_step(z, eps, sched)
    img = decode(codec, z)
    if crop_like is not None and crop_like.orig_size is not None:
        img = ImageBuffer(pixels=img.pixels, orig_size=crop_like.orig_size,
                          pad_offset=crop_like.pad_offset).crop_to_original()
    return img


def _record_sampling_features(z: LatentState, backend: DenoiserBackend,
                              sched: NoiseSchedule, tap: TapConfig) -> AttentionCache:
    # preliminary vanilla sampling pass from z, kept only for its cache
    cache = AttentionCache(mode="record")
    for t in range(sched.T, 0, -1):
        label = sched.timestep_map[t]
        eps = predict(backend, z, label, cache=cache, tap=tap)
        z = ddim_sample_step(z, eps, sched)
    return cache


def enhance(img: ImageBuffer, cfg: PipelineConfig, codec: LatentCodec,
            backend: DenoiserBackend, sched: NoiseSchedule | None = None) -> ImageBuffer:
    """Full pipeline; returns the 8-bit output image at the input's dims."""
    if sched is None:
        sched = build_schedule(cfg.schedule_kind, cfg.steps)
    elif sched.T != cfg.steps:
        raise ConfigurationError(f"schedule has T={sched.T} but config says steps={cfg.steps}")
    codec = dataclasses.replace(codec, decoder_variant=cfg.decoder_variant)
    granularity = codec.downscale * backend.patch
    pre = preprocess(img, cfg.intensity_threshold, granularity)
    z_noisy, cache = invert(pre, codec, backend, sched, cfg.tap)
    if cfg.adain_enabled:
        z_noisy = adain(z_noisy, cfg.seed, cfg.adain_channel_mask)
    if cfg.feature_source == "sampling":
        cache = _record_sampling_features(z_noisy, backend, sched, cfg.tap)
    out = denoise_with_injection(z_noisy, cache, codec, backend, sched, cfg.tap, crop_like=pre)
    return ImageBuffer(pixels=out.to_uint8())


def config_from_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse the flat `key = value` config format into a PipelineConfig.

    Unknown keys are errors.  `#` starts a comment; blank lines are
    skipped.  Tap settings use the keys feature_kind, block_scope
    (comma-separated), layer_filter (comma-separated), replace_query.
    """
    base = base if base is not None else PipelineConfig()
    cfg: dict = {}
    tap_kw: dict = {}

    def parse_bool(raw: str, key: str) -> bool:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key == "intensity_threshold":
            cfg[key] = None if raw.lower() == "none" else float(raw)
        elif key in ("steps", "seed"):
            cfg[key] = int(raw)
        elif key == "adain_enabled":
            cfg[key] = parse_bool(raw, key)
        elif key == "adain_channel_mask":
            cfg[key] = None if raw.lower() == "all" else tuple(
                int(v) for v in raw.split(",") if v.strip()
            )
        elif key in ("feature_source", "decoder_variant", "schedule_kind"):
            cfg[key] = raw
        elif key == "feature_kind":
            tap_kw["feature_kind"] = raw
        elif key == "block_scope":
            tap_kw["block_scope"] = frozenset(v.strip() for v in raw.split(",") if v.strip())
        elif key == "layer_filter":
            tap_kw["layer_filter"] = frozenset(v.strip() for v in raw.split(",") if v.strip())
        elif key == "replace_query":
            tap_kw["replace_query"] = parse_bool(raw, key)
        else:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
    if tap_kw:
        cfg["tap"] = dataclasses.replace(base.tap, **tap_kw)
    return dataclasses.replace(base, **cfg)


def load_config_file(path, base: PipelineConfig | None = None) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read(), base)
