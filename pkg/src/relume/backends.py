"""Denoiser backends and the attention feature tap mechanism.

A backend predicts noise eps(z, t) and exposes a catalog of tappable
layers.  During inversion the pipeline runs the cache in record mode and
each tapped layer stores its feature bundle keyed by (layer_id, t);
during sampling the cache runs in replay mode and the tapped layers use
the stored bundles in place of their freshly computed ones, anchoring the
sampled trajectory's structure to the inverted one.

Two feature kinds exist: ``self-attention`` bundles hold {q, k, v}, each
(heads, tokens, head_dim); ``residual`` bundles hold the block output as
a single tensor {h}, stored in the same rank-3 layout (1, tokens,
channels) so every cache entry serializes uniformly.

The toy backend is an untrained but deterministic little U-Net built from
seeded, spectrally normalized weights.  Its prediction is

    eps(z, t) = g_t * z + net(z, t)

where g_t = sqrt(1 - alpha_bar_t) is the optimal linear coefficient for
unit-variance latents under the backend's own default schedule; the
analytic term keeps renormalized trajectories scale-stable while the
network term supplies the structure that makes feature injection matter.
The network is deliberately attention-heavy so that replaying attention
features visibly changes the output.
"""

from __future__ import annotations

import importlib
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CacheMissError, ConfigurationError, ContractError
from .schedule import LatentState, build_schedule

FEATURE_KINDS = ("self-attention", "residual")
BLOCKS = ("down", "mid", "up")
CACHE_MODES = ("record", "replay", "off")


@dataclass(frozen=True)
class LayerInfo:
    layer_id: str
    kind: str
    block: str

    def __post_init__(self):
        if not self.layer_id or any(ch.isspace() for ch in self.layer_id):
            raise ConfigurationError(f"layer id {self.layer_id!r} must be non-empty, no whitespace")
        if self.kind not in FEATURE_KINDS:
            raise ConfigurationError(f"layer kind {self.kind!r} not in {FEATURE_KINDS}")
        if self.block not in BLOCKS:
            raise ConfigurationError(f"layer block {self.block!r} not in {BLOCKS}")


@dataclass(frozen=True)
class TapConfig:
    """Which layers get recorded/replayed, and how.

    ``replace_query`` selects full {q, k, v} replacement (default) versus
    k,v-only injection, the common alternative where the current query
    attends over cached keys and values.
    """

    feature_kind: str = "self-attention"
    block_scope: frozenset = frozenset({"up"})
    layer_filter: frozenset | None = None
    replace_query: bool = True

    def __post_init__(self):
        if self.feature_kind not in FEATURE_KINDS:
            raise ConfigurationError(f"feature_kind {self.feature_kind!r} not in {FEATURE_KINDS}")
        scope = frozenset(self.block_scope)
        if not scope <= set(BLOCKS):
            raise ConfigurationError(f"block_scope {sorted(scope)} not a subset of {BLOCKS}")
        object.__setattr__(self, "block_scope", scope)
        if self.layer_filter is not None:
            object.__setattr__(self, "layer_filter", frozenset(self.layer_filter))

    def tapped_ids(self, catalog: tuple[LayerInfo, ...]) -> tuple[str, ...]:
        """Resolve the tapped layer ids against a backend's catalog, in catalog order."""
        ids = [
            info.layer_id
            for info in catalog
            if info.kind == self.feature_kind and info.block in self.block_scope
        ]
        if self.layer_filter is not None:
            known = {info.layer_id for info in catalog}
            unknown = self.layer_filter - known
            if unknown:
                raise ConfigurationError(f"layer_filter names unknown layers: {sorted(unknown)}")
            ids = [i for i in ids if i in self.layer_filter]
        return tuple(ids)


class AttentionCache:
    """Feature store keyed by (layer_id, t); single writer, then read-only."""

    def __init__(self, mode: str = "off"):
        self.set_mode(mode)
        self._entries: dict[tuple[str, int], dict[str, np.ndarray]] = {}

    @property
    def mode(self) -> str:
        return self._mode

    def set_mode(self, mode: str) -> None:
        if mode not in CACHE_MODES:
            raise ConfigurationError(f"cache mode {mode!r} not in {CACHE_MODES}")
        self._mode = mode

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self):
        return self._entries.keys()

    def put(self, layer_id: str, t: int, bundle: dict) -> None:
        if self._mode != "record":
            raise ContractError(f"cache.put in mode {self._mode!r}")
        key = (layer_id, int(t))
        if key in self._entries:
            raise ContractError(f"duplicate cache entry for layer {layer_id!r} at t={t}")
        frozen = {}
        for name, arr in bundle.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim != 3:
                raise ContractError(f"cache tensor {name!r} must be rank 3, got {arr.shape}")
            arr = arr.copy()
            arr.setflags(write=False)
            frozen[name] = arr
        self._entries[key] = frozen

    def get(self, layer_id: str, t: int) -> dict:
        try:
            return self._entries[(layer_id, int(t))]
        except KeyError:
            raise CacheMissError(layer_id, t) from None


def save_cache(cache: AttentionCache, directory) -> None:
    """Spill a cache to disk: manifest.txt plus one raw binary blob per entry.

    Manifest lines are `layer_id t dtype heads tokens head_dim filename`.
    A {q,k,v} bundle is stacked into a single (3, heads, tokens, head_dim)
    blob; a single-tensor bundle writes its (heads, tokens, head_dim)
    array directly, so blob size disambiguates the two on load.  Arrays
    are little-endian, row-major.
    """
    import os

    os.makedirs(directory, exist_ok=True)
    lines = []
    for idx, key in enumerate(sorted(cache.keys())):
        layer_id, t = key
        bundle = cache.get(layer_id, t)
        if set(bundle) == {"q", "k", "v"}:
            arr = np.stack([bundle["q"], bundle["k"], bundle["v"]])
            heads, tokens, head_dim = bundle["q"].shape
        elif len(bundle) == 1:
            arr = next(iter(bundle.values()))
            heads, tokens, head_dim = arr.shape
        else:
            raise ContractError(f"unserializable bundle keys {sorted(bundle)} for {key}")
        fname = f"{idx:05d}.bin"
        arr.astype(arr.dtype.newbyteorder("<")).tofile(os.path.join(directory, fname))
        lines.append(f"{layer_id} {t} {arr.dtype.name} {heads} {tokens} {head_dim} {fname}\n")
    with open(os.path.join(directory, "manifest.txt"), "w", encoding="ascii") as fh:
        fh.writelines(lines)


def load_cache(directory) -> AttentionCache:
    """Read a spilled cache back; comes back in replay mode."""
    import os

    cache = AttentionCache(mode="record")
    with open(os.path.join(directory, "manifest.txt"), "r", encoding="ascii") as fh:
        for line in fh:
            if not line.strip():
                continue
            layer_id, t_s, dtype_s, h_s, n_s, d_s, fname = line.split()
            heads, tokens, head_dim = int(h_s), int(n_s), int(d_s)
            dtype = np.dtype(dtype_s).newbyteorder("<")
            raw = np.fromfile(os.path.join(directory, fname), dtype=dtype)
            single = heads * tokens * head_dim
            if raw.size == 3 * single:
                q, k, v = raw.reshape(3, heads, tokens, head_dim)
                cache.put(layer_id, int(t_s), {"q": q, "k": k, "v": v})
            elif raw.size == single:
                cache.put(layer_id, int(t_s), {"h": raw.reshape(heads, tokens, head_dim)})
            else:
                raise ContractError(f"blob {fname} size {raw.size} matches no bundle layout")
    cache.set_mode("replay")
    return cache


class DenoiserBackend:
    """Contract: predict() plus a stable layer catalog.

    External pretrained adapters must subclass (or duck-type) this:
    implement predict(z, t, cache, tap) honoring record/replay semantics
    for every layer they list in layer_catalog, and fill in
    latent_channels / latent_downscale / patch to match their codec.
    """

    latent_channels: int
    latent_downscale: int
    patch: int
    layer_catalog: tuple[LayerInfo, ...]

    def predict(self, z: LatentState, t: int, cache: AttentionCache | None = None,
                tap: TapConfig | None = None) -> np.ndarray:
        raise NotImplementedError


def predict(backend: DenoiserBackend, z: LatentState, t: int,
            cache: AttentionCache | None = None, tap: TapConfig | None = None) -> np.ndarray:
    """Noise prediction with optional feature record/replay (see module doc)."""
    return backend.predict(z, t, cache=cache, tap=tap)


class LinearDenoiser(DenoiserBackend):
    """Oracle backend: eps(z, t) = c[t-1] * z, no tappable layers.

    Closed-form linearity makes full trajectories verifiable by a scalar
    recurrence computed outside the package.
    """

    def __init__(self, coefficients, latent_channels: int = 12, latent_downscale: int = 2):
        self.coefficients = tuple(float(c) for c in coefficients)
        if not self.coefficients:
            raise ConfigurationError("coefficient sequence must be non-empty")
        self.latent_channels = latent_channels
        self.latent_downscale = latent_downscale
        self.patch = 1
        self.layer_catalog = ()

    def predict(self, z, t, cache=None, tap=None):
        if not (1 <= t <= len(self.coefficients)):
            raise ContractError(f"timestep {t} outside 1..{len(self.coefficients)}")
        return self.coefficients[t - 1] * z.data


def build_linear_backend(c, **kwargs) -> LinearDenoiser:
    return LinearDenoiser(c, **kwargs)


# fixed toy geometry; scales keep the net term a perturbation of the
# analytic g_t*z term (so trajectories retrace) while routing most of the
# perturbation through the attention layers (so injection matters)
_WIDTH = 32
_HEADS = 4
_PATCH = 2
_RES_SCALE = 0.02
_ATTN_SCALE = 1.0
_QK_GAIN = 2.0
_V_GAIN = 2.0
_TEMB_SCALE = 0.02
_POS_SCALE = 0.1
_TOKEN_GAIN = 8.0
_SKIP_SCALE = 0.05
_OUT_SCALE = 0.03


def _spectral_normed(rng: np.random.Generator, shape: tuple, gain: float) -> np.ndarray:
    w = rng.standard_normal(shape)
    top = np.linalg.svd(w.reshape(shape[0], -1), compute_uv=False)[0]
    return w * (gain / top)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _sinusoidal(values, dim: int) -> np.ndarray:
    # classic sin/cos frequency ladder; values (...,) -> (..., dim)
    values = np.asarray(values, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = values[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def _pos_embedding(hh: int, ww: int, dim: int) -> np.ndarray:
    # 2D sinusoidal table (hh*ww, dim): rows from the first half, cols second
    rows = _sinusoidal(np.arange(hh, dtype=np.float64), dim // 2)
    cols = _sinusoidal(np.arange(ww, dtype=np.float64), dim // 2)
    grid = np.concatenate(
        [np.repeat(rows, ww, axis=0), np.tile(cols, (hh, 1))], axis=1
    )
    return grid


def _conv3x3(h: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    hp = np.pad(h, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    win = sliding_window_view(hp, (3, 3), axis=(1, 2))
    return np.einsum("dhwij,odij->ohw", win, kernel, optimize=True)


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


class ToyDenoiser(DenoiserBackend):
    """Seeded numpy U-Net stand-in; see module docstring for the math."""

    def __init__(self, seed: int, latent_channels: int, spatial: int, steps: int = 25):
        if spatial % _PATCH:
            raise ConfigurationError(f"spatial {spatial} not divisible by patch {_PATCH}")
        if latent_channels < 1:
            raise ConfigurationError("latent_channels must be >= 1")
        self.seed = int(seed)
        self.latent_channels = int(latent_channels)
        self.latent_downscale = 2
        self.patch = _PATCH
        self.spatial = int(spatial)
        self.steps = int(steps)

        # g_t table from the backend's own default schedule; the network
        # term fades toward the noisy end (alpha_bar^(1/4)) where the step
        # coefficients are large enough to amplify any replay residue
        sched = build_schedule("linear-beta", self.steps)
        self._gain = np.sqrt(1.0 - sched.alpha_bar)
        self._net_scale = sched.alpha_bar ** 0.25

        d = _WIDTH
        rng = np.random.default_rng(self.seed)
        # all weight matrices normalized to unit top singular value, then
        # scaled; keeps the net a documented Lipschitz-bounded map
        self.w_in = _spectral_normed(rng, (d, latent_channels), 1.0)
        self.w_temb = _spectral_normed(rng, (d, d), 1.0)
        self.res_weights = {
            name: (
                _spectral_normed(rng, (d, d, 3, 3), 1.0),
                _spectral_normed(rng, (d, d, 3, 3), 1.0),
            )
            for name in ("down.res0", "mid.res0", "up.res0")
        }
        self.attn_weights = {
            name: {
                "q": _spectral_normed(rng, (d, d), _QK_GAIN),
                "k": _spectral_normed(rng, (d, d), _QK_GAIN),
                "v": _spectral_normed(rng, (d, d), _V_GAIN),
                "o": _spectral_normed(rng, (d, d), 1.0),
            }
            for name in ("up.attn0", "up.attn1")
        }
        self.w_out = _spectral_normed(rng, (latent_channels, d), _OUT_SCALE)

        self.layer_catalog = (
            LayerInfo("down.res0", "residual", "down"),
            LayerInfo("mid.res0", "residual", "mid"),
            LayerInfo("up.attn0", "self-attention", "up"),
            LayerInfo("up.res0", "residual", "up"),
            LayerInfo("up.attn1", "self-attention", "up"),
        )

    def _res_block(self, h: np.ndarray, name: str, t: int,
                   tapped: tuple[str, ...], cache: AttentionCache) -> np.ndarray:
        ka, kb = self.res_weights[name]
        out = h + _RES_SCALE * _conv3x3(_silu(_conv3x3(h, ka)), kb)
        if name in tapped:
            d, hh, ww = out.shape
            if cache.mode == "record":
                cache.put(name, t, {"h": out.transpose(1, 2, 0).reshape(1, hh * ww, d)})
            elif cache.mode == "replay":
                cached = cache.get(name, t)["h"]
                if cached.shape != (1, hh * ww, d):
                    raise ContractError(
                        f"cached residual shape {cached.shape} mismatches layer {name!r} "
                        f"expectation {(1, hh * ww, d)}"
                    )
                out = cached.reshape(hh, ww, d).transpose(2, 0, 1)
        return out

    def _attn_block(self, h: np.ndarray, name: str, t: int,
                    tapped: tuple[str, ...], cache: AttentionCache,
                    replace_query: bool) -> np.ndarray:
        d, hh, ww = h.shape
        n = hh * ww
        dh = d // _HEADS
        w = self.attn_weights[name]
        tokens = _TOKEN_GAIN * h.reshape(d, n).T + _POS_SCALE * _pos_embedding(hh, ww, d)

        def heads_of(mat):
            return (tokens @ mat.T).reshape(n, _HEADS, dh).transpose(1, 0, 2)

        q, k, v = heads_of(w["q"]), heads_of(w["k"]), heads_of(w["v"])
        if name in tapped:
            if cache.mode == "record":
                cache.put(name, t, {"q": q, "k": k, "v": v})
            elif cache.mode == "replay":
                cached = cache.get(name, t)
                for part in ("q", "k", "v"):
                    if cached[part].shape != (_HEADS, n, dh):
                        raise ContractError(
                            f"cached {part} shape {cached[part].shape} mismatches layer "
                            f"{name!r} expectation {(_HEADS, n, dh)}"
                        )
                k, v = cached["k"], cached["v"]
                if replace_query:
                    q = cached["q"]
        att = _softmax(q @ k.transpose(0, 2, 1) / math.sqrt(dh))
        mixed = (att @ v).transpose(1, 0, 2).reshape(n, d)
        return h + _ATTN_SCALE * (mixed @ w["o"].T).T.reshape(d, hh, ww)

    def predict(self, z: LatentState, t: int, cache: AttentionCache | None = None,
                tap: TapConfig | None = None) -> np.ndarray:
        if not (1 <= t <= self.steps):
            raise ContractError(f"timestep {t} outside 1..{self.steps}")
        c, hh, ww = z.data.shape
        if c != self.latent_channels:
            raise ContractError(f"latent has {c} channels, backend expects {self.latent_channels}")
        if hh % _PATCH or ww % _PATCH:
            raise ContractError(f"latent dims {hh}x{ww} not divisible by patch {_PATCH}")
        cache = cache if cache is not None else AttentionCache(mode="off")
        tap = tap if tap is not None else TapConfig()
        tapped = tap.tapped_ids(self.layer_catalog) if cache.mode != "off" else ()

        h = np.einsum("oc,chw->ohw", self.w_in, z.data)
        temb = self.w_temb @ _sinusoidal(np.float64(t), _WIDTH)
        h = h + _TEMB_SCALE * temb[:, None, None]
        h = self._res_block(h, "down.res0", t, tapped, cache)
        h = self._res_block(h, "mid.res0", t, tapped, cache)
        skip = h
        d = h.shape[0]
        h = h.reshape(d, hh // _PATCH, _PATCH, ww // _PATCH, _PATCH).mean(axis=(2, 4))
        h = self._attn_block(h, "up.attn0", t, tapped, cache, tap.replace_query)
        h = self._res_block(h, "up.res0", t, tapped, cache)
        h = self._attn_block(h, "up.attn1", t, tapped, cache, tap.replace_query)
        h = np.repeat(np.repeat(h, _PATCH, axis=1), _PATCH, axis=2)
        h = h + _SKIP_SCALE * skip
        net = np.einsum("oc,chw->ohw", self.w_out, h)
        return self._gain[t] * z.data + self._net_scale[t] * net


def build_toy_backend(seed: int, latent_channels: int = 12, spatial: int = 16,
                      steps: int = 25) -> ToyDenoiser:
    return ToyDenoiser(seed=seed, latent_channels=latent_channels, spatial=spatial, steps=steps)


def load_external_backend(spec: str, **kwargs) -> DenoiserBackend:
    """Load an adapter via a "module:factory" string.

    The named factory is called with **kwargs and must return an object
    satisfying the DenoiserBackend contract (predict with record/replay
    honoring its layer_catalog, plus the geometry fields).  Pretrained
    weights, devices, and heavyweight dependencies all live behind the
    factory; this package never imports them directly.
    """
    module_name, sep, factory_name = spec.partition(":")
    if not sep or not module_name or not factory_name:
        raise ConfigurationError(f"backend spec {spec!r} must look like 'module:factory'")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise ConfigurationError(f"cannot import backend module {module_name!r}: {exc}") from exc
    factory = getattr(module, factory_name, None)
    if factory is None:
        raise ConfigurationError(f"module {module_name!r} has no attribute {factory_name!r}")
    backend = factory(**kwargs)
    for attr in ("predict", "layer_catalog", "latent_channels", "latent_downscale", "patch"):
        if not hasattr(backend, attr):
            raise ConfigurationError(f"external backend lacks required attribute {attr!r}")
    return backend
