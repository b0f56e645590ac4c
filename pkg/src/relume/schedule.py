"""Noise schedules and the deterministic DDIM step pair.

Convention: t=0 is the clean latent, t=T is the fully noised latent.
``alpha_bar[t]`` is the cumulative signal rate at step t, strictly
decreasing from near 1 (clean) to under 0.1 (noisy).

The sampling step and the inversion step are exact algebraic inverses of
each other for a fixed noise prediction.  Both carry the
``sqrt(alpha_bar)`` factor on the noise coefficient; write-ups that drop
that factor from the inversion step describe a recurrence that is *not*
the inverse of the sampling recurrence, so we keep it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, StepOverflowError, StepUnderflowError

# Base training-style schedule the discrete kinds subsample from.
BASE_STEPS = 1000
BETA_START = 1.0e-4
BETA_END = 2.0e-2

SCHEDULE_KINDS = ("linear-beta", "cosine", "external-subsampled")


@dataclass(frozen=True)
class LatentState:
    """A latent tensor (channels, height, width) tagged with its timestep."""

    data: np.ndarray
    t: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ContractError(f"latent must be rank 3 (C, h, w), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ContractError(f"latent at t={self.t} contains non-finite values")
        if self.t < 0:
            raise ContractError(f"negative timestep {self.t}")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal rates alpha_bar[0..T] plus the trained-step mapping."""

    T: int
    alpha_bar: np.ndarray
    timestep_map: tuple[int, ...] = field(default=())

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if self.T < 1:
            raise ConfigurationError(f"step count must be >= 1, got {self.T}")
        if ab.shape != (self.T + 1,):
            raise ConfigurationError(
                f"alpha_bar must have length T+1={self.T + 1}, got {ab.shape}"
            )
        if not np.all(np.isfinite(ab)) or np.any(ab <= 0.0):
            raise ConfigurationError("alpha_bar entries must be finite and positive")
        if np.any(np.diff(ab) >= 0.0):
            raise ConfigurationError("alpha_bar must be strictly decreasing")
        if not (0.99 < ab[0] <= 1.0):
            raise ConfigurationError(f"alpha_bar[0]={ab[0]!r} outside (0.99, 1.0]")
        if not (0.0 < ab[self.T] < 0.1):
            raise ConfigurationError(f"alpha_bar[T]={ab[self.T]!r} outside (0, 0.1)")
        tmap = tuple(int(v) for v in self.timestep_map) if self.timestep_map else tuple(range(self.T + 1))
        if len(tmap) != self.T + 1:
            raise ConfigurationError("timestep_map must have one entry per timestep 0..T")
        ab = ab.copy()
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "timestep_map", tmap)


def _base_alpha_bar() -> np.ndarray:
    betas = np.linspace(BETA_START, BETA_END, BASE_STEPS, dtype=np.float64)
    return np.cumprod(1.0 - betas)


def _subsample_indices(T: int) -> np.ndarray:
    if T > BASE_STEPS - 1:
        raise ConfigurationError(
            f"step count {T} exceeds the {BASE_STEPS}-step base schedule"
        )
    return np.rint(np.arange(T + 1) * (BASE_STEPS - 1) / T).astype(int)


def _cosine_alpha_bar(T: int, s: float = 0.008, max_beta: float = 0.999) -> np.ndarray:
    def f(u: float) -> float:
        return math.cos((u + s) / (1.0 + s) * math.pi / 2.0) ** 2

    ab = np.empty(T + 1, dtype=np.float64)
    ab[0] = 1.0
    for t in range(1, T + 1):
        beta = min(1.0 - f(t / T) / f((t - 1) / T), max_beta)
        ab[t] = ab[t - 1] * (1.0 - beta)
    return ab


def build_schedule(kind: str, T: int) -> NoiseSchedule:
    """Construct a noise schedule of the given kind for T steps.

    ``linear-beta`` and ``external-subsampled`` share the same alpha_bar
    values: betas linearly spaced from 1e-4 to 2e-2 over a 1000-step base
    schedule, then subsampled at T+1 evenly spaced points.  They differ in
    ``timestep_map``: identity for ``linear-beta`` (self-contained
    backends), base-schedule indices for ``external-subsampled`` (adapters
    that must address the trained model's own timesteps).  ``cosine`` is
    the squared-cosine schedule evaluated directly at T+1 points.
    """
    if T < 1:
        raise ConfigurationError(f"step count must be >= 1, got {T}")
    if kind == "linear-beta":
        idx = _subsample_indices(T)
        return NoiseSchedule(T=T, alpha_bar=_base_alpha_bar()[idx])
    if kind == "external-subsampled":
        idx = _subsample_indices(T)
        return NoiseSchedule(
            T=T, alpha_bar=_base_alpha_bar()[idx], timestep_map=tuple(int(i) for i in idx)
        )
    if kind == "cosine":
        return NoiseSchedule(T=T, alpha_bar=_cosine_alpha_bar(T))
    raise ConfigurationError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")


def _check_step_args(z: LatentState, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != z.data.shape:
        raise ContractError(
            f"noise prediction shape {eps.shape} does not match latent shape {z.data.shape}"
        )
    if z.t > sched.T:
        raise ContractError(f"latent timestep {z.t} beyond schedule length {sched.T}")
    return eps


def ddim_sample_step(z: LatentState, eps: np.ndarray, sched: NoiseSchedule) -> LatentState:
    """One deterministic (eta=0) sampling step from timestep t to t-1.

    z_{t-1} = sqrt(ab_{t-1}/ab_t) * z_t
              + (sqrt(1/ab_{t-1} - 1) - sqrt(1/ab_t - 1)) * sqrt(ab_{t-1}) * eps
    """
    eps = _check_step_args(z, eps, sched)
    if z.t < 1:
        raise StepUnderflowError("cannot sample below timestep 0")
    ab_t = sched.alpha_bar[z.t]
    ab_prev = sched.alpha_bar[z.t - 1]
    scale = math.sqrt(ab_prev / ab_t)
    coef = (math.sqrt(1.0 / ab_prev - 1.0) - math.sqrt(1.0 / ab_t - 1.0)) * math.sqrt(ab_prev)
    return LatentState(data=scale * z.data + coef * eps, t=z.t - 1)


def ddim_invert_step(z: LatentState, eps: np.ndarray, sched: NoiseSchedule) -> LatentState:
    """One inversion step from timestep t to t+1; exact inverse of the sampling step.

    z_{t+1} = sqrt(ab_{t+1}/ab_t) * z_t
              + (sqrt(1/ab_{t+1} - 1) - sqrt(1/ab_t - 1)) * sqrt(ab_{t+1}) * eps
    """
    eps = _check_step_args(z, eps, sched)
    if z.t > sched.T - 1:
        raise StepOverflowError(f"cannot invert beyond timestep {sched.T}")
    ab_t = sched.alpha_bar[z.t]
    ab_next = sched.alpha_bar[z.t + 1]
    scale = math.sqrt(ab_next / ab_t)
    coef = (math.sqrt(1.0 / ab_next - 1.0) - math.sqrt(1.0 / ab_t - 1.0)) * math.sqrt(ab_next)
    return LatentState(data=scale * z.data + coef * eps, t=z.t + 1)


def sample_coef(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    """(scale, noise coefficient) of the sampling step t -> t-1."""
    ab_t = sched.alpha_bar[t]
    ab_prev = sched.alpha_bar[t - 1]
    scale = math.sqrt(ab_prev / ab_t)
    coef = (math.sqrt(1.0 / ab_prev - 1.0) - math.sqrt(1.0 / ab_t - 1.0)) * math.sqrt(ab_prev)
    return scale, coef


def invert_coef(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    """(scale, noise coefficient) of the inversion step t -> t+1."""
    ab_t = sched.alpha_bar[t]
    ab_next = sched.alpha_bar[t + 1]
    scale = math.sqrt(ab_next / ab_t)
    coef = (math.sqrt(1.0 / ab_next - 1.0) - math.sqrt(1.0 / ab_t - 1.0)) * math.sqrt(ab_next)
    return scale, coef


def dump_schedule(sched: NoiseSchedule, path) -> None:
    """Write the schedule as a plain-text table: one ``t alpha_bar`` line per step.

    Values are printed with 17 significant digits (never stripped), enough
    to round-trip float64 exactly.  The timestep map is not part of the
    table; loaded schedules get the identity map.
    """
    with open(path, "w", encoding="ascii") as fh:
        for t in range(sched.T + 1):
            digits = np.format_float_positional(
                sched.alpha_bar[t], precision=17, unique=False, fractional=False
            )
            fh.write(f"{t} {digits}\n")


def load_schedule(path) -> NoiseSchedule:
    """Read a schedule written by :func:`dump_schedule`."""
    ts, values = [], []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t_str, a_str = line.split()
            ts.append(int(t_str))
            values.append(float(a_str))
    if ts != list(range(len(ts))) or len(ts) < 2:
        raise ConfigurationError("schedule table must list timesteps 0..T in order")
    return NoiseSchedule(T=len(ts) - 1, alpha_bar=np.array(values, dtype=np.float64))
