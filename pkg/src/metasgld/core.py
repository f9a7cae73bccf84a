"""Shared primitives: schedules, hierarchical RNG streams, run configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """A configuration is structurally valid but unusable (e.g. hopeless rejection sampling)."""


class UndefinedBoundError(ValueError):
    """A bound formula is evaluated outside its domain (e.g. zero noise variance)."""


def as_vector(v, dim: Optional[int] = None) -> np.ndarray:
    """Validate a parameter vector: 1-D, float, finite, optionally of fixed length."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected vector of length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains NaN/Inf")
    return arr


# ---------------------------------------------------------------- schedules

DECAY_CONSTANT = "constant"
DECAY_INVERSE_T = "inverse_t"
DECAY_EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class Schedules:
    """Learning-rate and inverse-temperature settings for the outer and inner loops.

    ``decay_rule`` applies to both learning rates; ``constant`` returns
    eta0/beta0, ``inverse_t`` returns c/t (outer) and c/(t*k) (inner),
    ``exponential`` returns base * rate**(t/period).
    """

    eta0: float
    beta0: float
    gamma_outer: float
    gamma_inner: float
    decay_rule: str = DECAY_CONSTANT
    decay_c: float = 1.0
    decay_rate: float = 0.96
    decay_period: float = 1.0

    def __post_init__(self):
        for name in ("eta0", "beta0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gamma_outer", "gamma_inner"):
            g = getattr(self, name)
            if not (g > 0):  # allows math.inf (noise-off limit)
                raise ValueError(f"{name} must be positive")
        if self.decay_rule not in (DECAY_CONSTANT, DECAY_INVERSE_T, DECAY_EXPONENTIAL):
            raise ValueError(f"unknown decay rule {self.decay_rule!r}")
        if self.decay_rule == DECAY_INVERSE_T and self.decay_c <= 0:
            raise ValueError("inverse_t decay needs c > 0")
        if self.decay_rule == DECAY_EXPONENTIAL and (self.decay_rate <= 0 or self.decay_period <= 0):
            raise ValueError("exponential decay needs rate > 0 and period > 0")

    def outer_lr(self, t: int) -> float:
        return schedule_value(self, "outer_lr", t)

    def inner_lr(self, t: int, k: int) -> float:
        return schedule_value(self, "inner_lr", t, k)


def schedule_value(s: Schedules, which: str, t: int, k: int = 1) -> float:
    """Evaluate the outer (eta_t) or inner (beta_{t,k}) learning rate."""
    if t < 1:
        raise ValueError(f"iteration index t must be >= 1, got {t}")
    if which == "outer_lr":
        base = s.eta0
    elif which == "inner_lr":
        if k < 1:
            raise ValueError(f"inner index k must be >= 1, got {k}")
        base = s.beta0
    else:
        raise ValueError(f"which must be 'outer_lr' or 'inner_lr', got {which!r}")
    if s.decay_rule == DECAY_CONSTANT:
        return base
    if s.decay_rule == DECAY_INVERSE_T:
        return s.decay_c / (t * k if which == "inner_lr" else t)
    return base * s.decay_rate ** (t / s.decay_period)


def noise_std(lr: float, gamma: float) -> float:
    """Langevin noise standard deviation sqrt(2 * lr / gamma).

    gamma = inf is the noise-off limit and yields 0.0.
    """
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if not (gamma > 0):
        raise ValueError(f"gamma must be positive, got {gamma}")
    if math.isinf(gamma):
        return 0.0
    return math.sqrt(2.0 * lr / gamma)


# ---------------------------------------------------------------- RNG streams

# Stream purpose tags: the first path component. Keeping them distinct makes
# every (purpose, t, i, k, r) coordinate an independent reproducible stream.
P_INIT = 1
P_TASK = 2
P_DATA = 3
P_SPLIT = 4
P_BATCH = 5
P_NOISE_U = 6
P_NOISE_W = 7
P_MC = 8
P_TEST = 9
P_TRAIN_PROBE = 10


def derive_stream(master_seed: int, path: Sequence[int]) -> np.random.Generator:
    """Deterministic, independent RNG stream addressed by an integer path.

    Same (master_seed, path) always yields the same generator state; distinct
    paths (or seeds) give statistically independent streams.
    """
    path = tuple(int(p) for p in path)
    if len(path) == 0:
        raise ValueError("stream path must be non-empty")
    ss = np.random.SeedSequence(entropy=int(master_seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=path)
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------- run config

@dataclass(frozen=True)
class RunConfig:
    """Everything a trainer needs besides the task environment."""

    n: int                      # task count entering the bound denominator
    m: int                      # samples per task
    m_tr: int
    m_va: int
    task_batch: int             # |I_t|
    T: int
    K: int
    schedules: Schedules
    seed: int
    mc_replicas: int = 10
    test_adapt_steps: int = 10
    inner_batch: int = 0        # 0 = full-batch inner updates (GLD branch)
    noise: bool = True          # False disables Langevin noise (plain first-order MAML)
    init_u: Optional[tuple] = None   # None = zero vector

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.m_tr + self.m_va != self.m:
            raise ValueError(f"m_tr + m_va must equal m ({self.m_tr}+{self.m_va} != {self.m})")
        if self.m_tr < 1:
            raise ValueError("m_tr must be >= 1 (no inner adaptation possible otherwise)")
        if self.m_va < 0:
            raise ValueError("m_va must be >= 0")
        if not (1 <= self.task_batch <= self.n):
            raise ValueError("task_batch must satisfy 1 <= task_batch <= n")
        if self.T < 0 or self.K < 0:
            raise ValueError("T and K must be non-negative")
        if self.mc_replicas < 1:
            raise ValueError("mc_replicas must be >= 1")
        if self.test_adapt_steps < 0:
            raise ValueError("test_adapt_steps must be >= 0")
        if self.inner_batch < 0 or self.inner_batch > self.m_tr:
            raise ValueError("inner_batch must be in [0, m_tr]")
