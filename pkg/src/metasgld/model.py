"""Loss models with analytic gradients; mean-estimation square loss is the primary model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_vector

MEAN_ESTIMATION_SQ = "mean_estimation_sq"


@dataclass(frozen=True)
class LossModel:
    dim: int
    kind: str = MEAN_ESTIMATION_SQ

    def __post_init__(self):
        if self.kind != MEAN_ESTIMATION_SQ:
            raise ValueError(f"unsupported loss model {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")


def loss(model: LossModel, w, z) -> float:
    """Per-sample loss ||w - z||^2."""
    w = as_vector(w, model.dim)
    z = as_vector(z, model.dim)
    d = w - z
    return float(d @ d)


def batch_risk(model: LossModel, w, batch) -> float:
    """Empirical risk: mean of per-sample losses over the batch."""
    w = as_vector(w, model.dim)
    batch = _as_batch(batch, model.dim)
    d = w[None, :] - batch
    return float(np.mean(np.sum(d * d, axis=1)))


def batch_grad(model: LossModel, w, batch) -> np.ndarray:
    """Gradient of batch_risk at w; equals 2 (w - mean(batch)) for the quadratic model."""
    w = as_vector(w, model.dim)
    batch = _as_batch(batch, model.dim)
    return 2.0 * (w - batch.mean(axis=0))


def finite_diff_grad(model: LossModel, w, batch, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of batch_risk, the test oracle for batch_grad."""
    if h <= 0:
        raise ValueError("h must be positive")
    w = as_vector(w, model.dim)
    g = np.empty_like(w)
    for i in range(model.dim):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (batch_risk(model, w + e, batch) - batch_risk(model, w - e, batch)) / (2 * h)
    return g


def _as_batch(batch, dim: int) -> np.ndarray:
    arr = np.asarray(batch, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"batch must have shape (n, {dim}), got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    return arr
