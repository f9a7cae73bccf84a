"""Observed-generalization measurement: meta-test adaptation on fresh tasks
and the train/test loss gap."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RunConfig
from .model import LossModel, batch_grad, batch_risk
from .task_env import EnvironmentSpec, sample_dataset, sample_task


@dataclass(frozen=True)
class GapReport:
    epoch: int
    train_loss: float
    test_loss: float
    gap: float                  # test_loss - train_loss, exactly
    n_test_tasks: int

    def __post_init__(self):
        if self.gap != self.test_loss - self.train_loss:
            raise ValueError("gap must equal test_loss - train_loss exactly")


def adapt_eval(u: np.ndarray, model: LossModel, env: EnvironmentSpec,
               cfg: RunConfig, n_tasks: int, rng: np.random.Generator,
               eval_source: str = "va") -> float:
    """Average risk after noiseless tr-split fine-tuning on fresh tasks.

    ``eval_source`` selects the split the adapted parameter is scored on:
    "va" (held-out) for test loss, "tr" (the data actually fitted) for the
    train-loss side of the observed gap.
    """
    if n_tasks < 1:
        raise ValueError("need at least one task")
    if eval_source not in ("va", "tr", "union"):
        raise ValueError(f"eval_source must be va/tr/union, got {eval_source!r}")
    if eval_source == "va" and cfg.m_va < 1:
        raise ValueError("va evaluation needs m_va >= 1")
    beta = cfg.schedules.beta0
    total = 0.0
    for _ in range(n_tasks):
        task = sample_task(env, rng)
        ds = sample_dataset(task, env, cfg.m, cfg.m_tr, rng)
        w = np.asarray(u, dtype=float).copy()
        tr = ds.tr
        for _ in range(cfg.test_adapt_steps):
            w = w - beta * batch_grad(model, w, tr)
        batch = {"va": ds.va, "tr": ds.tr, "union": ds.samples}[eval_source]
        total += batch_risk(model, w, batch)
    return total / n_tasks


def meta_test_loss(u: np.ndarray, env: EnvironmentSpec, cfg: RunConfig,
                   n_test: int, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of the population meta risk at U (held-out scoring)."""
    model = LossModel(dim=env.dim)
    return adapt_eval(u, model, env, cfg, n_test, rng, eval_source="va")


def observed_gap(u: np.ndarray, env: EnvironmentSpec, cfg: RunConfig,
                 n_train_probe: int, n_test: int,
                 test_stream: np.random.Generator,
                 train_stream: np.random.Generator,
                 epoch: int = 0,
                 train_eval_source: str = "tr") -> GapReport:
    """Test-minus-train meta loss on fresh tasks from the same environment.

    The test side scores adapted parameters on held-out (va) data.  The train
    side defaults to scoring on the support (tr) data the parameters were
    fitted to, so the gap measures how much held-out performance trails fitted
    performance; pass train_eval_source="va" for a symmetric probe instead.
    """
    model = LossModel(dim=env.dim)
    test_loss = adapt_eval(u, model, env, cfg, n_test, test_stream,
                           eval_source="va")
    train_loss = adapt_eval(u, model, env, cfg, n_train_probe, train_stream,
                            eval_source=train_eval_source)
    return GapReport(epoch=epoch, train_loss=train_loss, test_loss=test_loss,
                     gap=test_loss - train_loss, n_test_tasks=n_test)
