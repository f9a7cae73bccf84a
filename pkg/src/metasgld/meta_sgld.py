"""Alternate-training meta learner: nested Langevin loops with first-order
meta-gradients and online Monte-Carlo tracking of gradient-incoherence and
gradient-norm statistics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (ConfigurationError, P_BATCH, P_DATA, P_MC, P_NOISE_U,
                   P_NOISE_W, P_TASK, P_TEST, P_TRAIN_PROBE, RunConfig,
                   derive_stream, noise_std)
from .model import LossModel, batch_grad, batch_risk
from .task_env import (EnvironmentSpec, TaskDataset, sample_dataset,
                       sample_minibatch, sample_task)
from . import bounds as bounds_mod
from . import evaluate as evaluate_mod
from .records import RunRecord

LEVEL_META_U = "meta_u"
LEVEL_TASK_W = "task_w"


@dataclass(frozen=True)
class InnerPath:
    """One task-adaptation trajectory W^0 = U through W^K."""

    w_steps: List[np.ndarray]          # K+1 vectors
    batches_used: List[np.ndarray]     # K index sets (into ds.samples)
    noise_used: List[np.ndarray]       # K noise vectors

    @property
    def w_final(self) -> np.ndarray:
        return self.w_steps[-1]


@dataclass(frozen=True)
class IncoherenceSample:
    eps: np.ndarray
    sq_norm: float
    level: str                          # meta_u / task_w
    coords: Tuple[int, int, int, int]   # (t, i, k, replica)


@dataclass
class BoundAccumulators:
    """Running sums feeding the incoherence bound and its gradient-norm analogue."""

    eps_u_sum: float = 0.0
    eps_w_sum: float = 0.0
    gnorm_u_sum: float = 0.0
    gnorm_w_sum: float = 0.0
    lipschitz_max: float = 0.0

    def add_w(self, eps_term: float, gnorm_term: float) -> None:
        if eps_term < 0 or gnorm_term < 0:
            raise ValueError("accumulator increments must be non-negative")
        self.eps_w_sum += eps_term
        self.gnorm_w_sum += gnorm_term

    def add_u(self, eps_term: float, gnorm_term: float) -> None:
        if eps_term < 0 or gnorm_term < 0:
            raise ValueError("accumulator increments must be non-negative")
        self.eps_u_sum += eps_term
        self.gnorm_u_sum += gnorm_term

    def see_gradient(self, grad: np.ndarray) -> None:
        self.lipschitz_max = max(self.lipschitz_max, float(np.linalg.norm(grad)))


def _union_batch_size(cfg: RunConfig) -> int:
    # full-batch inner updates pair with full-union incoherence probes
    return cfg.inner_batch


def inner_adapt(u: np.ndarray, model: LossModel, ds: TaskDataset, cfg: RunConfig,
                t: int, task_slot: int, replica: int = 0,
                collect: Optional[BoundAccumulators] = None) -> InnerPath:
    """K Langevin steps from U on tr-source batches.

    When ``collect`` is given, each step also probes the union source with
    ``mc_replicas`` batches, forms eps^w = grad_union - grad_tr at the current
    W, and adds beta*gamma*mean(||eps^w||^2)/2 to eps_w_sum (gradient-norm and
    Lipschitz analogues updated with identical weighting).
    """
    if cfg.m_tr >= 1 and ds.tr_indices.size == 0:
        raise RuntimeError("dataset has an empty tr split despite m_tr >= 1")
    s = cfg.schedules
    noise_path = (P_NOISE_W, t, task_slot) if replica == 0 else (P_MC, t, task_slot, replica)
    noise_rng = derive_stream(cfg.seed, noise_path)
    batch_rng = derive_stream(cfg.seed, (P_BATCH, t, task_slot, replica))

    w = np.asarray(u, dtype=float).copy()
    w_steps = [w.copy()]
    batches_used: List[np.ndarray] = []
    noise_used: List[np.ndarray] = []
    b_union = _union_batch_size(cfg)

    for k in range(1, cfg.K + 1):
        beta = s.inner_lr(t, k)
        tr_idx = sample_minibatch(ds, "tr", cfg.inner_batch, batch_rng)
        g_tr = batch_grad(model, w, ds.samples[tr_idx])

        if collect is not None:
            eps_sq = 0.0
            gn_sq = 0.0
            for _ in range(cfg.mc_replicas):
                un_idx = sample_minibatch(ds, "union", b_union, batch_rng)
                g_un = batch_grad(model, w, ds.samples[un_idx])
                e = g_un - g_tr
                eps_sq += float(e @ e)
                gn_sq += float(g_un @ g_un)
                collect.see_gradient(g_un)
            weight = beta * s.gamma_inner / 2.0
            collect.add_w(weight * eps_sq / cfg.mc_replicas,
                          weight * gn_sq / cfg.mc_replicas)

        std = noise_std(beta, s.gamma_inner) if cfg.noise else 0.0
        zeta = std * noise_rng.standard_normal(model.dim)
        w = w - beta * g_tr + zeta
        w_steps.append(w.copy())
        batches_used.append(tr_idx)
        noise_used.append(zeta)

    return InnerPath(w_steps=w_steps, batches_used=batches_used, noise_used=noise_used)


def meta_gradient_first_order(model: LossModel, paths: Sequence[InnerPath],
                              datasets: Sequence[TaskDataset],
                              eval_source: str) -> np.ndarray:
    """(1/|I_t|) sum_i grad of the eval-source risk taken at the adapted W^K_i."""
    if len(paths) != len(datasets) or len(paths) == 0:
        raise ValueError("need one non-empty path per dataset")
    g = np.zeros(model.dim)
    for path, ds in zip(paths, datasets):
        if eval_source == "va":
            batch = ds.va
        elif eval_source == "tr":
            batch = ds.tr
        elif eval_source == "union":
            batch = ds.samples
        else:
            raise ValueError(f"eval_source must be va/tr/union, got {eval_source!r}")
        if batch.shape[0] == 0:
            raise ValueError(f"eval source {eval_source!r} is empty for a task")
        g += batch_grad(model, path.w_final, batch)
    return g / len(paths)


def eps_u_samples(u: np.ndarray, model: LossModel,
                  task_batch: Sequence[TaskDataset], cfg: RunConfig,
                  t: int) -> List[IncoherenceSample]:
    """Per-replica meta-level incoherence samples.

    Each replica reruns every task's inner path on a fresh stream, then
    evaluates the first-order meta-gradient on the union source (g_full) and on
    the tr source (g_tr) at the same adapted parameters; eps^u = g_full - g_tr.
    """
    if len(task_batch) == 0:
        raise ValueError("task_batch must be non-empty")
    out: List[IncoherenceSample] = []
    for r in range(1, cfg.mc_replicas + 1):
        paths = [inner_adapt(u, model, ds, cfg, t, i, replica=r)
                 for i, ds in enumerate(task_batch)]
        g_full = meta_gradient_first_order(model, paths, task_batch, "union")
        g_tr = meta_gradient_first_order(model, paths, task_batch, "tr")
        eps = g_full - g_tr
        out.append(IncoherenceSample(eps=eps, sq_norm=float(eps @ eps),
                                     level=LEVEL_META_U, coords=(t, -1, -1, r)))
    return out


def estimate_eps_u(u: np.ndarray, model: LossModel,
                   task_batch: Sequence[TaskDataset], cfg: RunConfig, t: int,
                   acc: Optional[BoundAccumulators] = None
                   ) -> Tuple[float, float]:
    """Monte-Carlo terms eta*gamma*mean(||eps^u||^2)/2 and the g_full-norm analogue."""
    if len(task_batch) == 0:
        raise ValueError("task_batch must be non-empty")
    s = cfg.schedules
    eta = s.outer_lr(t)
    eps_sq = 0.0
    gn_sq = 0.0
    for r in range(1, cfg.mc_replicas + 1):
        paths = [inner_adapt(u, model, ds, cfg, t, i, replica=r)
                 for i, ds in enumerate(task_batch)]
        g_full = meta_gradient_first_order(model, paths, task_batch, "union")
        g_tr = meta_gradient_first_order(model, paths, task_batch, "tr")
        e = g_full - g_tr
        eps_sq += float(e @ e)
        gn_sq += float(g_full @ g_full)
        if acc is not None:
            acc.see_gradient(g_full)
    weight = eta * s.gamma_outer / 2.0
    return (weight * eps_sq / cfg.mc_replicas, weight * gn_sq / cfg.mc_replicas)


def outer_step(u: np.ndarray, model: LossModel,
               task_batch: Sequence[TaskDataset], cfg: RunConfig, t: int,
               acc: BoundAccumulators) -> Tuple[np.ndarray, float]:
    """One meta iteration: live inner paths (collecting task-level terms,
    averaged over the task batch), meta-level incoherence estimation, then a
    Langevin meta-step on the va-evaluated first-order meta-gradient.

    Returns the new U and the mean va risk of the adapted parameters.
    """
    if len(task_batch) != cfg.task_batch:
        raise ValueError(f"expected {cfg.task_batch} tasks, got {len(task_batch)}")
    s = cfg.schedules

    # live paths with task-level collection, averaged over the task batch
    task_acc = BoundAccumulators()
    paths = [inner_adapt(u, model, ds, cfg, t, i, replica=0, collect=task_acc)
             for i, ds in enumerate(task_batch)]
    bt = len(task_batch)
    acc.add_w(task_acc.eps_w_sum / bt, task_acc.gnorm_w_sum / bt)
    acc.lipschitz_max = max(acc.lipschitz_max, task_acc.lipschitz_max)

    eps_u_term, gnorm_u_term = estimate_eps_u(u, model, task_batch, cfg, t, acc=acc)
    acc.add_u(eps_u_term, gnorm_u_term)

    if cfg.m_va < 1:
        raise ConfigurationError("outer update needs m_va >= 1 (va split empty)")
    meta_grad = meta_gradient_first_order(model, paths, task_batch, "va")
    eta = s.outer_lr(t)
    std = noise_std(eta, s.gamma_outer) if cfg.noise else 0.0
    xi = std * derive_stream(cfg.seed, (P_NOISE_U, t)).standard_normal(model.dim)
    u_next = u - eta * meta_grad + xi

    train_risk = float(np.mean([batch_risk(model, p.w_final, ds.va)
                                for p, ds in zip(paths, task_batch)]))
    return u_next, train_risk


def draw_task_batch(env: EnvironmentSpec, cfg: RunConfig, t: int) -> List[TaskDataset]:
    """Fresh tasks and datasets for outer iteration t, one stream pair per slot."""
    out = []
    for i in range(cfg.task_batch):
        task = sample_task(env, derive_stream(cfg.seed, (P_TASK, t, i)))
        ds = sample_dataset(task, env, cfg.m, cfg.m_tr,
                            derive_stream(cfg.seed, (P_DATA, t, i)))
        out.append(ds)
    return out


def run_meta_sgld(cfg: RunConfig, env: EnvironmentSpec,
                  eval_cadence: int = 0, n_test: int = 500,
                  n_train_probe: int = 500,
                  sg: Optional[bounds_mod.SubgaussianSpec] = None
                  ) -> Tuple[List[RunRecord], np.ndarray]:
    """Full alternate-training run.

    Returns the per-epoch records and the final meta parameter.  A positive
    ``eval_cadence`` fills the train/test/gap fields every that many epochs
    (and always at the final epoch).
    """
    if cfg.m_va < 1:
        raise ConfigurationError("alternate training requires m_va >= 1")
    model = LossModel(dim=env.dim)
    if sg is None:
        sg = bounds_mod.subgaussian_mean_estimation(env, cfg.schedules.beta0)
    u = (np.array(cfg.init_u, dtype=float) if cfg.init_u is not None
         else np.zeros(env.dim))
    if u.shape != (env.dim,):
        raise ConfigurationError(f"init_u must have length {env.dim}")

    acc = BoundAccumulators()
    records: List[RunRecord] = []
    for t in range(1, cfg.T + 1):
        task_batch = draw_task_batch(env, cfg, t)
        u, train_risk = outer_step(u, model, task_batch, cfg, t, acc)
        if not (np.all(np.isfinite(u)) and np.isfinite(train_risk)):
            raise FloatingPointError(f"meta parameter became non-finite at epoch {t}")
        ab = bounds_mod.assemble_alt_bound(acc, sg, cfg.n, cfg.m_va)

        train_loss = test_loss = gap = None
        if eval_cadence > 0 and (t % eval_cadence == 0 or t == cfg.T):
            rep = evaluate_mod.observed_gap(
                u, env, cfg, n_train_probe, n_test,
                test_stream=derive_stream(cfg.seed, (P_TEST, t)),
                train_stream=derive_stream(cfg.seed, (P_TRAIN_PROBE, t)),
                epoch=t)
            train_loss, test_loss, gap = rep.train_loss, rep.test_loss, rep.gap

        records.append(RunRecord(
            epoch=t,
            eps_u=acc.eps_u_sum, eps_w=acc.eps_w_sum,
            gnorm_u=acc.gnorm_u_sum, gnorm_w=acc.gnorm_w_sum,
            lipschitz=acc.lipschitz_max,
            bound_u=ab.bound_u, bound_w=ab.bound_w, bound_total=ab.bound_total,
            gnorm_bound_u=ab.gnorm_u, gnorm_bound_w=ab.gnorm_w,
            gnorm_bound_total=ab.gnorm_total,
            train_loss=train_loss, test_loss=test_loss, gap=gap))
    return records, u
