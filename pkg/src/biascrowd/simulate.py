"""Synthetic data generation, label subsampling, and harmful-worker injection.

The synthetic generator draws an observation rate and a correct-answer rate
for every (worker, task) pair from a bivariate Gaussian with a configurable
correlation, clips both to [0, 1], observes labels as Bernoulli events, and
corrupts wrong answers uniformly over the remaining classes. All randomness
flows through one seeded generator in a fixed draw order, so a fixed seed
gives bit-identical datasets and varying only the correlation reuses the
same underlying noise (common random numbers across a sweep).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .data import LabelDataset, PropensityMatrix
from .errors import ConfigError

InjectionKind = Literal["spam", "colluding"]


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings; defaults give about 3 labels per task."""

    n_workers: int = 20
    n_tasks: int = 100
    n_classes: int = 2
    mean_propensity: float = 0.15
    mean_correct: float = 0.75
    sd_propensity: float = 0.075
    sd_correct: float = 0.125
    rho: float = 0.0
    seed: int = 0
    clip_floor: float = 0.01

    def __post_init__(self):
        if self.sd_propensity <= 0 or self.sd_correct <= 0:
            raise ConfigError("standard deviations must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [-1, 1]")
        if not 0 < self.clip_floor < 0.5:
            raise ConfigError("clip_floor must lie in (0, 0.5)")
        if self.n_workers < 1 or self.n_tasks < 1 or self.n_classes < 2:
            raise ConfigError("invalid dimensions")


@dataclass(frozen=True)
class InjectionConfig:
    """How many harmful workers to add, either directly or as a label share."""

    kind: InjectionKind
    count: int | None = None
    fraction: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("spam", "colluding"):
            raise ConfigError(f"unknown injection kind {self.kind!r}")
        if (self.count is None) == (self.fraction is None):
            raise ConfigError("set exactly one of count or fraction")
        if self.count is not None and self.count < 0:
            raise ConfigError("count must be nonnegative")
        if self.fraction is not None and not 0.0 <= self.fraction <= 0.5:
            raise ConfigError("fraction must lie in [0, 0.5]")

    def resolve_count(self, ds: LabelDataset) -> int:
        """Worker count for this config; fractions round down to stay under cap."""
        if self.count is not None:
            return self.count
        if self.fraction == 0.0:
            return 0
        # fraction f of all labels: s*m / (s*m + N) = f  =>  s = f*N / ((1-f)*m)
        return int(self.fraction * ds.n_labels / ((1.0 - self.fraction) * ds.n_tasks))


def sample_rate_pairs(
    cfg: SynthConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Unclipped (observation rate, correct rate) draws for every pair.

    Built from shared standard normals so that sweeping ``rho`` with a fixed
    seed perturbs only the correlation structure.
    """
    shape = (cfg.n_workers, cfg.n_tasks)
    base = rng.standard_normal(shape)
    extra = rng.standard_normal(shape)
    obs_rate = cfg.mean_propensity + cfg.sd_propensity * base
    mix = cfg.rho * base + np.sqrt(max(0.0, 1.0 - cfg.rho**2)) * extra
    correct_rate = cfg.mean_correct + cfg.sd_correct * mix
    return obs_rate, correct_rate


def generate_synthetic(cfg: SynthConfig) -> tuple[LabelDataset, PropensityMatrix]:
    """Draw one synthetic dataset plus its true (clipped) propensities.

    Gold labels are uniform over the classes. Cells whose observation rate
    clips to 0 never produce labels; they are floored at ``cfg.clip_floor``
    in the returned matrix only to keep it strictly positive.
    """
    rng = np.random.default_rng(cfg.seed)
    n, m, k = cfg.n_workers, cfg.n_tasks, cfg.n_classes
    gold = rng.integers(0, k, size=m)
    obs_rate_raw, correct_rate_raw = sample_rate_pairs(cfg, rng)
    u_observe = rng.random((n, m))
    u_correct = rng.random((n, m))
    u_wrong = rng.random((n, m))

    obs_rate = np.clip(obs_rate_raw, 0.0, 1.0)
    correct_rate = np.clip(correct_rate_raw, 0.0, 1.0)
    observed = u_observe < obs_rate
    is_correct = u_correct < correct_rate
    # uniform over the K-1 wrong classes; for K=2 this is the deterministic flip
    offsets = 1 + np.minimum((u_wrong * (k - 1)).astype(np.int64), k - 2)
    full_labels = np.where(is_correct, gold[None, :], (gold[None, :] + offsets) % k)

    workers, tasks = np.nonzero(observed)
    ds = LabelDataset(
        n_workers=n,
        n_tasks=m,
        n_classes=k,
        workers=workers,
        tasks=tasks,
        labels=full_labels[observed],
        gold={j: int(z) for j, z in enumerate(gold)},
    )
    truth = PropensityMatrix(np.where(obs_rate > 0, obs_rate, cfg.clip_floor))
    return ds, truth


def subsample_labels(ds: LabelDataset, labels_per_task: int, seed: int) -> LabelDataset:
    """Keep at most ``labels_per_task`` labels per task, uniformly at random.

    Tasks with fewer labels keep everything; workers left with no labels stay
    in the indexing so propensity matrices keep their shape. Gold labels and
    token names carry over unchanged.
    """
    if labels_per_task < 1:
        raise ConfigError("labels_per_task must be >= 1")
    rng = np.random.default_rng(seed)
    order = np.argsort(ds.tasks, kind="stable")
    sorted_tasks = ds.tasks[order]
    boundaries = np.searchsorted(sorted_tasks, np.arange(ds.n_tasks + 1))
    keep: list[np.ndarray] = []
    for j in range(ds.n_tasks):
        members = order[boundaries[j] : boundaries[j + 1]]
        if members.size > labels_per_task:
            members = rng.choice(members, size=labels_per_task, replace=False)
        keep.append(members)
    kept = np.sort(np.concatenate(keep)) if keep else np.empty(0, dtype=np.int64)
    return LabelDataset(
        n_workers=ds.n_workers,
        n_tasks=ds.n_tasks,
        n_classes=ds.n_classes,
        workers=ds.workers[kept],
        tasks=ds.tasks[kept],
        labels=ds.labels[kept],
        gold=ds.gold,
        class_names=ds.class_names,
        worker_names=ds.worker_names,
        task_names=ds.task_names,
    )


def _append_workers(ds: LabelDataset, new_labels: np.ndarray, tag: str) -> LabelDataset:
    added = new_labels.shape[0]
    if added * ds.n_tasks > ds.n_labels:
        raise ConfigError(
            f"{added} injected workers would push malicious labels past 50% "
            f"({added * ds.n_tasks} vs {ds.n_labels} genuine)"
        )
    if added == 0:
        return ds
    new_worker_idx = np.repeat(np.arange(ds.n_workers, ds.n_workers + added), ds.n_tasks)
    new_task_idx = np.tile(np.arange(ds.n_tasks), added)
    worker_names = None
    if ds.worker_names is not None:
        worker_names = ds.worker_names + tuple(f"{tag}-{i}" for i in range(added))
    return LabelDataset(
        n_workers=ds.n_workers + added,
        n_tasks=ds.n_tasks,
        n_classes=ds.n_classes,
        workers=np.concatenate([ds.workers, new_worker_idx]),
        tasks=np.concatenate([ds.tasks, new_task_idx]),
        labels=np.concatenate([ds.labels, new_labels.ravel()]),
        gold=ds.gold,
        class_names=ds.class_names,
        worker_names=worker_names,
        task_names=ds.task_names,
    )


def inject_spam(ds: LabelDataset, cfg: InjectionConfig) -> LabelDataset:
    """Append spam workers that label every task independently at random."""
    if cfg.kind != "spam":
        raise ConfigError("inject_spam requires kind='spam'")
    count = cfg.resolve_count(ds)
    rng = np.random.default_rng(cfg.seed)
    new_labels = rng.integers(0, ds.n_classes, size=(count, ds.n_tasks))
    return _append_workers(ds, new_labels, "spam")


def inject_collusion(ds: LabelDataset, cfg: InjectionConfig) -> LabelDataset:
    """Append colluding workers that all give the same random label per task."""
    if cfg.kind != "colluding":
        raise ConfigError("inject_collusion requires kind='colluding'")
    count = cfg.resolve_count(ds)
    rng = np.random.default_rng(cfg.seed)
    shared = rng.integers(0, ds.n_classes, size=ds.n_tasks)
    new_labels = np.tile(shared, (count, 1))
    return _append_workers(ds, new_labels, "colluding")


def inject(ds: LabelDataset, cfg: InjectionConfig) -> LabelDataset:
    return inject_spam(ds, cfg) if cfg.kind == "spam" else inject_collusion(ds, cfg)
