"""Shared plumbing for the EM-based aggregation engines."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .data import LabelDataset, LabelPosterior, PropensityMatrix
from .errors import ConfigError, PropensityError
from .majority import observation_weights


@dataclass(frozen=True)
class EMOptions:
    """Knobs for both EM engines.

    ``smoothing`` is the Dawid-Skene confusion pseudo-count; the ``mstep_*``
    fields configure GLAD's gradient-ascent M-step (backtracking line search
    with an Armijo sufficient-increase test).
    """

    max_iters: int = 100
    tol: float = 1e-6
    smoothing: float = 0.01
    mstep_max_iters: int = 25
    mstep_step_init: float = 1.0
    mstep_shrink: float = 0.5
    mstep_armijo: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1 or self.tol <= 0:
            raise ConfigError("max_iters must be >= 1 and tol > 0")
        if self.smoothing < 0:
            raise ConfigError("smoothing must be nonnegative")
        if not (0 < self.mstep_shrink < 1) or self.mstep_step_init <= 0:
            raise ConfigError("invalid line-search configuration")


@dataclass(frozen=True)
class EMResult:
    """Outcome of one EM run: posterior, parameters, and the bound trace."""

    posterior: LabelPosterior
    params: Any
    trace: np.ndarray
    converged: bool

    @property
    def predictions(self) -> np.ndarray:
        return self.posterior.predictions()


def resolve_weights(
    ds: LabelDataset, propensity: PropensityMatrix | None
) -> np.ndarray:
    """1 / e_ij per observation, or all-ones when no propensities are given."""
    if propensity is None:
        return np.ones(ds.n_labels)
    return observation_weights(ds, propensity)


def check_weights(ds: LabelDataset, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return np.ones(ds.n_labels)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (ds.n_labels,):
        raise PropensityError("weights must align with the observation arrays")
    if weights.size and (not np.all(np.isfinite(weights)) or weights.min() <= 0.0):
        raise PropensityError("observation weights must be positive and finite")
    return weights


def vote_init_posterior(ds: LabelDataset, weights: np.ndarray) -> np.ndarray:
    """Row-normalized (weighted) vote scores; uniform for unlabeled tasks."""
    flat = ds.tasks * ds.n_classes + ds.labels
    scores = np.bincount(
        flat, weights=weights, minlength=ds.n_tasks * ds.n_classes
    ).reshape(ds.n_tasks, ds.n_classes)
    totals = scores.sum(axis=1, keepdims=True)
    uniform = np.full(ds.n_classes, 1.0 / ds.n_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(totals > 0, scores / totals, uniform)
    return probs


def write_trace(trace: np.ndarray, path: str | Path) -> None:
    """Serialize a per-iteration lower-bound trace as a diagnostic CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["iteration", "lower_bound"])
        for i, value in enumerate(np.asarray(trace, dtype=np.float64)):
            out.writerow([i + 1, repr(float(value))])
