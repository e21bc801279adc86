"""Plain and inverse-propensity-weighted majority voting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabelDataset, PropensityMatrix
from .errors import PropensityError


@dataclass(frozen=True)
class VoteScores:
    """Per-task, per-class vote mass.

    For unweighted voting each row sums to the task's label count. The
    ``unlabeled`` mask flags tasks with no observations; their prediction
    defaults to class 0.
    """

    scores: np.ndarray
    unlabeled: np.ndarray


def observation_weights(ds: LabelDataset, propensity: PropensityMatrix) -> np.ndarray:
    """Per-observation weights 1 / e_ij aligned with the dataset arrays."""
    if propensity.shape != (ds.n_workers, ds.n_tasks):
        raise PropensityError(
            f"propensity shape {propensity.shape} does not match dataset "
            f"({ds.n_workers}, {ds.n_tasks})"
        )
    values = propensity.values[ds.workers, ds.tasks]
    if values.size and values.min() <= 0.0:
        raise PropensityError("observed pair has nonpositive propensity")
    return 1.0 / values


def _tally(ds: LabelDataset, weights: np.ndarray) -> tuple[np.ndarray, VoteScores]:
    flat = ds.tasks * ds.n_classes + ds.labels
    scores = np.bincount(
        flat, weights=weights, minlength=ds.n_tasks * ds.n_classes
    ).reshape(ds.n_tasks, ds.n_classes)
    unlabeled = scores.sum(axis=1) == 0.0
    # argmax resolves ties toward the lowest class index; all-zero rows give 0
    predictions = scores.argmax(axis=1)
    return predictions, VoteScores(scores=scores, unlabeled=unlabeled)


def majority_vote(ds: LabelDataset) -> tuple[np.ndarray, VoteScores]:
    """Per-task argmax of label counts; ties break to the lowest class index."""
    return _tally(ds, np.ones(ds.n_labels))


def ips_majority_vote(
    ds: LabelDataset, propensity: PropensityMatrix
) -> tuple[np.ndarray, VoteScores]:
    """Majority vote with each observation weighted by 1 / e_ij."""
    return _tally(ds, observation_weights(ds, propensity))
