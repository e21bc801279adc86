"""Propensity-score sources: 1-bit matrix completion and a rank-1 fallback.

The 1-bit estimator fits sigma(A) to the full binary observation matrix by
projected gradient descent on the Bernoulli negative log-likelihood over all
n*m cells, subject to a nuclear-norm ball ||A||_* <= gamma * sqrt(n*m).
Matrices here are small (hundreds by hundreds), so each projection does a
full SVD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as scipy_linalg
from scipy.special import expit

from .data import LabelDataset, PropensityMatrix
from .errors import ConfigError, DomainError


def observation_matrix(ds: LabelDataset) -> np.ndarray:
    """Dense n x m binary matrix with 1 exactly where a label was observed."""
    obs = np.zeros((ds.n_workers, ds.n_tasks))
    obs[ds.workers, ds.tasks] = 1.0
    return obs


@dataclass(frozen=True)
class MCConfig:
    """1-bit matrix-completion settings; ``gamma`` scales the nuclear radius."""

    gamma: float
    step_init: float = 4.0
    max_iters: int = 500
    tol: float = 1e-4
    clip_floor: float = 0.01

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.step_init <= 0 or self.max_iters < 1 or self.tol <= 0:
            raise ConfigError("invalid solver configuration")
        if not 0 < self.clip_floor < 0.5:
            raise ConfigError("clip_floor must lie in (0, 0.5)")


@dataclass(frozen=True)
class MCResult:
    propensity: PropensityMatrix
    objective: np.ndarray
    converged: bool


def _project_sorted_simplex(values: np.ndarray, total: float) -> np.ndarray:
    # values must be sorted descending and nonnegative (SVD guarantees both)
    cumulative = np.cumsum(values)
    ranks = np.arange(1, values.size + 1)
    support = np.nonzero(values * ranks > cumulative - total)[0][-1]
    threshold = (cumulative[support] - total) / (support + 1.0)
    return np.maximum(values - threshold, 0.0)


def nuclear_ball_project(matrix: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the nuclear-norm ball of the given radius.

    Feasible inputs are returned unchanged; otherwise the singular values are
    soft-thresholded to the simplex of the requested radius (waterfilling) and
    the matrix is rebuilt.
    """
    if radius <= 0:
        raise ConfigError("radius must be positive")
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DomainError("expected a 2-D matrix")
    try:
        left, singular, right_t = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier
        left, singular, right_t = scipy_linalg.svd(
            matrix, full_matrices=False, lapack_driver="gesvd"
        )
    if singular.sum() <= radius:
        return matrix
    projected = _project_sorted_simplex(singular, radius)
    return (left * projected) @ right_t


def _bernoulli_nll(logits: np.ndarray, obs: np.ndarray) -> float:
    # -sum[O ln sigma + (1-O) ln(1-sigma)] == sum softplus(logits) - sum O*logits
    return float(np.logaddexp(0.0, logits).sum() - (obs * logits).sum())


def fit_1bit_mc(obs: np.ndarray, cfg: MCConfig) -> MCResult:
    """Fit propensities to a binary observation matrix by projected gradient.

    Starts from the zero matrix and backtracks the step size until the usual
    quadratic upper bound holds, which makes the objective non-increasing
    across accepted iterations. Stops once the decrease falls below
    ``cfg.tol`` or ``cfg.max_iters`` is reached (the latter flags
    non-convergence). Returned propensities are clipped to
    [clip_floor, 1 - 1e-6].
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.size == 0:
        raise DomainError("observation matrix must be a nonempty 2-D array")
    n, m = obs.shape
    radius = cfg.gamma * np.sqrt(n * m)

    logits = np.zeros((n, m))
    value = _bernoulli_nll(logits, obs)
    trace = [value]
    step = cfg.step_init
    converged = False
    for _ in range(cfg.max_iters):
        grad = expit(logits) - obs
        accepted = False
        trial = step
        for _ in range(60):
            try:
                candidate = nuclear_ball_project(logits - trial * grad, radius)
            except (np.linalg.LinAlgError, scipy_linalg.LinAlgError):
                trial *= 0.5  # extreme trial point; retry closer to the iterate
                continue
            diff = candidate - logits
            cand_value = _bernoulli_nll(candidate, obs)
            bound = value + float((grad * diff).sum()) + float((diff * diff).sum()) / (2.0 * trial)
            if cand_value <= bound + 1e-12:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            converged = True  # no admissible step left: numerically stationary
            break
        decrease = value - cand_value
        logits, value = candidate, cand_value
        trace.append(value)
        step = min(trial * 2.0, 64.0)
        if decrease < cfg.tol:
            converged = True
            break
    propensity = PropensityMatrix(np.clip(expit(logits), cfg.clip_floor, 1.0 - 1e-6))
    return MCResult(propensity=propensity, objective=np.array(trace), converged=converged)


def empirical_propensity(obs: np.ndarray, clip_floor: float = 0.01) -> PropensityMatrix:
    """Rank-1 marginal-rate estimate, for ablations only.

    e_ij = (row count_i) * (column count_j) / total, clipped to
    [clip_floor, 1]. This is the independence (outer-product) estimate of the
    observation rate.
    """
    obs = np.asarray(obs, dtype=np.float64)
    total = obs.sum()
    if total <= 0:
        raise DomainError("observation matrix has no observations")
    rates = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / total
    return PropensityMatrix(np.clip(rates, clip_floor, 1.0))


def propensity_for(ds: LabelDataset, cfg: MCConfig) -> MCResult:
    """Convenience wrapper: 1-bit MC on the dataset's observation matrix."""
    return fit_1bit_mc(observation_matrix(ds), cfg)
