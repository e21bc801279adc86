"""GLAD EM with optional inverse-propensity weighting.

A worker answers correctly with probability sigma(alpha_i * beta_j), where
alpha_i is the worker's ability and 1/beta_j the task's difficulty; wrong
answers are uniform over the K-1 remaining classes. The class prior is fixed
uniform. beta is optimized as log_beta so it stays positive, and the M-step
is gradient ascent with a backtracking line search, which keeps the EM
surrogate objective non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .data import LabelDataset, LabelPosterior, PropensityMatrix
from .em import EMOptions, EMResult, check_weights, resolve_weights, vote_init_posterior
from .errors import DomainError, PosteriorUnderflowError


@dataclass(frozen=True)
class GLADParams:
    """Worker abilities (n,) and per-task log inverse difficulties (m,)."""

    alpha: np.ndarray
    log_beta: np.ndarray

    def __post_init__(self):
        alpha = np.ascontiguousarray(self.alpha, dtype=np.float64)
        log_beta = np.ascontiguousarray(self.log_beta, dtype=np.float64)
        if alpha.ndim != 1 or log_beta.ndim != 1:
            raise DomainError("alpha and log_beta must be vectors")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(log_beta))):
            raise DomainError("GLAD parameters must be finite")
        alpha.flags.writeable = False
        log_beta.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "log_beta", log_beta)

    @property
    def beta(self) -> np.ndarray:
        return np.exp(self.log_beta)


def _softplus(x):
    return np.logaddexp(0.0, x)


def glad_label_logprob(
    label: int, true_label: int, alpha_i: float, beta_j: float, n_classes: int
) -> float:
    """ln p(L_ij = label | Z_j = true_label, alpha_i, beta_j).

    Equals ln sigma(alpha_i * beta_j) on a match and
    ln((1 - sigma(alpha_i * beta_j)) / (K - 1)) otherwise; stable for large
    |alpha_i * beta_j|.
    """
    if n_classes < 2:
        raise DomainError("need at least 2 classes")
    if beta_j <= 0:
        raise DomainError("beta must be positive")
    x = alpha_i * beta_j
    if label == true_label:
        return -float(_softplus(-x))
    return -float(_softplus(x)) - math.log(n_classes - 1)


def _pair_logprobs(ds: LabelDataset, params: GLADParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation (match, mismatch) log-probabilities."""
    x = params.alpha[ds.workers] * params.beta[ds.tasks]
    logp_match = -_softplus(-x)
    logp_wrong = -_softplus(x) - math.log(ds.n_classes - 1)
    return logp_match, logp_wrong


def glad_e_step(
    ds: LabelDataset,
    params: GLADParams,
    weights: np.ndarray | None = None,
) -> LabelPosterior:
    """Posterior under a uniform prior, with observation weights as exponents."""
    weights = check_weights(ds, weights)
    logp_match, logp_wrong = _pair_logprobs(ds, params)
    base = np.bincount(ds.tasks, weights=weights * logp_wrong, minlength=ds.n_tasks)
    bonus = np.bincount(
        ds.tasks * ds.n_classes + ds.labels,
        weights=weights * (logp_match - logp_wrong),
        minlength=ds.n_tasks * ds.n_classes,
    ).reshape(ds.n_tasks, ds.n_classes)
    log_post = base[:, None] + bonus
    norm = logsumexp(log_post, axis=1)
    if np.any(np.isneginf(norm)):
        raise PosteriorUnderflowError("every class has -inf log score for some task")
    probs = np.exp(log_post - norm[:, None])
    probs /= probs.sum(axis=1, keepdims=True)
    return LabelPosterior(probs=probs, prior=np.full(ds.n_classes, 1.0 / ds.n_classes))


def _expected_loglik(
    ds: LabelDataset,
    posterior: LabelPosterior,
    weights: np.ndarray,
    alpha: np.ndarray,
    log_beta: np.ndarray,
) -> float:
    """M-step objective: sum_obs w * E_q[ln p(L | Z, alpha, beta)]."""
    x = alpha[ds.workers] * np.exp(log_beta)[ds.tasks]
    q_match = posterior.probs[ds.tasks, ds.labels]
    logp_match = -_softplus(-x)
    logp_wrong = -_softplus(x) - math.log(ds.n_classes - 1)
    return float((weights * (q_match * logp_match + (1.0 - q_match) * logp_wrong)).sum())


def glad_mstep_gradient(
    ds: LabelDataset,
    posterior: LabelPosterior,
    weights: np.ndarray,
    alpha: np.ndarray,
    log_beta: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the M-step objective in (alpha, log_beta).

    With x = alpha_i * beta_j the per-observation derivative in x is
    w_ij * (q(Z_j = L_ij) - sigma(x)); chain rule gives beta_j for alpha_i
    and x itself for log_beta_j.
    """
    beta = np.exp(log_beta)
    x = alpha[ds.workers] * beta[ds.tasks]
    residual = weights * (posterior.probs[ds.tasks, ds.labels] - expit(x))
    grad_alpha = np.bincount(ds.workers, weights=residual * beta[ds.tasks], minlength=ds.n_workers)
    grad_log_beta = np.bincount(ds.tasks, weights=residual * x, minlength=ds.n_tasks)
    return grad_alpha, grad_log_beta


def glad_m_step(
    ds: LabelDataset,
    posterior: LabelPosterior,
    params: GLADParams,
    weights: np.ndarray | None = None,
    opts: EMOptions | None = None,
) -> GLADParams:
    """Ascend the weighted expected complete-data log-likelihood.

    Runs at most ``opts.mstep_max_iters`` gradient steps; each step backtracks
    from ``opts.mstep_step_init`` by ``opts.mstep_shrink`` until the Armijo
    condition holds, so the objective never decreases. If no step can be
    accepted the current parameters are kept.
    """
    opts = opts or EMOptions()
    if weights is None:
        weights = np.ones(ds.n_labels)
    weights = np.asarray(weights, dtype=np.float64)
    workers, tasks = ds.workers, ds.tasks
    weighted_q = weights * posterior.probs[tasks, ds.labels]

    def gain(alpha: np.ndarray, log_beta: np.ndarray) -> float:
        # expected log-likelihood up to a theta-independent constant:
        # sum w*(q_match * x - softplus(x))
        x = alpha[workers] * np.exp(log_beta)[tasks]
        return float(weighted_q @ x - weights @ _softplus(x))

    alpha = params.alpha.copy()
    log_beta = params.log_beta.copy()
    value = gain(alpha, log_beta)

    for _ in range(opts.mstep_max_iters):
        beta_obs = np.exp(log_beta)[tasks]
        x = alpha[workers] * beta_obs
        residual = weighted_q - weights * expit(x)
        grad_alpha = np.bincount(workers, weights=residual * beta_obs, minlength=ds.n_workers)
        grad_log_beta = np.bincount(tasks, weights=residual * x, minlength=ds.n_tasks)
        grad_sq = float((grad_alpha**2).sum() + (grad_log_beta**2).sum())
        if grad_sq == 0.0:
            break
        step = opts.mstep_step_init
        accepted = False
        while step > 1e-12:
            cand_alpha = alpha + step * grad_alpha
            cand_log_beta = log_beta + step * grad_log_beta
            cand_value = gain(cand_alpha, cand_log_beta)
            if cand_value >= value + opts.mstep_armijo * step * grad_sq:
                alpha, log_beta, value = cand_alpha, cand_log_beta, cand_value
                accepted = True
                break
            step *= opts.mstep_shrink
        if not accepted:
            break
    return GLADParams(alpha=alpha, log_beta=log_beta)


def glad_lower_bound(
    ds: LabelDataset,
    posterior: LabelPosterior,
    params: GLADParams,
    weights: np.ndarray | None = None,
) -> float:
    """Weighted surrogate objective with the uniform-prior entropy term."""
    if weights is None:
        weights = np.ones(ds.n_labels)
    weights = np.asarray(weights, dtype=np.float64)
    likelihood = _expected_loglik(ds, posterior, weights, params.alpha, params.log_beta)
    probs = posterior.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = -math.log(ds.n_classes) - np.log(probs)
        prior_term = float(np.where(probs > 0, probs * gap, 0.0).sum())
    return likelihood + prior_term


def glad_run(
    ds: LabelDataset,
    propensity: PropensityMatrix | None = None,
    opts: EMOptions | None = None,
) -> EMResult:
    """Run GLAD EM (weighted when a propensity matrix is given).

    Abilities start at 1 and log inverse difficulties at 0; the posterior is
    initialized from normalized (weighted) vote scores. Stops when the
    surrogate improves by less than ``opts.tol`` or after ``opts.max_iters``.
    """
    opts = opts or EMOptions()
    weights = resolve_weights(ds, propensity)
    probs = vote_init_posterior(ds, weights)
    posterior = LabelPosterior(probs=probs, prior=np.full(ds.n_classes, 1.0 / ds.n_classes))
    params = GLADParams(alpha=np.ones(ds.n_workers), log_beta=np.zeros(ds.n_tasks))

    trace: list[float] = []
    converged = False
    for _ in range(opts.max_iters):
        params = glad_m_step(ds, posterior, params, weights, opts)
        posterior = glad_e_step(ds, params, weights)
        trace.append(glad_lower_bound(ds, posterior, params, weights))
        if len(trace) >= 2 and trace[-1] - trace[-2] < opts.tol:
            converged = True
            break
    return EMResult(
        posterior=posterior,
        params=params,
        trace=np.array(trace),
        converged=converged,
    )
