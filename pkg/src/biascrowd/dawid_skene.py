"""Dawid-Skene EM with optional inverse-propensity weighting.

Each worker is a K x K row-stochastic confusion matrix; the class prior is
estimated. The weighted variant raises each observation's likelihood term to
the power w_ij = 1 / e_ij, which makes the EM surrogate objective an unbiased
estimate of its uniform-observation counterpart. The prior/entropy term is
never weighted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import LabelDataset, LabelPosterior, PropensityMatrix
from .em import EMOptions, EMResult, check_weights, resolve_weights, vote_init_posterior
from .errors import DomainError, PosteriorUnderflowError


@dataclass(frozen=True)
class DSParams:
    """Per-worker confusion matrices (n, K, K) and class prior (K,).

    ``confusions[i, k, l]`` is the probability that worker i answers l when
    the true class is k; every row sums to 1.
    """

    confusions: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        confusions = np.ascontiguousarray(self.confusions, dtype=np.float64)
        prior = np.ascontiguousarray(self.prior, dtype=np.float64)
        if confusions.ndim != 3 or confusions.shape[1] != confusions.shape[2]:
            raise DomainError("confusions must be (n_workers, K, K)")
        if prior.shape != (confusions.shape[1],):
            raise DomainError("prior length must equal K")
        if confusions.size and (
            confusions.min() < 0
            or np.abs(confusions.sum(axis=2) - 1.0).max() > 1e-9
        ):
            raise DomainError("confusion rows must be distributions")
        if prior.min() < 0 or abs(prior.sum() - 1.0) > 1e-9:
            raise DomainError("prior must be a distribution")
        confusions.flags.writeable = False
        prior.flags.writeable = False
        object.__setattr__(self, "confusions", confusions)
        object.__setattr__(self, "prior", prior)


def _observation_loglik(ds: LabelDataset, params: DSParams) -> np.ndarray:
    """(n_labels, K) array of ln pi^(i)[k, L_ij] per observation."""
    with np.errstate(divide="ignore"):
        log_conf = np.log(params.confusions)
    return log_conf[ds.workers, :, ds.labels]


def ds_e_step(
    ds: LabelDataset,
    params: DSParams,
    weights: np.ndarray | None = None,
) -> LabelPosterior:
    """Posterior q(Z_j = k) proportional to p(k) * prod_i pi^(i)[k, L_ij]^w_ij.

    Computed in the log domain; tasks with no observations fall back to the
    prior. Raises PosteriorUnderflowError if some task scores -inf for every
    class.
    """
    weights = check_weights(ds, weights)
    with np.errstate(divide="ignore"):
        log_prior = np.log(params.prior)
    log_post = np.tile(log_prior, (ds.n_tasks, 1))
    contrib = weights[:, None] * _observation_loglik(ds, params)
    for k in range(ds.n_classes):
        log_post[:, k] += np.bincount(ds.tasks, weights=contrib[:, k], minlength=ds.n_tasks)
    norm = logsumexp(log_post, axis=1)
    if np.any(np.isneginf(norm)):
        raise PosteriorUnderflowError("every class has -inf log score for some task")
    probs = np.exp(log_post - norm[:, None])
    probs /= probs.sum(axis=1, keepdims=True)
    return LabelPosterior(probs=probs, prior=params.prior)


def ds_m_step(
    ds: LabelDataset,
    posterior: LabelPosterior,
    weights: np.ndarray | None = None,
    smoothing: float = 0.01,
) -> DSParams:
    """Weighted-count confusion update and unweighted prior update.

    pi^(i)[k, l] is proportional to smoothing + sum_j w_ij q(Z_j=k) I(L_ij=l);
    the prior is proportional to sum_j q(Z_j=k) with no propensity weighting,
    matching the surrogate objective whose prior term carries no 1/e factor.
    """
    if weights is None:
        weights = np.ones(ds.n_labels)
    weights = np.asarray(weights, dtype=np.float64)
    k_classes = ds.n_classes
    mass = weights[:, None] * posterior.probs[ds.tasks]
    cell = ds.workers * k_classes + ds.labels
    # counts[i, k, l] = sum of w_ij q(Z_j = k) over observations with L_ij = l
    counts = np.empty((ds.n_workers, k_classes, k_classes))
    for k in range(k_classes):
        counts[:, k, :] = np.bincount(
            cell, weights=mass[:, k], minlength=ds.n_workers * k_classes
        ).reshape(ds.n_workers, k_classes)
    counts += smoothing
    row_sums = counts.sum(axis=2, keepdims=True)
    uniform = 1.0 / ds.n_classes
    with np.errstate(invalid="ignore"):
        confusions = np.where(row_sums > 0, counts / np.where(row_sums > 0, row_sums, 1.0), uniform)
    prior = posterior.probs.sum(axis=0)
    prior /= prior.sum()
    return DSParams(confusions=confusions, prior=prior)


def ds_lower_bound(
    ds: LabelDataset,
    posterior: LabelPosterior,
    params: DSParams,
    weights: np.ndarray | None = None,
) -> float:
    """Weighted EM surrogate: sum_obs w * E_q[ln pi] + sum_j E_q[ln p(Z) - ln q]."""
    if weights is None:
        weights = np.ones(ds.n_labels)
    weights = np.asarray(weights, dtype=np.float64)
    obs_ll = _observation_loglik(ds, params)
    q_obs = posterior.probs[ds.tasks]
    with np.errstate(invalid="ignore"):
        terms = np.where(q_obs > 0, q_obs * obs_ll, 0.0)
    likelihood = float((weights * terms.sum(axis=1)).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.log(params.prior)[None, :] - np.log(posterior.probs)
        prior_term = float(np.where(posterior.probs > 0, posterior.probs * gap, 0.0).sum())
    return likelihood + prior_term


def ds_run(
    ds: LabelDataset,
    propensity: PropensityMatrix | None = None,
    opts: EMOptions | None = None,
) -> EMResult:
    """Run Dawid-Skene EM (weighted when a propensity matrix is given).

    The posterior is initialized from normalized (weighted) vote scores; the
    loop alternates M and E steps until the surrogate objective improves by
    less than ``opts.tol`` or ``opts.max_iters`` is reached. The returned
    trace holds the objective value after each iteration.
    """
    opts = opts or EMOptions()
    weights = resolve_weights(ds, propensity)
    probs = vote_init_posterior(ds, weights)
    posterior = LabelPosterior(probs=probs, prior=np.full(ds.n_classes, 1.0 / ds.n_classes))

    trace: list[float] = []
    converged = False
    params = None
    for _ in range(opts.max_iters):
        params = ds_m_step(ds, posterior, weights, opts.smoothing)
        posterior = ds_e_step(ds, params, weights)
        trace.append(ds_lower_bound(ds, posterior, params, weights))
        if len(trace) >= 2 and trace[-1] - trace[-2] < opts.tol:
            converged = True
            break
    return EMResult(
        posterior=posterior,
        params=params,
        trace=np.array(trace),
        converged=converged,
    )
