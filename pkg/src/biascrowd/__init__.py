"""Observation-bias-aware crowd label aggregation.

Aggregates redundant crowd labels with majority voting, Dawid-Skene, and
GLAD, each optionally reweighted by inverse propensity scores so that
frequently-responding workers do not dominate the result. Propensities can
come from an oracle (synthetic data), empirical marginals, or 1-bit matrix
completion under a nuclear-norm constraint.
"""

from .data import (
    LabelDataset,
    LabelPosterior,
    PropensityMatrix,
    WorkerStats,
    accuracy,
    load_dataset,
    pearson_correlation,
    save_dataset,
    spearman_correlation,
    worker_stats,
)
from .dawid_skene import DSParams, ds_e_step, ds_lower_bound, ds_m_step, ds_run
from .em import EMOptions, EMResult
from .glad import (
    GLADParams,
    glad_e_step,
    glad_label_logprob,
    glad_lower_bound,
    glad_m_step,
    glad_run,
)
from .majority import VoteScores, ips_majority_vote, majority_vote
from .propensity import (
    MCConfig,
    MCResult,
    empirical_propensity,
    fit_1bit_mc,
    nuclear_ball_project,
    observation_matrix,
)
from .simulate import (
    InjectionConfig,
    SynthConfig,
    generate_synthetic,
    inject_collusion,
    inject_spam,
    subsample_labels,
)

__version__ = "0.1.0"

__all__ = [
    "LabelDataset",
    "LabelPosterior",
    "PropensityMatrix",
    "WorkerStats",
    "VoteScores",
    "DSParams",
    "GLADParams",
    "EMOptions",
    "EMResult",
    "MCConfig",
    "MCResult",
    "SynthConfig",
    "InjectionConfig",
    "accuracy",
    "load_dataset",
    "save_dataset",
    "pearson_correlation",
    "spearman_correlation",
    "worker_stats",
    "majority_vote",
    "ips_majority_vote",
    "ds_e_step",
    "ds_m_step",
    "ds_lower_bound",
    "ds_run",
    "glad_label_logprob",
    "glad_e_step",
    "glad_m_step",
    "glad_lower_bound",
    "glad_run",
    "nuclear_ball_project",
    "fit_1bit_mc",
    "empirical_propensity",
    "observation_matrix",
    "generate_synthetic",
    "subsample_labels",
    "inject_spam",
    "inject_collusion",
]
