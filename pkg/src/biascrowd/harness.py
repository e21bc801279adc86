"""Experiment orchestration: sweeps, replications, and CSV/figure emission.

Experiments produce flat ``ResultRecord`` streams that are reproducible from
(experiment, method, axis value, seed) alone. ``emit_results`` writes one
long-format CSV with every record, a per-cell summary, per-figure plot-data
CSVs, and (by default) rendered PNG figures next to them.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import figures
from .data import (
    LabelDataset,
    PropensityMatrix,
    WorkerStats,
    accuracy,
    pearson_correlation,
    spearman_correlation,
    worker_stats,
)
from .dawid_skene import ds_run
from .em import EMOptions, write_trace
from .errors import ConfigError
from .glad import glad_run
from .majority import ips_majority_vote, majority_vote
from .propensity import MCConfig, fit_1bit_mc, observation_matrix
from .simulate import InjectionConfig, SynthConfig, generate_synthetic, inject, subsample_labels

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "synthetic-sweep",
    "real-subsample",
    "spam-robustness",
    "collusion-robustness",
    "worker-correlation",
)
METHODS = ("mv", "ips-mv", "ds", "ips-ds", "glad", "ips-glad")
IPS_METHODS = frozenset({"ips-mv", "ips-ds", "ips-glad"})


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run and with which knobs; validated on construction."""

    experiment: str
    methods: tuple[str, ...] = METHODS
    gammas: tuple[float, ...] = (0.1, 1.0, 10.0)
    labels_per_task: tuple[int, ...] = (2, 5, 8)
    reps: int = 5
    seed: int = 0
    rhos: tuple[float, ...] = tuple(np.linspace(-1.0, 1.0, 21))
    inject_counts: tuple[int, ...] | None = None
    sweep_points: int = 6
    synth: SynthConfig = field(default_factory=SynthConfig)
    em_options: EMOptions = field(default_factory=EMOptions)
    mc_config: MCConfig = field(default_factory=lambda: MCConfig(gamma=1.0))

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if not self.methods and self.experiment != "worker-correlation":
            raise ConfigError("no methods selected")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.experiment == "synthetic-sweep":
            bad = set(self.methods) - {"mv", "ips-mv"}
            if bad:
                raise ConfigError(
                    f"synthetic-sweep supports only mv/ips-mv, got {sorted(bad)}"
                )
            if not self.rhos:
                raise ConfigError("rho grid is empty")
        needs_estimate = self.experiment in ("real-subsample", "spam-robustness", "collusion-robustness")
        if needs_estimate and (IPS_METHODS & set(self.methods)) and not self.gammas:
            raise ConfigError("IPS methods with estimated propensities need a gamma list")
        if any(g <= 0 for g in self.gammas):
            raise ConfigError("gammas must be positive")


@dataclass(frozen=True)
class ResultRecord:
    """One aggregation outcome for one replication of one experiment cell."""

    experiment: str
    dataset: str
    method: str
    gamma: float | None
    axis: str
    axis_value: float
    seed: int
    accuracy: float
    wall_time_s: float
    malicious_fraction: float | None = None

    def key(self):
        return (
            self.experiment,
            self.dataset,
            self.method,
            -math.inf if self.gamma is None else self.gamma,
            self.axis,
            self.axis_value,
            self.seed,
        )


def method_label(method: str, gamma: float | None) -> str:
    base = {"mv": "MV", "ips-mv": "IPS-MV", "ds": "D&S", "ips-ds": "IPS-D&S",
            "glad": "GLAD", "ips-glad": "IPS-GLAD"}[method]
    if gamma is None:
        return base
    return f"{base} (gamma={gamma:g})"


def run_method(
    method: str,
    ds: LabelDataset,
    propensity: PropensityMatrix | None,
    em_options: EMOptions,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Dispatch one aggregation method; returns (predictions, trace or None)."""
    if method == "mv":
        return majority_vote(ds)[0], None
    if method == "ips-mv":
        return ips_majority_vote(ds, propensity)[0], None
    if method == "ds":
        result = ds_run(ds, None, em_options)
    elif method == "ips-ds":
        result = ds_run(ds, propensity, em_options)
    elif method == "glad":
        result = glad_run(ds, None, em_options)
    elif method == "ips-glad":
        result = glad_run(ds, propensity, em_options)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return result.predictions, result.trace


def _method_cells(cfg: ExperimentConfig) -> list[tuple[str, float | None]]:
    cells: list[tuple[str, float | None]] = []
    for method in cfg.methods:
        if method in IPS_METHODS:
            cells.extend((method, g) for g in cfg.gammas)
        else:
            cells.append((method, None))
    return cells


def _score_cells(
    cfg: ExperimentConfig,
    ds: LabelDataset,
    propensities: dict[float, PropensityMatrix],
    *,
    experiment: str,
    dataset: str,
    axis: str,
    axis_value: float,
    seed: int,
    malicious_fraction: float | None = None,
    trace_dir: Path | None = None,
) -> list[ResultRecord]:
    records = []
    for method, gamma in _method_cells(cfg):
        propensity = propensities[gamma] if gamma is not None else None
        started = time.perf_counter()
        predictions, trace = run_method(method, ds, propensity, cfg.em_options)
        elapsed = time.perf_counter() - started
        records.append(
            ResultRecord(
                experiment=experiment,
                dataset=dataset,
                method=method,
                gamma=gamma,
                axis=axis,
                axis_value=axis_value,
                seed=seed,
                accuracy=accuracy(predictions, ds.gold),
                wall_time_s=elapsed,
                malicious_fraction=malicious_fraction,
            )
        )
        if trace_dir is not None and trace is not None:
            tag = method if gamma is None else f"{method}-gamma{gamma:g}"
            write_trace(
                trace,
                trace_dir / f"trace_{dataset}_{axis}{axis_value:g}_{tag}_seed{seed}.csv",
            )
    return records


def _estimate_propensities(
    cfg: ExperimentConfig, ds: LabelDataset
) -> dict[float, PropensityMatrix]:
    if not IPS_METHODS & set(cfg.methods):
        return {}
    obs = observation_matrix(ds)
    estimates = {}
    for gamma in cfg.gammas:
        result = fit_1bit_mc(obs, replace(cfg.mc_config, gamma=gamma))
        if not result.converged:
            log.warning("1-bit MC did not converge at gamma=%g", gamma)
        estimates[gamma] = result.propensity
    return estimates


# ---------------------------------------------------------------------------
# experiments


def run_synthetic_sweep(cfg: ExperimentConfig) -> list[ResultRecord]:
    """Correlation sweep with oracle propensities (mv / ips-mv only).

    For every rho on the grid, ``cfg.reps`` seeded replications are generated
    and every method is scored against gold; replication seeds are
    ``cfg.seed + rep`` so each record can be regenerated on its own.
    """
    records = []
    for rho in cfg.rhos:
        for rep in range(cfg.reps):
            seed = cfg.seed + rep
            ds, truth = generate_synthetic(replace(cfg.synth, rho=rho, seed=seed))
            for method in cfg.methods:
                started = time.perf_counter()
                predictions, _ = run_method(
                    method, ds, truth if method in IPS_METHODS else None, cfg.em_options
                )
                records.append(
                    ResultRecord(
                        experiment=cfg.experiment,
                        dataset="synthetic",
                        method=method,
                        gamma=None,
                        axis="rho",
                        axis_value=float(rho),
                        seed=seed,
                        accuracy=accuracy(predictions, ds.gold),
                        wall_time_s=time.perf_counter() - started,
                    )
                )
        log.info("synthetic sweep rho=%+.2f done", rho)
    return records


def run_real_subsample(
    cfg: ExperimentConfig,
    ds: LabelDataset,
    dataset: str,
    trace_dir: Path | None = None,
) -> list[ResultRecord]:
    """Label-budget sweep on a gold-labeled dataset.

    Each (labels-per-task, seed) cell subsamples the dataset, re-estimates
    propensities by 1-bit MC per gamma on the subsampled observation matrix,
    and scores every requested method against the full gold set.
    """
    if not ds.gold:
        raise ConfigError("real-subsample needs gold labels")
    records = []
    for labels_per_task in cfg.labels_per_task:
        for rep in range(cfg.reps):
            seed = cfg.seed + rep
            sub = subsample_labels(ds, labels_per_task, seed)
            propensities = _estimate_propensities(cfg, sub)
            records.extend(
                _score_cells(
                    cfg,
                    sub,
                    propensities,
                    experiment=cfg.experiment,
                    dataset=dataset,
                    axis="labels_per_task",
                    axis_value=float(labels_per_task),
                    seed=seed,
                    trace_dir=trace_dir,
                )
            )
        log.info("%s: labels_per_task=%d done", dataset, labels_per_task)
    return records


def default_injection_counts(ds: LabelDataset, points: int = 6) -> tuple[int, ...]:
    """Evenly spaced injected-worker counts from 0 to the 50%-label cap."""
    cap = ds.n_labels // ds.n_tasks
    grid = np.unique(np.round(np.linspace(0, cap, points)).astype(int))
    return tuple(int(c) for c in grid)


def run_injection(
    cfg: ExperimentConfig,
    ds: LabelDataset,
    dataset: str,
    trace_dir: Path | None = None,
) -> list[ResultRecord]:
    """Spam or collusion sweep on a gold-labeled dataset.

    Injected counts default to an even grid up to the 50% malicious-label
    cap. Propensities are re-estimated on each augmented observation matrix;
    records carry both the injected count and the malicious-label fraction.
    """
    if not ds.gold:
        raise ConfigError("injection experiments need gold labels")
    kind = "spam" if cfg.experiment == "spam-robustness" else "colluding"
    counts = cfg.inject_counts or default_injection_counts(ds, cfg.sweep_points)
    records = []
    for count in counts:
        for rep in range(cfg.reps):
            seed = cfg.seed + rep
            augmented = inject(ds, InjectionConfig(kind=kind, count=count, seed=seed))
            fraction = count * ds.n_tasks / (count * ds.n_tasks + ds.n_labels)
            propensities = _estimate_propensities(cfg, augmented)
            records.extend(
                _score_cells(
                    cfg,
                    augmented,
                    propensities,
                    experiment=cfg.experiment,
                    dataset=dataset,
                    axis="injected_workers",
                    axis_value=float(count),
                    seed=seed,
                    malicious_fraction=fraction,
                    trace_dir=trace_dir,
                )
            )
        log.info("%s %s: injected=%d done", dataset, kind, count)
    return records


@dataclass(frozen=True)
class WorkerCorrelationResult:
    dataset: str
    stats: WorkerStats
    pearson: float
    spearman: float
    n_workers_used: int


def run_worker_correlation(ds: LabelDataset, dataset: str) -> WorkerCorrelationResult:
    """Propensity/accuracy correlation over workers with at least one label."""
    stats = worker_stats(ds)
    mask = stats.defined
    return WorkerCorrelationResult(
        dataset=dataset,
        stats=stats,
        pearson=pearson_correlation(stats.propensity[mask], stats.accuracy[mask]),
        spearman=spearman_correlation(stats.propensity[mask], stats.accuracy[mask]),
        n_workers_used=int(mask.sum()),
    )


# ---------------------------------------------------------------------------
# emission

_LONG_HEADER = (
    "experiment",
    "dataset",
    "method",
    "gamma",
    "axis",
    "axis_value",
    "seed",
    "accuracy",
    "wall_time_s",
    "malicious_fraction",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(records: Iterable[ResultRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(_LONG_HEADER)
        for r in sorted(records, key=ResultRecord.key):
            out.writerow(
                [
                    r.experiment,
                    r.dataset,
                    r.method,
                    _fmt(r.gamma),
                    r.axis,
                    _fmt(r.axis_value),
                    r.seed,
                    _fmt(r.accuracy),
                    _fmt(r.wall_time_s),
                    _fmt(r.malicious_fraction),
                ]
            )


def read_records(path: str | Path) -> list[ResultRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                ResultRecord(
                    experiment=row["experiment"],
                    dataset=row["dataset"],
                    method=row["method"],
                    gamma=float(row["gamma"]) if row["gamma"] else None,
                    axis=row["axis"],
                    axis_value=float(row["axis_value"]),
                    seed=int(row["seed"]),
                    accuracy=float(row["accuracy"]),
                    wall_time_s=float(row["wall_time_s"]),
                    malicious_fraction=(
                        float(row["malicious_fraction"]) if row["malicious_fraction"] else None
                    ),
                )
            )
    return records


def summarize(records: Sequence[ResultRecord]) -> list[dict]:
    """Mean accuracy per (experiment, dataset, method, gamma, axis value)."""
    groups: dict[tuple, list[ResultRecord]] = {}
    for r in records:
        groups.setdefault(r.key()[:-1], []).append(r)
    rows = []
    for key in sorted(groups):
        members = groups[key]
        rows.append(
            {
                "experiment": members[0].experiment,
                "dataset": members[0].dataset,
                "method": members[0].method,
                "gamma": members[0].gamma,
                "axis": members[0].axis,
                "axis_value": members[0].axis_value,
                "n_seeds": len(members),
                "mean_accuracy": float(np.mean([m.accuracy for m in members])),
                "malicious_fraction": members[0].malicious_fraction,
            }
        )
    return rows


def _write_summary(rows: list[dict], path: Path) -> None:
    header = (
        "experiment", "dataset", "method", "gamma", "axis",
        "axis_value", "n_seeds", "mean_accuracy", "malicious_fraction",
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(row[h]) for h in header])


def table_pivot(records: Sequence[ResultRecord], dataset: str) -> tuple[list[str], list[list[str]]]:
    """Methods-by-label-count mean-accuracy table for one dataset."""
    rows_summary = [
        r for r in summarize(records)
        if r["dataset"] == dataset and r["axis"] == "labels_per_task"
    ]
    label_counts = sorted({r["axis_value"] for r in rows_summary})
    cells = {(r["method"], r["gamma"], r["axis_value"]): r["mean_accuracy"] for r in rows_summary}
    seen = []
    for r in rows_summary:
        if (r["method"], r["gamma"]) not in seen:
            seen.append((r["method"], r["gamma"]))
    order = {m: i for i, m in enumerate(METHODS)}
    seen.sort(key=lambda mg: (order[mg[0]], -math.inf if mg[1] is None else mg[1]))
    header = ["method"] + [f"labels_per_task={int(c)}" for c in label_counts]
    body = []
    for method, gamma in seen:
        row = [method_label(method, gamma)]
        for count in label_counts:
            value = cells.get((method, gamma, count))
            row.append("" if value is None else f"{value:.4f}")
        body.append(row)
    return header, body


def emit_results(
    records: Sequence[ResultRecord],
    out_dir: str | Path,
    plots: bool = True,
) -> list[Path]:
    """Write the long CSV, summary, per-figure plot data, and PNG figures.

    Empty record streams still produce header-only CSVs. Returns the paths
    written, in a deterministic order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    long_path = out_dir / "results_long.csv"
    write_records(records, long_path)
    written.append(long_path)

    summary_rows = summarize(records)
    summary_path = out_dir / "summary.csv"
    _write_summary(summary_rows, summary_path)
    written.append(summary_path)

    datasets_by_experiment: dict[str, list[str]] = {}
    for row in summary_rows:
        datasets_by_experiment.setdefault(row["experiment"], [])
        if row["dataset"] not in datasets_by_experiment[row["experiment"]]:
            datasets_by_experiment[row["experiment"]].append(row["dataset"])

    for dataset in datasets_by_experiment.get("real-subsample", []):
        header, body = table_pivot(records, dataset)
        path = out_dir / f"table_accuracy_{dataset}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            out.writerows(body)
        written.append(path)

    sweep_rows = [r for r in summary_rows if r["experiment"] == "synthetic-sweep"]
    if sweep_rows or any(r.experiment == "synthetic-sweep" for r in records):
        path = out_dir / "fig_synthetic_sweep.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["rho", "method", "gamma", "mean_accuracy"])
            for row in sweep_rows:
                out.writerow(
                    [_fmt(row["axis_value"]), row["method"], _fmt(row["gamma"]),
                     _fmt(row["mean_accuracy"])]
                )
        written.append(path)
        if plots and sweep_rows:
            png = out_dir / "fig_synthetic_sweep.png"
            figures.render_sweep(sweep_rows, png)
            written.append(png)

    for experiment, kind in (("spam-robustness", "spam"), ("collusion-robustness", "collusion")):
        for dataset in datasets_by_experiment.get(experiment, []):
            rows = [
                r for r in summary_rows
                if r["experiment"] == experiment and r["dataset"] == dataset
            ]
            path = out_dir / f"fig_{kind}_{dataset}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                out = csv.writer(fh)
                out.writerow(
                    ["injected_workers", "malicious_fraction", "method", "gamma", "mean_accuracy"]
                )
                for row in rows:
                    out.writerow(
                        [_fmt(row["axis_value"]), _fmt(row["malicious_fraction"]),
                         row["method"], _fmt(row["gamma"]), _fmt(row["mean_accuracy"])]
                    )
            written.append(path)
            if plots and rows:
                png = out_dir / f"fig_{kind}_{dataset}.png"
                figures.render_injection(rows, png, f"{kind} workers on {dataset}")
                written.append(png)
    return written


def emit_worker_correlation(
    result: WorkerCorrelationResult,
    out_dir: str | Path,
    plots: bool = True,
) -> list[Path]:
    """Write the correlation summary, the per-worker scatter data, and a figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    summary_path = out_dir / f"correlation_{result.dataset}.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["dataset", "pearson", "spearman", "n_workers_used"])
        out.writerow(
            [result.dataset, _fmt(result.pearson), _fmt(result.spearman), result.n_workers_used]
        )
    written.append(summary_path)

    scatter_path = out_dir / f"fig_worker_scatter_{result.dataset}.csv"
    with open(scatter_path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["worker", "propensity", "accuracy"])
        for i, (p, a) in enumerate(zip(result.stats.propensity, result.stats.accuracy)):
            out.writerow([i, _fmt(float(p)), "" if np.isnan(a) else _fmt(float(a))])
    written.append(scatter_path)

    if plots:
        png = out_dir / f"fig_worker_scatter_{result.dataset}.png"
        figures.render_worker_scatter(result.stats, png, result.dataset)
        written.append(png)
    return written
