"""Command-line interface.

Experiments write their outputs (long/summary CSVs, plot-data CSVs, PNG
figures) into the directory given by ``--out``. Datasets are specified either
with explicit ``--labels``/``--gold`` paths or by name with ``--dataset``,
which resolves ``<root>/<name>/labels.csv`` and ``gold.csv`` under
``--data-root`` or the ``BIASCROWD_DATA`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import LabelDataset, convert_tsv, load_dataset, save_dataset
from .em import EMOptions
from .errors import BiasCrowdError
from .harness import (
    EXPERIMENTS,
    METHODS,
    ExperimentConfig,
    emit_results,
    emit_worker_correlation,
    run_injection,
    run_real_subsample,
    run_synthetic_sweep,
    run_worker_correlation,
)
from .propensity import MCConfig, fit_1bit_mc, observation_matrix
from .simulate import InjectionConfig, SynthConfig, generate_synthetic, inject

DATA_ROOT_ENV = "BIASCROWD_DATA"

log = logging.getLogger("biascrowd")


def _csv_list(cast):
    def parse(text: str):
        return tuple(cast(part) for part in text.split(",") if part)

    return parse


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--labels", type=Path, help="labels CSV (worker,task,label)")
    parser.add_argument("--gold", type=Path, help="gold CSV (task,label)")
    parser.add_argument("--k", type=int, help="number of classes")
    parser.add_argument(
        "--dataset", help="dataset name resolved under the data root (labels.csv/gold.csv)"
    )
    parser.add_argument(
        "--data-root",
        type=Path,
        default=None,
        help=f"dataset root directory (default: ${DATA_ROOT_ENV})",
    )


def _add_experiment_args(parser: argparse.ArgumentParser, methods_default: str) -> None:
    parser.add_argument(
        "--methods",
        type=_csv_list(str),
        default=None,
        help=f"comma list from {{{','.join(METHODS)}}} (default: {methods_default})",
    )
    parser.add_argument(
        "--gamma", type=_csv_list(float), default=(0.1, 1.0, 10.0),
        help="nuclear-radius multipliers for 1-bit MC (comma list)",
    )
    parser.add_argument("--reps", type=int, default=5, help="seeded replications per cell")
    parser.add_argument("--seed", type=int, default=42, help="base seed; replication r uses seed+r")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--no-plots", action="store_true", help="skip PNG figure rendering")
    parser.add_argument("--dump-traces", action="store_true",
                        help="write per-run EM lower-bound traces as CSV")
    parser.add_argument("--em-max-iters", type=int, default=100)
    parser.add_argument("--em-tol", type=float, default=1e-6)
    parser.add_argument("--em-smoothing", type=float, default=0.01,
                        help="Dawid-Skene confusion pseudo-count")
    parser.add_argument("--mstep-max-iters", type=int, default=25,
                        help="GLAD gradient-ascent iterations per M-step")
    parser.add_argument("--mstep-step-init", type=float, default=1.0)
    parser.add_argument("--mstep-shrink", type=float, default=0.5)
    parser.add_argument("--mstep-armijo", type=float, default=1e-4)
    parser.add_argument("--mc-max-iters", type=int, default=500)
    parser.add_argument("--mc-tol", type=float, default=1e-4)
    parser.add_argument("--mc-step-init", type=float, default=4.0)
    parser.add_argument("--clip-floor", type=float, default=0.01,
                        help="lower clip for estimated propensities")


def _resolve_dataset(args) -> tuple[LabelDataset, str]:
    if args.dataset:
        root = args.data_root or (Path(os.environ[DATA_ROOT_ENV]) if DATA_ROOT_ENV in os.environ else None)
        if root is None:
            raise BiasCrowdError(
                f"--dataset needs --data-root or ${DATA_ROOT_ENV} to be set"
            )
        base = Path(root) / args.dataset
        labels, gold = base / "labels.csv", base / "gold.csv"
        name = args.dataset
    else:
        if args.labels is None:
            raise BiasCrowdError("give --labels/--gold or --dataset")
        labels, gold, name = args.labels, args.gold, args.labels.stem
    if args.k is None:
        raise BiasCrowdError("--k (number of classes) is required")
    if not Path(labels).exists():
        raise BiasCrowdError(f"labels file not found: {labels}")
    if gold is not None and not Path(gold).exists():
        raise BiasCrowdError(f"gold file not found: {gold}")
    return load_dataset(labels, gold, args.k), name


def _em_options(args) -> EMOptions:
    return EMOptions(
        max_iters=args.em_max_iters,
        tol=args.em_tol,
        smoothing=args.em_smoothing,
        mstep_max_iters=args.mstep_max_iters,
        mstep_step_init=args.mstep_step_init,
        mstep_shrink=args.mstep_shrink,
        mstep_armijo=args.mstep_armijo,
    )


def _mc_config(args, gamma: float = 1.0) -> MCConfig:
    return MCConfig(
        gamma=gamma,
        step_init=args.mc_step_init,
        max_iters=args.mc_max_iters,
        tol=args.mc_tol,
        clip_floor=args.clip_floor,
    )


def _experiment_config(args, experiment: str, default_methods: tuple[str, ...]) -> ExperimentConfig:
    kwargs = dict(
        experiment=experiment,
        methods=args.methods or default_methods,
        gammas=args.gamma,
        reps=args.reps,
        seed=args.seed,
        em_options=_em_options(args),
        mc_config=_mc_config(args),
    )
    if hasattr(args, "labels_per_task"):
        kwargs["labels_per_task"] = args.labels_per_task
    if getattr(args, "rho", None) is not None:
        kwargs["rhos"] = args.rho
    elif hasattr(args, "rho_points"):
        kwargs["rhos"] = tuple(np.linspace(-1.0, 1.0, args.rho_points))
    if getattr(args, "inject_count", None) is not None:
        kwargs["inject_counts"] = args.inject_count
    if hasattr(args, "sweep_points"):
        kwargs["sweep_points"] = args.sweep_points
    if hasattr(args, "workers"):
        kwargs["synth"] = SynthConfig(
            n_workers=args.workers,
            n_tasks=args.tasks,
            n_classes=args.k or 2,
            rho=0.0,
            seed=args.seed,
        )
    return ExperimentConfig(**kwargs)


def _trace_dir(args):
    if not args.dump_traces:
        return None
    path = Path(args.out) / "traces"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_synthetic_sweep(args) -> int:
    cfg = _experiment_config(args, "synthetic-sweep", ("mv", "ips-mv"))
    records = run_synthetic_sweep(cfg)
    for path in emit_results(records, args.out, plots=not args.no_plots):
        log.info("wrote %s", path)
    return 0


def _cmd_real_subsample(args) -> int:
    ds, name = _resolve_dataset(args)
    cfg = _experiment_config(args, "real-subsample", METHODS)
    records = run_real_subsample(cfg, ds, name, trace_dir=_trace_dir(args))
    for path in emit_results(records, args.out, plots=not args.no_plots):
        log.info("wrote %s", path)
    return 0


def _cmd_injection(args, experiment: str) -> int:
    ds, name = _resolve_dataset(args)
    cfg = _experiment_config(args, experiment, METHODS)
    records = run_injection(cfg, ds, name, trace_dir=_trace_dir(args))
    for path in emit_results(records, args.out, plots=not args.no_plots):
        log.info("wrote %s", path)
    return 0


def _cmd_worker_correlation(args) -> int:
    ds, name = _resolve_dataset(args)
    result = run_worker_correlation(ds, name)
    print(f"{name}: pearson={result.pearson:.4f} spearman={result.spearman:.4f} "
          f"workers_used={result.n_workers_used}")
    for path in emit_worker_correlation(result, args.out, plots=not args.no_plots):
        log.info("wrote %s", path)
    return 0


def _cmd_generate(args) -> int:
    cfg = SynthConfig(
        n_workers=args.workers,
        n_tasks=args.tasks,
        n_classes=args.k,
        rho=args.rho,
        seed=args.seed,
    )
    ds, _ = generate_synthetic(cfg)
    save_dataset(ds, args.labels_out, args.gold_out)
    print(f"generated {ds.n_labels} labels from {ds.n_workers} workers on {ds.n_tasks} tasks")
    return 0


def _cmd_inject(args) -> int:
    ds, _ = _resolve_dataset(args)
    cfg = InjectionConfig(kind=args.inject, count=args.inject_count, seed=args.seed)
    augmented = inject(ds, cfg)
    save_dataset(augmented, args.labels_out, args.gold_out)
    added = augmented.n_workers - ds.n_workers
    fraction = added * ds.n_tasks / max(1, augmented.n_labels)
    print(f"injected {added} {args.inject} workers "
          f"({fraction:.1%} of labels are malicious)")
    return 0


def _cmd_convert(args) -> int:
    convert_tsv(args.labels_in, args.labels_out, args.gold_in, args.gold_out)
    print(f"wrote {args.labels_out}" + (f" and {args.gold_out}" if args.gold_out else ""))
    return 0


def _cmd_estimate_propensity(args) -> int:
    ds, name = _resolve_dataset(args)
    result = fit_1bit_mc(observation_matrix(ds), _mc_config(args, gamma=args.gamma))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(result.propensity.values.tolist())
    status = "converged" if result.converged else "did not converge"
    print(f"{name}: 1-bit MC {status} in {result.objective.size - 1} steps; wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biascrowd",
        description="Observation-bias-aware crowd label aggregation experiments",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthetic-sweep", help="accuracy vs. propensity/accuracy correlation")
    _add_experiment_args(p, "mv,ips-mv")
    p.add_argument("--rho", type=_csv_list(float), default=None,
                   help="explicit correlation grid (comma list)")
    p.add_argument("--rho-points", type=int, default=21, help="grid size over [-1, 1]")
    p.add_argument("--workers", type=int, default=20)
    p.add_argument("--tasks", type=int, default=100)
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(func=_cmd_synthetic_sweep)

    p = sub.add_parser("real-subsample", help="label-budget sweep on a gold dataset")
    _add_dataset_args(p)
    _add_experiment_args(p, ",".join(METHODS))
    p.add_argument("--labels-per-task", type=_csv_list(int), default=(2, 5, 8))
    p.set_defaults(func=_cmd_real_subsample)

    for experiment, kind in (("spam-robustness", "spam"), ("collusion-robustness", "colluding")):
        p = sub.add_parser(experiment, help=f"{kind}-worker injection sweep")
        _add_dataset_args(p)
        _add_experiment_args(p, ",".join(METHODS))
        p.add_argument("--inject-count", type=_csv_list(int), default=None,
                       help="explicit injected-worker counts (comma list)")
        p.add_argument("--sweep-points", type=int, default=6,
                       help="grid size from 0 to the 50%%-label cap")
        p.set_defaults(func=lambda a, e=experiment: _cmd_injection(a, e))

    p = sub.add_parser("worker-correlation", help="worker propensity/accuracy correlation")
    _add_dataset_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_worker_correlation)

    p = sub.add_parser("generate", help="write a synthetic dataset as labels/gold CSVs")
    p.add_argument("--workers", type=int, default=20)
    p.add_argument("--tasks", type=int, default=100)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels-out", type=Path, required=True)
    p.add_argument("--gold-out", type=Path, required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("inject", help="add harmful workers to a dataset and save it")
    _add_dataset_args(p)
    p.add_argument("--inject", choices=("spam", "colluding"), required=True)
    p.add_argument("--inject-count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels-out", type=Path, required=True)
    p.add_argument("--gold-out", type=Path, default=None)
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("convert", help="convert worker<TAB>task<TAB>label files to CSV")
    p.add_argument("--labels-in", type=Path, required=True)
    p.add_argument("--labels-out", type=Path, required=True)
    p.add_argument("--gold-in", type=Path, default=None)
    p.add_argument("--gold-out", type=Path, default=None)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("estimate-propensity", help="dump 1-bit MC propensities as a CSV matrix")
    _add_dataset_args(p)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--mc-max-iters", type=int, default=500)
    p.add_argument("--mc-tol", type=float, default=1e-4)
    p.add_argument("--mc-step-init", type=float, default=4.0)
    p.add_argument("--clip-floor", type=float, default=0.01)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_estimate_propensity)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except BiasCrowdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
