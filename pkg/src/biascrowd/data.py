"""Core domain types, dataset ingestion, and worker statistics.

Datasets are sparse sets of (worker, task, label) observations over dense
integer indices. CSV files may use arbitrary string tokens for workers,
tasks, and classes; tokens are mapped to dense indices in first-appearance
order (gold file first, then labels file) and the mappings are kept on the
dataset so results and serialized copies can report the original tokens.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import stats as _scipy_stats

from .errors import (
    CoverageError,
    DomainError,
    DuplicateObservationError,
    MissingGoldError,
    ParseError,
    PropensityError,
    ZeroVarianceError,
)

LABELS_HEADER = ("worker", "task", "label")
GOLD_HEADER = ("task", "label")


def _readonly(a: np.ndarray, dtype=np.int64) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class LabelDataset:
    """Sparse crowd-labeling dataset with optional gold labels.

    ``workers``, ``tasks``, and ``labels`` are parallel arrays, one entry per
    observed label. At most one observation may exist per (worker, task)
    pair. ``gold`` maps a task index to its true class when known.
    """

    n_workers: int
    n_tasks: int
    n_classes: int
    workers: np.ndarray
    tasks: np.ndarray
    labels: np.ndarray
    gold: Mapping[int, int] | None = None
    class_names: tuple[str, ...] | None = None
    worker_names: tuple[str, ...] | None = None
    task_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_classes < 2:
            raise DomainError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_workers < 0 or self.n_tasks < 0:
            raise DomainError("negative dimension")
        workers = _readonly(self.workers)
        tasks = _readonly(self.tasks)
        labels = _readonly(self.labels)
        if not (workers.shape == tasks.shape == labels.shape) or workers.ndim != 1:
            raise DomainError("workers/tasks/labels must be parallel 1-D arrays")
        if workers.size:
            if workers.min() < 0 or workers.max() >= self.n_workers:
                raise DomainError("worker index out of range")
            if tasks.min() < 0 or tasks.max() >= self.n_tasks:
                raise DomainError("task index out of range")
            if labels.min() < 0 or labels.max() >= self.n_classes:
                raise DomainError("label out of range")
            pair_keys = workers * np.int64(self.n_tasks) + tasks
            uniq, counts = np.unique(pair_keys, return_counts=True)
            if counts.max() > 1:
                key = int(uniq[np.argmax(counts > 1)])
                raise DuplicateObservationError(
                    f"duplicate observation for worker {key // self.n_tasks}, "
                    f"task {key % self.n_tasks}"
                )
        if self.gold is not None:
            for t, z in self.gold.items():
                if not 0 <= t < self.n_tasks:
                    raise DomainError(f"gold task {t} out of range")
                if not 0 <= z < self.n_classes:
                    raise DomainError(f"gold label {z} out of range")
        for names, size, what in (
            (self.class_names, self.n_classes, "class"),
            (self.worker_names, self.n_workers, "worker"),
            (self.task_names, self.n_tasks, "task"),
        ):
            if names is not None and len(names) != size:
                raise DomainError(f"{what}_names length mismatch")
        object.__setattr__(self, "workers", workers)
        object.__setattr__(self, "tasks", tasks)
        object.__setattr__(self, "labels", labels)
        if self.gold is not None:
            object.__setattr__(self, "gold", dict(self.gold))

    @property
    def n_labels(self) -> int:
        return int(self.workers.size)

    def triples(self) -> set[tuple[int, int, int]]:
        return set(zip(self.workers.tolist(), self.tasks.tolist(), self.labels.tolist()))

    def token_triples(self) -> set[tuple[str, str, str]]:
        """Observation set using the original file tokens."""
        w = self.worker_names or tuple(str(i) for i in range(self.n_workers))
        t = self.task_names or tuple(str(i) for i in range(self.n_tasks))
        c = self.class_names or tuple(str(i) for i in range(self.n_classes))
        return {(w[i], t[j], c[l]) for i, j, l in self.triples()}

    def gold_array(self) -> np.ndarray:
        """Gold labels as a length-m array with -1 for unlabeled tasks."""
        out = np.full(self.n_tasks, -1, dtype=np.int64)
        if self.gold:
            for t, z in self.gold.items():
                out[t] = z
        return out

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[tuple[int, int, int]],
        n_classes: int,
        n_workers: int | None = None,
        n_tasks: int | None = None,
        gold: Mapping[int, int] | None = None,
    ) -> "LabelDataset":
        rows = list(triples)
        w = np.array([r[0] for r in rows], dtype=np.int64)
        t = np.array([r[1] for r in rows], dtype=np.int64)
        l = np.array([r[2] for r in rows], dtype=np.int64)
        if n_workers is None:
            n_workers = int(w.max()) + 1 if w.size else 0
        if n_tasks is None:
            top = int(t.max()) + 1 if t.size else 0
            if gold:
                top = max(top, max(gold) + 1)
            n_tasks = top
        return cls(n_workers, n_tasks, n_classes, w, t, l, gold=gold)


@dataclass(frozen=True)
class PropensityMatrix:
    """Dense n x m matrix of observation probabilities, each in (0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise PropensityError("propensity matrix must be 2-D")
        if not np.all(np.isfinite(values)):
            raise PropensityError("propensity matrix has non-finite entries")
        if values.size and (values.min() <= 0.0 or values.max() > 1.0):
            raise PropensityError("propensities must lie in (0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class LabelPosterior:
    """Per-task categorical distribution over classes plus the class prior."""

    probs: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        prior = np.ascontiguousarray(self.prior, dtype=np.float64)
        if probs.ndim != 2 or prior.ndim != 1 or probs.shape[1] != prior.size:
            raise DomainError("posterior shape mismatch")
        if probs.size and (probs.min() < 0 or np.abs(probs.sum(axis=1) - 1.0).max() > 1e-9):
            raise DomainError("posterior rows must be distributions")
        if prior.min() < 0 or abs(prior.sum() - 1.0) > 1e-9:
            raise DomainError("prior must be a distribution")
        probs.flags.writeable = False
        prior.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "prior", prior)

    def predictions(self) -> np.ndarray:
        """Per-task argmax labels; ties go to the lowest class index."""
        return self.probs.argmax(axis=1)


@dataclass(frozen=True)
class WorkerStats:
    """Per-worker response rate and agreement with gold.

    ``accuracy`` is NaN for workers with no labels on gold-bearing tasks;
    such workers are excluded from correlations.
    """

    propensity: np.ndarray
    accuracy: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.accuracy)


# ---------------------------------------------------------------------------
# ingestion / serialization


def _read_rows(path: Path, want_cols: int, delimiter: str = ",") -> list[list[str]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != want_cols:
                raise ParseError(f"{path}:{lineno}: expected {want_cols} fields, got {len(row)}")
            row = [field.strip() for field in row]
            if any(not field for field in row):
                raise ParseError(f"{path}:{lineno}: empty field")
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: empty file")
    return rows


def _strip_header(rows: list[list[str]], header: tuple[str, ...]) -> list[list[str]]:
    if tuple(f.lower() for f in rows[0]) == header:
        return rows[1:]
    return rows


class _Indexer:
    """Assigns dense ids to tokens in first-appearance order."""

    def __init__(self):
        self.ids: dict[str, int] = {}

    def get(self, token: str) -> int:
        if token not in self.ids:
            self.ids[token] = len(self.ids)
        return self.ids[token]

    def names(self) -> tuple[str, ...]:
        return tuple(self.ids)


def load_dataset(
    labels_path: str | Path,
    gold_path: str | Path | None,
    n_classes: int,
) -> LabelDataset:
    """Load a dataset from a labels CSV and an optional gold CSV.

    The labels file has header ``worker,task,label``, one row per observed
    label; the gold file has header ``task,label``. Class tokens are mapped
    to 0..K-1 in first-appearance order, scanning the gold file before the
    labels file, so runs are reproducible for a fixed pair of files.

    Raises ParseError for malformed rows, DomainError when more than
    ``n_classes`` distinct class tokens appear, and
    DuplicateObservationError for repeated (worker, task) pairs.
    """
    labels_path = Path(labels_path)
    classes, tasks, workers = _Indexer(), _Indexer(), _Indexer()

    gold: dict[int, int] = {}
    if gold_path is not None:
        for task_tok, label_tok in _strip_header(_read_rows(Path(gold_path), 2), GOLD_HEADER):
            t = tasks.get(task_tok)
            z = classes.get(label_tok)
            if t in gold and gold[t] != z:
                raise ParseError(f"{gold_path}: conflicting gold labels for task {task_tok!r}")
            gold[t] = z

    w_idx, t_idx, l_idx = [], [], []
    for worker_tok, task_tok, label_tok in _strip_header(
        _read_rows(labels_path, 3), LABELS_HEADER
    ):
        w_idx.append(workers.get(worker_tok))
        t_idx.append(tasks.get(task_tok))
        l_idx.append(classes.get(label_tok))

    if len(classes.ids) > n_classes:
        raise DomainError(
            f"found {len(classes.ids)} distinct class tokens, expected at most {n_classes}"
        )
    class_names = classes.names() + tuple(
        str(k) for k in range(len(classes.ids), n_classes)
    )
    return LabelDataset(
        n_workers=len(workers.ids),
        n_tasks=len(tasks.ids),
        n_classes=n_classes,
        workers=np.array(w_idx, dtype=np.int64),
        tasks=np.array(t_idx, dtype=np.int64),
        labels=np.array(l_idx, dtype=np.int64),
        gold=gold or None,
        class_names=class_names,
        worker_names=workers.names(),
        task_names=tasks.names(),
    )


def save_dataset(
    ds: LabelDataset,
    labels_path: str | Path,
    gold_path: str | Path | None = None,
) -> None:
    """Write a dataset back to the labels/gold CSV format using its tokens."""
    w_names = ds.worker_names or tuple(str(i) for i in range(ds.n_workers))
    t_names = ds.task_names or tuple(str(i) for i in range(ds.n_tasks))
    c_names = ds.class_names or tuple(str(i) for i in range(ds.n_classes))
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(LABELS_HEADER)
        for i, j, l in zip(ds.workers, ds.tasks, ds.labels):
            out.writerow([w_names[i], t_names[j], c_names[l]])
    if gold_path is not None:
        if ds.gold is None:
            raise MissingGoldError("dataset has no gold labels to write")
        with open(gold_path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(GOLD_HEADER)
            for t in sorted(ds.gold):
                out.writerow([t_names[t], c_names[ds.gold[t]]])


def convert_tsv(
    tsv_path: str | Path,
    labels_out: str | Path,
    gold_tsv_path: str | Path | None = None,
    gold_out: str | Path | None = None,
) -> None:
    """Convert tab-separated ``worker<TAB>task<TAB>label`` files to the CSV format.

    A leading header row is tolerated in either input. The optional gold file
    uses ``task<TAB>label`` rows.
    """
    rows = _strip_header(_read_rows(Path(tsv_path), 3, delimiter="\t"), LABELS_HEADER)
    with open(labels_out, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(LABELS_HEADER)
        out.writerows(rows)
    if gold_tsv_path is not None:
        if gold_out is None:
            raise ParseError("gold output path required when converting a gold file")
        gold_rows = _strip_header(_read_rows(Path(gold_tsv_path), 2, delimiter="\t"), GOLD_HEADER)
        with open(gold_out, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(GOLD_HEADER)
            out.writerows(gold_rows)


# ---------------------------------------------------------------------------
# derived statistics


def worker_stats(ds: LabelDataset) -> WorkerStats:
    """Per-worker response rate (n_i / m) and accuracy against gold.

    Accuracy counts only labels on gold-bearing tasks; workers with no such
    labels get NaN. Requires gold labels on the dataset.
    """
    if not ds.gold:
        raise MissingGoldError("worker_stats requires gold labels")
    counts = np.bincount(ds.workers, minlength=ds.n_workers).astype(np.float64)
    propensity = counts / ds.n_tasks if ds.n_tasks else counts

    gold = ds.gold_array()
    on_gold = gold[ds.tasks] >= 0
    graded = np.bincount(ds.workers[on_gold], minlength=ds.n_workers).astype(np.float64)
    hits = np.bincount(
        ds.workers[on_gold],
        weights=(ds.labels[on_gold] == gold[ds.tasks[on_gold]]).astype(np.float64),
        minlength=ds.n_workers,
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        accuracy = np.where(graded > 0, hits / graded, np.nan)
    return WorkerStats(propensity=propensity, accuracy=accuracy)


def pearson_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Standard Pearson correlation coefficient.

    Raises ZeroVarianceError when either input is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DomainError("need two equal-length vectors of size >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise ZeroVarianceError("correlation undefined for constant input")
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


def spearman_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation, reported alongside Pearson for reference."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DomainError("need two equal-length vectors of size >= 2")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ZeroVarianceError("correlation undefined for constant input")
    return float(_scipy_stats.spearmanr(x, y).statistic)


def accuracy(
    predictions: Mapping[int, int] | np.ndarray,
    gold: Mapping[int, int],
) -> float:
    """Fraction of gold-labeled tasks whose prediction matches gold.

    Every gold task must have a prediction; otherwise CoverageError.
    """
    if not gold:
        raise MissingGoldError("no gold labels to score against")
    hits = 0
    for task, truth in gold.items():
        if isinstance(predictions, np.ndarray):
            if not 0 <= task < predictions.shape[0]:
                raise CoverageError(f"no prediction for task {task}")
            pred = int(predictions[task])
        else:
            if task not in predictions:
                raise CoverageError(f"no prediction for task {task}")
            pred = predictions[task]
        hits += pred == truth
    return hits / len(gold)
