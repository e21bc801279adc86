"""Render report figures from summarized experiment rows.

Figures are written as PNG files next to the plot-data CSVs; the CSVs remain
the canonical output and carry the same numbers.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "mv": dict(color="tab:blue", marker="o"),
    "ips-mv": dict(color="tab:cyan", marker="s"),
    "ds": dict(color="tab:red", marker="^"),
    "ips-ds": dict(color="tab:orange", marker="v"),
    "glad": dict(color="tab:green", marker="D"),
    "ips-glad": dict(color="tab:olive", marker="P"),
}


def _series_label(method: str, gamma) -> str:
    if gamma is None:
        return method
    return f"{method} (gamma={gamma:g})"


def _line_plot(rows: list[dict], path: Path, xlabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    series: dict[tuple, list[tuple[float, float]]] = {}
    for row in rows:
        series.setdefault((row["method"], row["gamma"]), []).append(
            (row["axis_value"], row["mean_accuracy"])
        )
    for (method, gamma), points in sorted(
        series.items(), key=lambda kv: (kv[0][0], -math.inf if kv[0][1] is None else kv[0][1])
    ):
        points.sort()
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        style = dict(_STYLE.get(method, {}))
        if gamma is not None:
            style["alpha"] = 0.9
            style["linestyle"] = {0.1: ":", 1.0: "-", 10.0: "--"}.get(gamma, "-.")
        ax.plot(xs, ys, label=_series_label(method, gamma), markersize=4, **style)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("mean accuracy")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep(summary_rows: list[dict], path: str | Path) -> None:
    """Accuracy versus propensity/accuracy correlation, one line per method."""
    _line_plot(
        summary_rows,
        Path(path),
        xlabel="correlation between observation and correct-answer rates",
        title="synthetic correlation sweep",
    )


def render_injection(summary_rows: list[dict], path: str | Path, title: str) -> None:
    """Accuracy versus number of injected workers, one line per method cell."""
    _line_plot(summary_rows, Path(path), xlabel="injected workers", title=title)


def render_worker_scatter(stats, path: str | Path, dataset: str) -> None:
    """Worker propensity versus accuracy scatter for one dataset."""
    mask = stats.defined
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    ax.scatter(
        np.asarray(stats.propensity)[mask],
        np.asarray(stats.accuracy)[mask],
        s=14,
        alpha=0.6,
        edgecolors="none",
    )
    ax.set_xlabel("worker propensity (fraction of tasks answered)")
    ax.set_ylabel("worker accuracy")
    ax.set_title(dataset)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
