"""Figure rendering for run and comparison outputs.

Headless by construction: the Agg backend is forced before pyplot is
imported, so rendering works in batch jobs and tests.
"""
from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_METRIC_LABELS = {"auc": "AUC", "pr_auc": "PR-AUC", "nll": "NLL"}


def hourly_curves(reports: Sequence[dict], metric: str, path: str, title: Optional[str] = None) -> None:
    """One line per arm: the metric on each test hour of the stream."""
    if metric not in _METRIC_LABELS:
        raise ValueError(f"unknown metric {metric!r}")
    fig, ax = plt.subplots(figsize=(7, 4))
    for rep in reports:
        xs = [row["test_hour"] for row in rep["hours"] if row[metric] is not None]
        ys = [row[metric] for row in rep["hours"] if row[metric] is not None]
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.2, label=rep["name"])
    ax.set_xlabel("test hour")
    ax.set_ylabel(_METRIC_LABELS[metric])
    ax.set_title(title or f"{_METRIC_LABELS[metric]} per streamed hour")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ri_bars(comparison: dict, metric: str, path: str) -> None:
    """Horizontal bars of relative improvement for each method arm."""
    if metric not in _METRIC_LABELS:
        raise ValueError(f"unknown metric {metric!r}")
    key = f"ri_{metric}"
    arms = [a for a in comparison["arms"] if a.get(key) is not None]
    fig, ax = plt.subplots(figsize=(7, 0.5 * max(len(arms), 2) + 1.5))
    names = [a["name"] for a in arms]
    vals = [a[key] for a in arms]
    ax.barh(range(len(arms)), vals, color="#4878cf")
    ax.set_yticks(range(len(arms)))
    ax.set_yticklabels(names, fontsize=8)
    ax.axvline(0.0, color="k", linewidth=0.8)
    ax.axvline(100.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel(f"relative improvement on {_METRIC_LABELS[metric]} (%)")
    ax.set_title(f"share of the pretrained-to-oracle gap recovered ({_METRIC_LABELS[metric]})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
