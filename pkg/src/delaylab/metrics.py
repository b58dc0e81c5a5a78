"""Evaluation metrics and cross-run comparison arithmetic.

Degenerate inputs (single-class hours, empty slices) yield None rather
than a sentinel number; aggregation then redistributes that hour's count
weight over the hours where the metric exists.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import DomainError

NLL_EPS = 1e-7


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DomainError("scores and labels must be 1-d arrays of equal length")
    if not np.all(np.isfinite(scores)):
        raise DomainError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise DomainError("labels must be binary")
    return scores, labels.astype(np.int64)


def auc(scores, labels) -> Optional[float]:
    """Rank statistic P(score_pos > score_neg), ties counted half."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average ranks on ties
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(scores, labels) -> Optional[float]:
    """Average precision with tied scores entering as one block."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0 or len(labels) == n_pos:
        return None
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # boundaries of tie blocks in descending-score order
    block_end = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([block_end, [len(s) - 1]])
    tp = np.cumsum(y)[ends].astype(np.float64)
    total = ends + 1.0
    precision = tp / total
    delta_recall = np.diff(np.concatenate([[0.0], tp])) / n_pos
    return float(np.sum(delta_recall * precision))


def nll(probs, labels) -> Optional[float]:
    """Mean negative log likelihood with clamped probabilities."""
    probs, labels = _validate(probs, labels)
    if len(labels) == 0:
        return None
    p = np.clip(probs, NLL_EPS, 1.0 - NLL_EPS)
    return float(np.mean(-labels * np.log(p) - (1 - labels) * np.log(1.0 - p)))


def relative_improvement(
    method: float, pretrain: float, oracle: float, higher_is_better: bool = True
) -> Optional[float]:
    """Percent of the pretrain-to-oracle gap a method recovers.

    For lower-is-better metrics both differences are negated, which
    leaves the ratio unchanged; the flag exists so call sites state the
    orientation explicitly.  Undefined when the gap is zero.
    """
    if oracle == pretrain:
        return None
    sign = 1.0 if higher_is_better else -1.0
    # + 0.0 folds IEEE negative zero into plain zero
    return (sign * (method - pretrain)) / (sign * (oracle - pretrain)) * 100.0 + 0.0


@dataclass(frozen=True)
class MetricsReport:
    auc: Optional[float]
    pr_auc: Optional[float]
    nll: Optional[float]
    count: int

    def as_dict(self) -> dict:
        return {"auc": self.auc, "pr_auc": self.pr_auc, "nll": self.nll, "count": self.count}


def evaluate(probs, labels) -> MetricsReport:
    probs, labels = _validate(probs, labels)
    return MetricsReport(
        auc=auc(probs, labels),
        pr_auc=pr_auc(probs, labels),
        nll=nll(probs, labels) if len(labels) else None,
        count=int(len(labels)),
    )


def aggregate(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Count-weighted mean per metric.

    Hours where a metric is undefined contribute no weight to that
    metric; their count shifts onto the defined hours.
    """
    total = int(sum(r.count for r in reports))
    out = {}
    for name in ("auc", "pr_auc", "nll"):
        vals = [(getattr(r, name), r.count) for r in reports if getattr(r, name) is not None]
        weight = sum(c for _, c in vals)
        out[name] = sum(v * c for v, c in vals) / weight if weight > 0 else None
    return MetricsReport(auc=out["auc"], pr_auc=out["pr_auc"], nll=out["nll"], count=total)
