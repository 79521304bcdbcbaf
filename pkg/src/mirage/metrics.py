"""Detection metrics: thresholded accuracy and step-wise average precision."""

from __future__ import annotations

from dataclasses import dataclass

from .objective import FAKE

__all__ = ["ScoredPrediction", "accuracy", "average_precision", "mean_average_precision"]


@dataclass(frozen=True)
class ScoredPrediction:
    score: float  # probability of Fake
    label: int
    subset: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


def accuracy(preds, threshold: float = 0.5) -> float:
    """Fraction correct; a score exactly at the threshold classifies Fake."""
    if not preds:
        raise ValueError("accuracy needs at least one prediction")
    hits = sum(1 for p in preds if (p.score >= threshold) == (p.label == FAKE))
    return hits / len(preds)


def average_precision(preds) -> float:
    """AP over descending scores (stable ties by input order), Fake positive.

    Sums precision at each rank where recall increases, weighted by the
    recall increment.
    """
    n_pos = sum(1 for p in preds if p.label == FAKE)
    if n_pos == 0:
        raise ValueError("average precision needs at least one Fake example")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    ap = 0.0
    tp = 0
    for rank, i in enumerate(order, start=1):
        if preds[i].label == FAKE:
            tp += 1
            ap += (1.0 / n_pos) * (tp / rank)
    return ap


def mean_average_precision(per_subset_aps) -> float:
    """Unweighted mean of per-subset APs."""
    aps = list(per_subset_aps)
    if not aps:
        raise ValueError("mAP needs at least one subset AP")
    return sum(aps) / len(aps)
