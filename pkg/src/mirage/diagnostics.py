"""Empirical generalization diagnostics over embedding clouds.

Variation measures how tightly a class's embeddings sit around its text
anchor (mean cosine distance to the anchor); separation is the minimum
cosine distance between normalized class means across the two families.
The sup-variation estimator projects onto sampled directions and measures
1-D total variation against the projected anchor via shared histograms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objective import per_sample_cross_entropy
from .seeding import child_rng

__all__ = [
    "DistributionFamily",
    "EmpiricalDistribution",
    "estimate_generalization_error",
    "inter_class_separation",
    "intra_class_variation",
    "sup_variation",
    "v_clip",
]

_NORM_TOL = 1e-4


@dataclass
class EmpiricalDistribution:
    embeddings: np.ndarray
    source: str = "natural"
    label: int = 0

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] == 0:
            raise ValueError("distribution needs a non-empty (n, d) embedding matrix")
        norms = np.linalg.norm(self.embeddings, axis=1)
        if np.abs(norms - 1).max() > _NORM_TOL:
            raise ValueError("distribution embeddings must be unit-norm")


@dataclass
class DistributionFamily:
    members: list = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise ValueError("family must contain at least one distribution")
        labels = {m.label for m in self.members}
        if len(labels) != 1:
            raise ValueError("family members must share one class label")


def intra_class_variation(dist: EmpiricalDistribution, anchor: np.ndarray) -> float:
    """Mean cosine distance between the cloud and its anchor; in [0, 2]."""
    anchor = np.asarray(anchor, dtype=np.float64)
    return float(np.mean(1.0 - dist.embeddings @ anchor))


def v_clip(
    fake_dist: EmpiricalDistribution,
    real_dist: EmpiricalDistribution,
    anchors,
) -> float:
    """max of the two per-class variations (fake vs e_Fake, real vs e_Real)."""
    e_real, e_fake = anchors
    return max(
        intra_class_variation(fake_dist, e_fake), intra_class_variation(real_dist, e_real)
    )


def inter_class_separation(
    gen_family: DistributionFamily, nat_family: DistributionFamily
) -> float:
    """Min over (P, Q) pairs of the cosine distance between normalized means."""
    if gen_family.members[0].label == nat_family.members[0].label:
        raise ValueError("families must carry opposite class labels")

    def unit_mean(dist):
        m = dist.embeddings.mean(axis=0)
        n = np.linalg.norm(m)
        if n < 1e-12:
            raise ValueError(f"degenerate distribution '{dist.source}': zero mean embedding")
        return m / n

    best = None
    for p in gen_family.members:
        for q in nat_family.members:
            sep = float(1.0 - unit_mean(p) @ unit_mean(q))
            best = sep if best is None else min(best, sep)
    return best


def _histogram_tv(projected: np.ndarray, anchor_value: float, bins: int) -> float:
    """TV between the projected empirical pmf and a Dirac over shared bins."""
    lo = min(projected.min(), anchor_value)
    hi = max(projected.max(), anchor_value)
    if hi - lo < 1e-12:
        return 0.0
    counts, edges = np.histogram(projected, bins=bins, range=(lo, hi))
    p = counts / counts.sum()
    idx = min(int(np.searchsorted(edges, anchor_value, side="right")) - 1, bins - 1)
    idx = max(idx, 0)
    q = np.zeros(bins)
    q[idx] = 1.0
    return 0.5 * float(np.abs(p - q).sum())


def _principal_axes(cloud: np.ndarray, count: int = 2) -> list:
    centered = cloud - cloud.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return [vt[i] / np.linalg.norm(vt[i]) for i in range(min(count, vt.shape[0]))]


def sup_variation(
    fake_dist: EmpiricalDistribution,
    real_dist: EmpiricalDistribution,
    anchors,
    num_directions: int = 16,
    bins: int = 32,
    seed: int = 0,
) -> float:
    """Approximate sup over unit directions of the projected 1-D TV.

    Directions are the top-2 principal axes of the pooled cloud plus a
    prefix-stable stream of ``num_directions`` random unit vectors, so the
    estimate is monotone in ``num_directions``. Lower-bounds the true sup.
    """
    if num_directions < 1:
        raise ValueError("num_directions must be >= 1")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    e_real, e_fake = (np.asarray(a, dtype=np.float64) for a in anchors)
    pooled = np.vstack([fake_dist.embeddings, real_dist.embeddings])
    d = pooled.shape[1]
    directions = _principal_axes(pooled)
    rng = child_rng(seed, "sup-variation")
    for _ in range(num_directions):
        v = rng.standard_normal(d)
        directions.append(v / np.linalg.norm(v))

    best = 0.0
    for beta in directions:
        for dist, anchor in ((fake_dist, e_fake), (real_dist, e_real)):
            tv = _histogram_tv(dist.embeddings @ beta, float(anchor @ beta), bins)
            best = max(best, tv)
    return best


def estimate_generalization_error(
    train_fake: EmpiricalDistribution,
    train_real: EmpiricalDistribution,
    test_fakes: DistributionFamily,
    test_reals: DistributionFamily,
    anchors,
    tau: float,
    loss_fn=None,
) -> float:
    """Worst-case excess per-sample loss across test families, summed by class.

    Default per-sample loss is the cosine cross-entropy against the anchors;
    negative values mean the test families are easier than training.
    """
    e_real, e_fake = (np.asarray(a, dtype=np.float64) for a in anchors)

    if loss_fn is None:

        def loss_fn(embeddings, label):
            labels = np.full(embeddings.shape[0], label)
            return per_sample_cross_entropy(embeddings, labels, e_real, e_fake, tau)

    def mean_loss(dist, label):
        return float(loss_fn(dist.embeddings, label).mean())

    fake_base = mean_loss(train_fake, 1)
    real_base = mean_loss(train_real, 0)
    fake_excess = max(mean_loss(m, 1) - fake_base for m in test_fakes.members)
    real_excess = max(mean_loss(m, 0) - real_base for m in test_reals.members)
    return fake_excess + real_excess
