"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (plain loops, raw exponentials, no
stabilization) and stays independent of the code paths it checks.
"""

from __future__ import annotations

import math

import numpy as np


def numeric_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of an ndarray."""
    x = x.astype(np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += step
        minus[i] -= step
        gflat[i] = (f(plus.reshape(x.shape)) - f(minus.reshape(x.shape))) / (2 * step)
    return g


# ---------------------------------------------------------------------------
# losses


def discriminative_loss_from_sim(sim: np.ndarray, labels, tau: float) -> float:
    """Eq.-style double loop over a full similarity matrix.

    sim[i, j] is the similarity between pool members i and j; labels is the
    per-member class list. Index i ranges over all rows; A(i) excludes i;
    P(i) keeps same-label members. Rows with empty P(i) contribute zero.
    """
    k = sim.shape[0]
    total = 0.0
    for i in range(k):
        others = [j for j in range(k) if j != i]
        positives = [p for p in others if labels[p] == labels[i]]
        if not positives:
            continue
        denom = sum(math.exp(sim[i, j] / tau) for j in others)
        for p in positives:
            total -= math.log(math.exp(sim[i, p] / tau) / denom) / len(positives)
    return total


def naive_discriminative_loss(embeddings: np.ndarray, labels, tau: float) -> float:
    sim = embeddings @ embeddings.T
    return discriminative_loss_from_sim(sim, labels, tau)


def naive_bank_loss(
    embeddings: np.ndarray, labels, bank_embeddings: np.ndarray, bank_labels, tau: float
) -> float:
    """Bank entries join the candidate pool but are not outer-sum anchors."""
    pool = embeddings if len(bank_labels) == 0 else np.vstack([embeddings, bank_embeddings])
    pool_labels = list(labels) + list(bank_labels)
    k = embeddings.shape[0]
    n = pool.shape[0]
    sim = pool @ pool.T
    total = 0.0
    for i in range(k):
        others = [j for j in range(n) if j != i]
        positives = [p for p in others if pool_labels[p] == pool_labels[i]]
        if not positives:
            continue
        denom = sum(math.exp(sim[i, j] / tau) for j in others)
        for p in positives:
            total -= math.log(math.exp(sim[i, p] / tau) / denom) / len(positives)
    return total


def naive_cross_entropy(
    embeddings: np.ndarray, labels, e_real: np.ndarray, e_fake: np.ndarray, tau: float
) -> float:
    total = 0.0
    for h, y in zip(embeddings, labels):
        z_real = math.exp(float(h @ e_real) / tau)
        z_fake = math.exp(float(h @ e_fake) / tau)
        p_true = (z_fake if y == 1 else z_real) / (z_real + z_fake)
        total -= math.log(p_true)
    return total / len(labels)


# ---------------------------------------------------------------------------
# metrics


def enumerate_average_precision(scores, labels) -> float:
    """AP by recomputing precision/recall from scratch at every rank.

    Ranking is by descending score with ties kept in input order; AP sums
    precision at the ranks where recall increases, weighted by the recall
    increment.
    """
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(1 for y in labels if y == 1)
    ap = 0.0
    prev_recall = 0.0
    for k in range(1, len(order) + 1):
        top = order[:k]
        tp = sum(1 for i in top if labels[i] == 1)
        precision = tp / k
        recall = tp / n_pos
        if recall > prev_recall:
            ap += (recall - prev_recall) * precision
            prev_recall = recall
    return ap


# ---------------------------------------------------------------------------
# diagnostics


def gaussian_bin_tv_against_dirac(
    mu: float, sigma: float, edges: np.ndarray, anchor: float, grid: int = 20001
) -> float:
    """TV between a binned N(mu, sigma^2) and a Dirac, by dense-grid quadrature."""
    lo, hi = edges[0], edges[-1]
    xs = np.linspace(lo, hi, grid)
    density = np.exp(-0.5 * ((xs - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    p = np.zeros(len(edges) - 1)
    for b in range(len(edges) - 1):
        m = (xs >= edges[b]) & (xs <= edges[b + 1])
        if m.any():
            p[b] = np.trapezoid(density[m], xs[m])
    q = np.zeros_like(p)
    idx = min(np.searchsorted(edges, anchor, side="right") - 1, len(p) - 1)
    q[max(idx, 0)] = 1.0
    return 0.5 * float(np.abs(p - q).sum() + max(0.0, 1.0 - p.sum()))
