"""Training objective: anchored contrastive loss, memory bank, cosine CE.

The pooled embedding set puts the two text anchors at the front (rows 0 and
1 internally; external indices -1 and 0) followed by the batch's image
embeddings. Both losses share one temperature and are combined as
``ce + dis_weight * dis``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "FAKE",
    "REAL",
    "EmbeddingSet",
    "LossConfig",
    "MemoryBank",
    "bank_update",
    "build_embedding_set",
    "cross_entropy_loss",
    "discriminative_loss",
    "discriminative_loss_with_bank",
    "per_sample_cross_entropy",
    "total_loss",
]

REAL = 0
FAKE = 1

_NORM_TOL = 1e-4
_MASK = -1e9  # additive self-mask; exp underflows to exactly 0


@dataclass
class LossConfig:
    temperature: float = 0.07
    dis_weight: float = 0.1
    bank_enabled: bool = True
    bank_capacity: int = 64
    normalize: bool = False

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.dis_weight < 0:
            raise ValueError(f"dis_weight must be >= 0, got {self.dis_weight}")
        if self.bank_capacity < 0:
            raise ValueError(f"bank_capacity must be >= 0, got {self.bank_capacity}")


class EmbeddingSet:
    """Anchors plus batch embeddings with the index-set helpers A(i), P(i).

    External indices follow the pooled-set convention: -1 is the Real anchor,
    0 is the Fake anchor, 1..I are the batch members.
    """

    def __init__(self, embeddings: Tensor, labels: np.ndarray):
        self.embeddings = embeddings
        self.labels = labels

    @property
    def batch_size(self) -> int:
        return self.embeddings.shape[0] - 2

    def indices(self):
        return range(-1, self.batch_size + 1)

    def others(self, i: int):
        return [j for j in self.indices() if j != i]

    def positives(self, i: int):
        me = self.labels[i + 1]
        return [j for j in self.others(i) if self.labels[j + 1] == me]


def _require_unit_norm(name: str, arr: np.ndarray) -> None:
    norms = np.sqrt((arr * arr).sum(axis=-1))
    worst = float(np.abs(norms - 1.0).max())
    if worst > _NORM_TOL:
        raise ValueError(f"{name}: embeddings must be unit-norm (max deviation {worst:.2e})")


def build_embedding_set(anchors, batch_embeddings: Tensor, batch_labels) -> EmbeddingSet:
    """Pool [e_Real, e_Fake, h_1..h_I] with labels [Real, Fake, y_1..y_I]."""
    e_real, e_fake = anchors
    labels = np.asarray(batch_labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] == 0:
        raise ValueError("batch must contain at least one embedding")
    if batch_embeddings.shape[0] != labels.shape[0]:
        raise ValueError(
            f"batch size mismatch: {batch_embeddings.shape[0]} embeddings, {labels.shape[0]} labels"
        )
    d = batch_embeddings.shape[1]
    _require_unit_norm("anchors", np.stack([e_real.data, e_fake.data]))
    _require_unit_norm("batch", batch_embeddings.data)
    pooled = ad.concat(
        [ad.reshape(e_real, (1, d)), ad.reshape(e_fake, (1, d)), batch_embeddings], axis=0
    )
    pooled_labels = np.concatenate([[REAL, FAKE], labels])
    return EmbeddingSet(pooled, pooled_labels)


def _positive_weights(anchor_labels: np.ndarray, pool_labels: np.ndarray, self_pairs: bool):
    """W[i,p] = 1/|P(i)| over same-label candidates, excluding self columns."""
    k = anchor_labels.shape[0]
    n = pool_labels.shape[0]
    same = anchor_labels[:, None] == pool_labels[None, :]
    if self_pairs:
        same[np.arange(k), np.arange(k)] = False
    counts = same.sum(axis=1)
    weights = np.zeros((k, n))
    nonzero = counts > 0
    weights[nonzero] = same[nonzero] / counts[nonzero, None]
    return weights, int(nonzero.sum())


def _masked_log_softmax(anchor_rows: Tensor, pool_rows: Tensor, tau: float, k: int) -> Tensor:
    logits = ad.matmul(anchor_rows, ad.transpose(pool_rows, (1, 0))) * (1.0 / tau)
    mask = np.zeros(logits.shape, dtype=logits.data.dtype.type)
    mask[np.arange(k), np.arange(k)] = _MASK
    return ad.log_softmax(logits + ad.constant(mask), axis=1)


def discriminative_loss(embedding_set: EmbeddingSet, tau: float, normalize: bool = False) -> Tensor:
    """Anchored supervised-contrastive loss over the pooled set.

    Indices whose positive set is empty contribute zero. Stabilized via
    log-softmax; equals the raw double-loop formula on the same pool.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    h = embedding_set.embeddings
    k = h.shape[0]
    logp = _masked_log_softmax(h, h, tau, k)
    weights, active = _positive_weights(embedding_set.labels, embedding_set.labels, self_pairs=True)
    loss = ad.neg(ad.sum_(logp * ad.constant(weights.astype(h.data.dtype.type))))
    if normalize and active > 0:
        loss = loss * (1.0 / active)
    return loss


def discriminative_loss_with_bank(
    embedding_set: EmbeddingSet, bank: "MemoryBank", tau: float, normalize: bool = False
) -> Tensor:
    """Bank entries widen the candidate pool but are never outer-sum anchors."""
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    if len(bank) == 0:
        return discriminative_loss(embedding_set, tau, normalize=normalize)
    h = embedding_set.embeddings
    k = h.shape[0]
    bank_vecs, bank_labels = bank.stacked()
    pool = ad.concat([h, ad.constant(bank_vecs.astype(h.data.dtype.type))], axis=0)
    pool_labels = np.concatenate([embedding_set.labels, bank_labels])
    logp = _masked_log_softmax(h, pool, tau, k)
    weights, active = _positive_weights(embedding_set.labels, pool_labels, self_pairs=True)
    loss = ad.neg(ad.sum_(logp * ad.constant(weights.astype(h.data.dtype.type))))
    if normalize and active > 0:
        loss = loss * (1.0 / active)
    return loss


def cross_entropy_loss(batch_embeddings: Tensor, batch_labels, anchors, tau: float) -> Tensor:
    """Mean over the batch of -log softmax(<h, e_y>/tau) at the true label."""
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    e_real, e_fake = anchors
    labels = np.asarray(batch_labels, dtype=np.int64)
    d = batch_embeddings.shape[1]
    anchor_rows = ad.concat([ad.reshape(e_real, (1, d)), ad.reshape(e_fake, (1, d))], axis=0)
    logits = ad.matmul(batch_embeddings, ad.transpose(anchor_rows, (1, 0))) * (1.0 / tau)
    logp = ad.log_softmax(logits, axis=1)
    onehot = np.zeros((labels.shape[0], 2), dtype=batch_embeddings.data.dtype.type)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    return ad.neg(ad.mean(ad.sum_(logp * ad.constant(onehot), axis=1)))


def total_loss(ce: Tensor, dis: Tensor, alpha: float) -> Tensor:
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if not (np.isfinite(ce.data).all() and np.isfinite(dis.data).all()):
        raise ValueError("total_loss: non-finite input")
    return ce + alpha * dis


def per_sample_cross_entropy(
    embeddings: np.ndarray, labels: np.ndarray, e_real: np.ndarray, e_fake: np.ndarray, tau: float
) -> np.ndarray:
    """Plain-numpy per-sample CE used by diagnostics and scoring."""
    logits = embeddings @ np.stack([e_real, e_fake]).T / tau
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)]


class MemoryBank:
    """Fixed-capacity FIFO of detached (embedding, label) pairs."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self._entries: deque = deque(maxlen=capacity if capacity > 0 else 0)

    def __len__(self) -> int:
        return len(self._entries)

    def labels(self) -> list:
        return [label for _, label in self._entries]

    def stacked(self):
        vecs = np.stack([vec for vec, _ in self._entries])
        labels = np.array([label for _, label in self._entries], dtype=np.int64)
        return vecs, labels


def bank_update(bank: MemoryBank, embeddings, labels) -> MemoryBank:
    """FIFO append of detached copies; overflow keeps only the newest entries."""
    vecs = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
    if bank.capacity == 0:
        return bank
    for vec, label in zip(vecs, labels):
        bank._entries.append((np.array(vec, copy=True), int(label)))
    return bank
