"""Central-difference gradient verification for scalar tensor functions."""

from __future__ import annotations

import numpy as np

from .tensor import AutodiffError, Tape, Tensor, backward

__all__ = ["grad_check"]


def grad_check(function, point: Tensor, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``function`` maps one Tensor to a scalar Tensor. Error per coordinate is
    |analytic - numeric| / max(1, |numeric|); the max over coordinates is
    returned. Probes use 64-bit copies of ``point``.
    """
    base = point.data.astype(np.float64)

    def eval_at(arr: np.ndarray) -> float:
        out = function(Tensor(arr, grad_tracked=False))
        val = out.item()
        if not np.isfinite(val):
            raise AutodiffError("grad_check: non-finite function value at probe point")
        return val

    with Tape() as tape:
        leaf = Tensor(base, grad_tracked=True)
        root = function(leaf)
    if root.size != 1:
        raise AutodiffError("grad_check: function must be scalar-valued")
    grads = backward(tape, root)
    analytic = grads.get(leaf)
    if analytic is None:
        analytic = np.zeros_like(base)

    flat = base.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += step
        minus[i] -= step
        numeric[i] = (eval_at(plus.reshape(base.shape)) - eval_at(minus.reshape(base.shape))) / (
            2.0 * step
        )

    diff = np.abs(analytic.reshape(-1) - numeric)
    scale = np.maximum(1.0, np.abs(numeric))
    return float((diff / scale).max()) if flat.size else 0.0
