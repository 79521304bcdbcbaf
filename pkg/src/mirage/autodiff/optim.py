"""SGD with momentum and a cosine-annealed learning rate."""

from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeMismatchError, Tensor

__all__ = ["OptimizerState", "cosine_lr", "sgd_step"]


def cosine_lr(base_lr: float, step: int, total_steps: int, min_lr: float = 0.0) -> float:
    """lr(t) = min + 0.5 * (base - min) * (1 + cos(pi * t / T))."""
    if total_steps <= 0:
        return base_lr
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * step / total_steps))


class OptimizerState:
    """Per-parameter momentum buffers plus the schedule position."""

    def __init__(
        self,
        params: list[Tensor],
        base_lr: float = 0.002,
        momentum: float = 0.9,
        total_steps: int = 1,
        min_lr: float = 0.0,
    ):
        self.base_lr = float(base_lr)
        self.momentum = float(momentum)
        self.total_steps = int(total_steps)
        self.min_lr = float(min_lr)
        self.step = 0
        self.velocities = [np.zeros_like(p.data) for p in params]

    def current_lr(self) -> float:
        return cosine_lr(self.base_lr, self.step, self.total_steps, self.min_lr)


def sgd_step(params: list[Tensor], grads: dict, state: OptimizerState) -> list[Tensor]:
    """One update p <- p - lr(t) * v with v <- mu * v + g; returns new tensors.

    Parameters missing from the gradient map get a zero gradient (their
    momentum still decays). Order must match the state's buffers.
    """
    if state.step >= state.total_steps:
        raise ValueError(f"optimizer exhausted: step {state.step} >= total {state.total_steps}")
    lr = state.current_lr()
    updated = []
    for i, p in enumerate(params):
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ShapeMismatchError("sgd_step", f"param {p.shape} vs grad {g.shape}")
        v = state.momentum * state.velocities[i] + g
        state.velocities[i] = v
        updated.append(Tensor((p.data - lr * v).astype(p.data.dtype), grad_tracked=True))
    state.step += 1
    return updated
