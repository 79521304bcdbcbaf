import numpy as np
import pytest

from mirage.autodiff import OptimizerState, Tensor, cosine_lr, sgd_step


def test_schedule_endpoints():
    assert cosine_lr(0.002, 0, 100) == pytest.approx(0.002)
    assert cosine_lr(0.002, 100, 100) == pytest.approx(0.0, abs=1e-12)
    assert cosine_lr(0.002, 50, 100) == pytest.approx(0.001)


def test_schedule_monotone_nonincreasing():
    lrs = [cosine_lr(0.1, t, 37) for t in range(38)]
    assert all(a >= b - 1e-15 for a, b in zip(lrs, lrs[1:]))
    assert all(0.0 <= lr <= 0.1 for lr in lrs)


def test_plain_gradient_step():
    p = Tensor(np.zeros(1), grad_tracked=True)
    state = OptimizerState([p], base_lr=1.0, momentum=0.0, total_steps=2)
    # schedule at t=0 gives lr0 exactly
    (p2,) = sgd_step([p], {p: np.array([3.0], dtype=np.float32)}, state)
    np.testing.assert_allclose(p2.numpy(), [-3.0])


def test_momentum_accumulates():
    p = Tensor(np.zeros(1), grad_tracked=True)
    state = OptimizerState([p], base_lr=1.0, momentum=0.5, total_steps=10)
    g = {p: np.array([1.0], dtype=np.float32)}
    (p1,) = sgd_step([p], g, state)
    lr1 = cosine_lr(1.0, 1, 10)
    (p2,) = sgd_step([p1], {p1: np.array([1.0], dtype=np.float32)}, state)
    # second velocity is 0.5 * 1 + 1 = 1.5
    np.testing.assert_allclose(p2.numpy(), p1.numpy() - lr1 * 1.5, rtol=1e-6)


def test_shape_mismatch_rejected():
    p = Tensor(np.zeros(2), grad_tracked=True)
    state = OptimizerState([p], total_steps=1)
    with pytest.raises(Exception, match="sgd_step"):
        sgd_step([p], {p: np.zeros(3, dtype=np.float32)}, state)


def test_exhausted_schedule_rejected():
    p = Tensor(np.zeros(1), grad_tracked=True)
    state = OptimizerState([p], total_steps=1)
    sgd_step([p], {p: np.zeros(1, dtype=np.float32)}, state)
    with pytest.raises(ValueError):
        sgd_step([p], {p: np.zeros(1, dtype=np.float32)}, state)
