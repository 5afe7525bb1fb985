import numpy as np
import pytest

from hyenarec.numerics import Tensor, finite_diff_grad, relative_error


def grad_check(loss_fn, params, eps=1e-5, floor=1e-6):
    """Max relative error between backprop and central differences over ``params``."""
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        fd = finite_diff_grad(loss_fn, p, eps)
        bp = np.zeros(p.shape) if p.grad is None else p.grad
        worst = max(worst, float(relative_error(bp, fd, floor).max()))
    return worst


def leaf(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
