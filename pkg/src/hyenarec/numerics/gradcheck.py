"""Central finite differences, used as the independent gradient oracle."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from ..errors import NumericalError, ParameterError
from .tensor import Tensor, no_grad


def _scalar(value) -> float:
    v = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(v):
        raise NumericalError(f"loss is not finite: {v}")
    return v


def finite_diff_grad(loss_fn: Callable[[], object], params: Tensor, eps: float = 1e-5,
                     indices: Iterable[int] | None = None) -> np.ndarray:
    """Estimate d loss / d params by ``(f(p+eps) - f(p-eps)) / (2 eps)``.

    ``params`` is perturbed in place and restored. ``indices`` restricts the
    estimate to a subset of flat coordinates; other entries stay zero.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    flat = params.data.reshape(-1)
    grad = np.zeros(flat.size)
    coords = range(flat.size) if indices is None else indices
    with no_grad():
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            params.bump()
            fp = _scalar(loss_fn())
            flat[i] = orig - eps
            params.bump()
            fm = _scalar(loss_fn())
            flat[i] = orig
            params.bump()
            grad[i] = (fp - fm) / (2 * eps)
    return grad.reshape(params.shape)


def relative_error(a, b, floor: float = 1e-6) -> np.ndarray:
    """``|a - b| / max(|a|, |b|, floor)``, elementwise."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
