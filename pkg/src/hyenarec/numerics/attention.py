"""Fused causal softmax attention.

The forward pass keeps only the per-row log-sum-exp; the backward pass
recomputes each batch element's probability matrix, so live memory is one
[L, L] block at a time instead of [B, L, L] on the tape.
"""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, make_node


def _allowed(L: int, key_mask: np.ndarray | None) -> np.ndarray:
    allowed = np.tri(L, dtype=bool)
    if key_mask is not None:
        allowed = allowed & key_mask[None, :]
        np.fill_diagonal(allowed, True)
    return allowed


def causal_attention(q: Tensor, k: Tensor, v: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
    """Single-head scaled dot-product attention with a causal mask.

    ``key_mask`` [B, L] marks valid (non-padding) keys. A query always sees its
    own key so padded rows keep a well-defined softmax.
    """
    if not (q.shape == k.shape == v.shape) or q.ndim != 3:
        raise DimensionError(f"attention expects equal [B,L,D] inputs, got {q.shape}, {k.shape}, {v.shape}")
    b, L, d = q.shape
    scale = 1.0 / np.sqrt(d)
    out = np.empty_like(v.data)
    lse = np.empty((b, L))
    causal = np.tri(L, dtype=bool)
    for i in range(b):
        allowed = causal if key_mask is None else _allowed(L, key_mask[i])
        s = (q.data[i] @ k.data[i].T) * scale
        s[~allowed] = -np.inf
        m = s.max(axis=1, keepdims=True)
        np.subtract(s, m, out=s)
        np.exp(s, out=s)
        tot = s.sum(axis=1, keepdims=True)
        s /= tot
        out[i] = s @ v.data[i]
        lse[i] = (m + np.log(tot))[:, 0]

    def backward(g):
        gq = np.zeros_like(q.data)
        gk = np.zeros_like(k.data)
        gv = np.zeros_like(v.data)
        for i in range(b):
            allowed = causal if key_mask is None else _allowed(L, key_mask[i])
            p = (q.data[i] @ k.data[i].T) * scale
            p -= lse[i][:, None]
            p[~allowed] = -np.inf
            np.exp(p, out=p)
            gv[i] = p.T @ g[i]
            dp = g[i] @ v.data[i].T
            dp -= (g[i] * out[i]).sum(axis=1, keepdims=True)
            dp *= p
            gq[i] = (dp @ k.data[i]) * scale
            gk[i] = (dp.T @ q.data[i]) * scale
        return gq, gk, gv

    return make_node(out, (q, k, v), backward, "causal_attention")
