"""Sequence mixers: the gated long-convolution Hyena operator and a causal attention baseline.

Both mixers map [B, L, D] -> [B, L, D], are causal in time, and accept an
optional boolean ``mask`` [B, L] marking non-padding positions. Padded
positions are zeroed before every convolution so that left padding never
leaks into real positions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .filters import FilterBank, make_basis
from .numerics import (Linear, Module, Tensor, causal_attention, causal_conv_fft,
                       depthwise_causal_conv, param, sigmoid, split_last)


def positional_embedding(L: int, num_freqs: int) -> np.ndarray:
    """Complex-exponential features ``[t, Re z_1..z_F, Im z_1..z_F]`` per step.

    ``t = k / L`` for k = 0..L-1 and ``z_f(t) = exp(-i 2 pi f t / L)``. The
    Legendre filter path does not consume these features; they are exposed for
    inspection and for implicit-filter experiments.
    """
    t = np.arange(L) / L
    f = np.arange(1, num_freqs + 1)
    z = np.exp(-1j * 2 * np.pi * np.outer(t, f) / L)
    return np.concatenate([t[:, None], z.real, z.imag], axis=1)


@dataclass
class MixerOutput:
    y: Tensor
    traces: list[Tensor] = field(default_factory=list)


def _masked(x: Tensor, mask: np.ndarray | None) -> Tensor:
    return x if mask is None else x * mask[..., None].astype(np.float64)


class HyenaOperator(Module):
    """Channel expansion, short gated path, O-1 long gated convolutions, output projection.

    With order ``O`` the expanded width is ``D * (O + 1)``; the short path output
    splits into modulation streams ``X0..X(O-1)`` and the initial state ``V0``.
    Stage ``o`` computes ``V_o = conv(V_{o-1} * X_o, k_o)`` and the output is
    ``(V_{O-1} * X0) @ W_out``.
    """

    def __init__(self, d_model: int, max_len: int, rng: np.random.Generator, *, order: int = 2,
                 basis_size: int = 64, basis: str = "legendre", short_width: int = 3,
                 glu: bool = True, pk: bool = True, kernel_taps: int | None = None,
                 share_stage_coeffs: bool = False, eps_norm: float = 1e-8, init_std: float = 0.02):
        if order < 2:
            raise ConfigError(f"operator order must be >= 2, got {order}")
        self.d_model = d_model
        self.order = order
        self.glu = glu
        d_exp = d_model * (order + 1)
        self.in_proj = Linear(d_model, d_exp, rng, init_std)
        short = np.zeros((d_exp, short_width))
        short[:, 0] = 1.0
        short += rng.normal(0.0, init_std, size=short.shape)
        self.short_weight = param(short)
        self.short_bias = param(np.zeros(d_exp))
        self.gate = Linear(d_model, d_exp, rng, init_std) if glu else None
        taps = max_len if kernel_taps is None else min(kernel_taps, max_len)
        family = basis if pk else "free"
        k = taps if family == "free" else min(basis_size, taps)
        fbasis = make_basis(family, k, max_len, taps)
        n_banks = 1 if share_stage_coeffs else order - 1
        self.filters = [FilterBank(d_model, fbasis, rng, eps_norm) for _ in range(n_banks)]
        self._share = share_stage_coeffs
        self.out_proj = Linear(d_model, d_model, rng, init_std)

    @property
    def banks(self) -> list[FilterBank]:
        return self.filters * (self.order - 1) if self._share else list(self.filters)

    def expand(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_model:
            raise DimensionError(f"expected last dim {self.d_model}, got {x.shape}")
        return self.in_proj(x)

    def short_path(self, u: Tensor, gate_input: Tensor | None = None,
                   mask: np.ndarray | None = None) -> tuple[list[Tensor], Tensor]:
        """Causal short convolution, GLU gating, split into (X streams, V0).

        The GLU gate is a pointwise projection of ``gate_input`` (the operator
        input), so together with ``u`` it forms the double-width pre-activation.
        """
        d_exp = self.d_model * (self.order + 1)
        if u.shape[-1] != d_exp:
            raise DimensionError(f"expanded width {u.shape[-1]} != D*(O+1) = {d_exp}")
        s = depthwise_causal_conv(_masked(u, mask), self.short_weight, self.short_bias)
        if self.glu:
            if gate_input is None:
                raise ConfigError("GLU gating needs the operator input")
            s = s * sigmoid(self.gate(gate_input))
        groups = split_last(s, self.d_model)
        return groups[:-1], _masked(groups[-1], mask)

    def long_path(self, x_streams: list[Tensor], v0: Tensor, banks: list[FilterBank] | None = None,
                  traces: list[Tensor] | None = None) -> Tensor:
        banks = self.banks if banks is None else banks
        if len(banks) != len(x_streams) - 1:
            raise ConfigError(f"need {len(x_streams) - 1} filter banks, got {len(banks)}")
        L = v0.shape[1]
        v = v0
        for o, bank in enumerate(banks, start=1):
            k = bank.kernels()
            if k.shape[1] != L:
                k = k[:, :L]
            v = causal_conv_fft(v * x_streams[o], k)
            if traces is not None:
                traces.append(v)
        return v

    def mix(self, x: Tensor, mask: np.ndarray | None = None, trace: bool = False) -> MixerOutput:
        u = self.expand(x)
        streams, v0 = self.short_path(u, x, mask)
        traces: list[Tensor] | None = [v0] if trace else None
        v = self.long_path(streams, v0, traces=traces)
        y = self.out_proj(v * streams[0])
        return MixerOutput(y, traces or [])

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        return self.mix(x, mask).y


class CausalSelfAttention(Module):
    """Single-head masked scaled dot-product attention (quadratic-cost baseline)."""

    def __init__(self, d_model: int, rng: np.random.Generator, init_std: float = 0.02):
        self.d_model = d_model
        self.q_proj = Linear(d_model, d_model, rng, init_std)
        self.k_proj = Linear(d_model, d_model, rng, init_std)
        self.v_proj = Linear(d_model, d_model, rng, init_std)
        self.out_proj = Linear(d_model, d_model, rng, init_std)

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.d_model:
            raise DimensionError(f"expected [B,L,{self.d_model}], got {x.shape}")
        a = causal_attention(self.q_proj(x), self.k_proj(x), self.v_proj(x), mask)
        return self.out_proj(a)


def attention_mix(x: Tensor, attn: CausalSelfAttention, mask: np.ndarray | None = None) -> Tensor:
    return attn(x, mask)
