"""Real FFT wrappers and causal convolutions on the tape."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, ParameterError
from .tensor import Tensor, as_tensor, make_node


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def fft_size(length: int) -> int:
    """Smallest power of two >= 2 * length (linear, not circular, convolution)."""
    return 1 << max(1, (2 * length - 1).bit_length())


@dataclass(frozen=True)
class ComplexSpectrum:
    """Half spectrum of a real signal zero-padded to ``length`` (a power of two)."""

    length: int
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if not is_pow2(self.length):
            raise ParameterError(f"spectrum length must be a power of two, got {self.length}")

    @property
    def values(self) -> np.ndarray:
        return self.re + 1j * self.im


def rfft(x, padded_len: int) -> ComplexSpectrum:
    x = np.asarray(x, dtype=np.float64)
    if not is_pow2(padded_len):
        raise ParameterError(f"padded_len must be a power of two, got {padded_len}")
    if padded_len < x.shape[-1]:
        raise ParameterError(f"padded_len {padded_len} shorter than signal length {x.shape[-1]}")
    spectrum = np.fft.rfft(x, n=padded_len)
    return ComplexSpectrum(padded_len, spectrum.real.copy(), spectrum.imag.copy())


def irfft(spectrum: ComplexSpectrum, length: int | None = None) -> np.ndarray:
    out = np.fft.irfft(spectrum.values, n=spectrum.length)
    return out if length is None else out[..., :length]


def causal_conv_fft(x: Tensor, kernels: Tensor) -> Tensor:
    """Per-channel causal convolution ``y[b,t,d] = sum_{tau<=t} k[d,tau] x[b,t-tau,d]``.

    ``x`` is [B, L, D] and ``kernels`` is [D, L]. Both inputs are differentiable;
    the kernel gradient is the cross-correlation of the upstream gradient with
    the input, evaluated in the same padded spectrum.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 3:
        raise DimensionError(f"causal_conv_fft expects x of shape [B,L,D], got {x.shape}")
    b, L, d = x.shape
    if kernels.shape != (d, L):
        raise DimensionError(f"kernel shape {kernels.shape} does not match (D, L) = {(d, L)}")
    n = fft_size(L)
    # channels-major keeps each FFT contiguous
    xt = np.ascontiguousarray(x.data.transpose(0, 2, 1))
    xf = np.fft.rfft(xt, n=n)
    kf = np.fft.rfft(kernels.data, n=n)
    y = np.fft.irfft(xf * kf, n=n)[..., :L]

    def backward(g):
        gf = np.fft.rfft(np.ascontiguousarray(g.transpose(0, 2, 1)), n=n)
        gx = gk = None
        if x.requires_grad:
            gx = np.fft.irfft(gf * np.conj(kf), n=n)[..., :L].transpose(0, 2, 1)
        if kernels.requires_grad:
            gk = np.fft.irfft((gf * np.conj(xf)).sum(axis=0), n=n)[..., :L]
        return gx, gk

    return make_node(np.ascontiguousarray(y.transpose(0, 2, 1)), (x, kernels), backward, "causal_conv_fft")


def depthwise_causal_conv(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Short causal depthwise convolution by direct summation.

    ``weight[c, j]`` multiplies ``x[:, t-j, c]``; positions before the start are zero.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    b, L, c = x.shape
    if weight.ndim != 2 or weight.shape[0] != c:
        raise DimensionError(f"weight shape {weight.shape} does not match channel count {c}")
    width = weight.shape[1]
    xd, w = x.data, weight.data
    y = xd * w[:, 0]
    for j in range(1, min(width, L)):
        y[:, j:, :] += xd[:, :-j, :] * w[:, j]
    parents = (x, weight)
    if bias is not None:
        y = y + bias.data
        parents = (x, weight, bias)

    def backward(g):
        gx = gw = None
        if x.requires_grad:
            gx = g * w[:, 0]
            for j in range(1, min(width, L)):
                gx[:, :-j, :] += g[:, j:, :] * w[:, j]
        if weight.requires_grad:
            gw = np.zeros_like(w)
            gw[:, 0] = (g * xd).sum(axis=(0, 1))
            for j in range(1, min(width, L)):
                gw[:, j] = (g[:, j:, :] * xd[:, :-j, :]).sum(axis=(0, 1))
        grads = (gx, gw)
        if bias is not None:
            grads += (g.sum(axis=(0, 1)) if bias.requires_grad else None,)
        return grads

    return make_node(y, parents, backward, "depthwise_causal_conv")
