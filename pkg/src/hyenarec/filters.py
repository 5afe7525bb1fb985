"""Polynomial kernel bases and L1-normalized filter banks.

A filter bank holds a coefficient matrix ``C`` [D, K] and a fixed basis
``P`` [K, L]; the per-channel long-convolution kernels are the rows of
``C @ P`` divided by their L1 norms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, ParameterError
from .numerics import Module, Tensor, matmul, param, tabs
from .numerics.tensor import is_grad_enabled

FAMILIES = ("legendre", "chebyshev", "fourier", "free")


@dataclass(frozen=True)
class BasisMatrix:
    family: str
    values: np.ndarray  # [K, L]

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1]


def _check_sizes(K: int, L: int):
    if K < 1:
        raise ParameterError(f"basis size K must be >= 1, got {K}")
    if L < 2:
        raise ParameterError(f"grid length L must be >= 2, got {L}")


def legendre_values(K: int, x) -> np.ndarray:
    """P_0..P_{K-1} at arbitrary points ``x`` via the three-term recurrence; shape [K, len(x)]."""
    x = np.asarray(x, dtype=np.float64)
    P = np.empty((K, x.size))
    P[0] = 1.0
    if K > 1:
        P[1] = x
    for n in range(1, K - 1):
        P[n + 1] = ((2 * n + 1) * x * P[n] - n * P[n - 1]) / (n + 1)
    return P


def legendre_basis(K: int, L: int) -> BasisMatrix:
    """Rows P_0..P_{K-1} on ``linspace(-1, 1, L)``."""
    _check_sizes(K, L)
    return BasisMatrix("legendre", legendre_values(K, np.linspace(-1.0, 1.0, L)))


def chebyshev_basis(K: int, L: int) -> BasisMatrix:
    _check_sizes(K, L)
    x = np.linspace(-1.0, 1.0, L)
    T = np.empty((K, L))
    T[0] = 1.0
    if K > 1:
        T[1] = x
    for n in range(1, K - 1):
        T[n + 1] = 2 * x * T[n] - T[n - 1]
    return BasisMatrix("chebyshev", T)


def fourier_basis(K: int, L: int) -> BasisMatrix:
    """Constant row followed by (cos, sin) pairs of frequency 1, 2, ... on [0, 1]."""
    _check_sizes(K, L)
    t = np.linspace(0.0, 1.0, L)
    F = np.empty((K, L))
    F[0] = 1.0
    for row in range(1, K):
        f = (row + 1) // 2
        F[row] = np.cos(2 * np.pi * f * t) if row % 2 else np.sin(2 * np.pi * f * t)
    return BasisMatrix("fourier", F)


def make_basis(family: str, K: int, L: int, taps: int | None = None) -> BasisMatrix:
    """Basis of kernel length ``L`` whose support is the first ``taps`` positions.

    With ``taps < L`` the functions live on a grid of ``taps`` points and the
    remaining columns are zero, giving a truncated (short) kernel.
    """
    taps = L if taps is None else taps
    if not 2 <= taps <= L:
        raise ParameterError(f"kernel taps must be in [2, {L}], got {taps}")
    if family == "legendre":
        b = legendre_basis(K, taps)
    elif family == "chebyshev":
        b = chebyshev_basis(K, taps)
    elif family == "fourier":
        b = fourier_basis(K, taps)
    elif family == "free":
        b = BasisMatrix("free", np.eye(taps))
    else:
        raise ParameterError(f"unknown basis family {family!r}; expected one of {FAMILIES}")
    if taps == L:
        return b
    values = np.zeros((b.K, L))
    values[:, :taps] = b.values
    return BasisMatrix(b.family, values)


def build_kernels(coeffs: Tensor, basis: BasisMatrix, eps_norm: float = 1e-8) -> Tensor:
    """Rows of ``C @ P`` scaled to unit L1 norm (denominator ``||row||_1 + eps_norm``)."""
    if coeffs.ndim != 2 or coeffs.shape[1] != basis.K:
        raise DimensionError(f"coefficients {coeffs.shape} do not match basis with K={basis.K}")
    raw = coeffs if basis.family == "free" and basis.K == basis.L else matmul(coeffs, Tensor(basis.values))
    norm = tabs(raw).sum(axis=1, keepdims=True) + eps_norm
    if not np.all(norm.data > 0):
        raise NumericalError("zero kernel row with eps_norm = 0")
    return raw / norm


def energy_curve(coeffs, basis: BasisMatrix, per_channel: bool = False) -> np.ndarray:
    """Cumulative share of squared energy captured by the first K basis rows, K = 1..N.

    Row n contributes ``||c_n||^2 ||p_n||^2`` (the Frobenius norm of the
    rank-one term ``c_n p_n^T``). With ``per_channel`` the curve is computed
    separately for each coefficient row.
    """
    c = coeffs.data if isinstance(coeffs, Tensor) else np.asarray(coeffs, dtype=np.float64)
    if c.shape[1] != basis.K:
        raise DimensionError(f"coefficients {c.shape} do not match basis with K={basis.K}")
    contrib = c ** 2 * (basis.values ** 2).sum(axis=1)
    if not per_channel:
        contrib = contrib.sum(axis=0, keepdims=True)
    total = contrib.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise NumericalError("energy fraction undefined for zero total energy")
    curve = np.cumsum(contrib, axis=1) / total
    curve[:, -1] = 1.0
    return curve if per_channel else curve[0]


def energy_fraction(coeffs, basis: BasisMatrix, K: int) -> float:
    n = basis.K
    if not 1 <= K <= n:
        raise ParameterError(f"K must be in [1, {n}], got {K}")
    return float(energy_curve(coeffs, basis)[K - 1])


class FilterBank(Module):
    """Learnable coefficients over a fixed basis producing [D, L] kernels.

    Kernels are rebuilt on the tape whenever gradients are being recorded; in
    inference mode they are cached and rebuilt only after the coefficients
    change (``Tensor.version``).
    """

    def __init__(self, channels: int, basis: BasisMatrix, rng: np.random.Generator,
                 eps_norm: float = 1e-8):
        self.basis = basis
        self.eps_norm = eps_norm
        std = 1.0 / np.sqrt(basis.K)
        self.coeffs = param(rng.normal(0.0, std, size=(channels, basis.K)))
        self._cache: tuple[int, Tensor] | None = None

    @property
    def length(self) -> int:
        return self.basis.L

    def invalidate(self):
        self._cache = None

    def kernels(self) -> Tensor:
        if is_grad_enabled():
            return build_kernels(self.coeffs, self.basis, self.eps_norm)
        if self._cache is None or self._cache[0] != self.coeffs.version:
            self._cache = (self.coeffs.version, build_kernels(self.coeffs, self.basis, self.eps_norm))
        return self._cache[1]

    def forward(self) -> Tensor:
        return self.kernels()
