import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyenarec.errors import DimensionError, NumericalError, ParameterError
from hyenarec.filters import (FilterBank, build_kernels, chebyshev_basis, energy_curve,
                              energy_fraction, fourier_basis, legendre_basis, legendre_values,
                              make_basis)
from hyenarec.numerics import Tensor, no_grad
from hyenarec.numerics.tensor import tsum

from conftest import grad_check

CLOSED_FORMS = [
    lambda x: np.ones_like(x),
    lambda x: x,
    lambda x: (3 * x**2 - 1) / 2,
    lambda x: (5 * x**3 - 3 * x) / 2,
    lambda x: (35 * x**4 - 30 * x**2 + 3) / 8,
    lambda x: (63 * x**5 - 70 * x**3 + 15 * x) / 8,
]


def trapezoid_weights(L, span):
    w = np.full(L, span / (L - 1))
    w[[0, -1]] /= 2
    return w


class TestLegendre:
    def test_p0_is_one(self):
        np.testing.assert_array_equal(legendre_basis(4, 11).values[0], 1.0)

    def test_known_values(self):
        b = legendre_basis(4, 5).values  # grid -1, -0.5, 0, 0.5, 1
        assert b[2, 2] == pytest.approx(-0.5, abs=1e-15)
        assert b[3, 3] == pytest.approx(-0.4375, abs=1e-15)

    def test_closed_forms_at_random_points(self, rng):
        x = rng.uniform(-1, 1, 100)
        P = legendre_values(6, x)
        for n, f in enumerate(CLOSED_FORMS):
            assert np.abs(P[n] - f(x)).max() < 1e-10

    def test_grid_rows_match_closed_forms(self):
        L = 101
        x = np.linspace(-1, 1, L)
        b = legendre_basis(6, L).values
        for n, f in enumerate(CLOSED_FORMS):
            assert np.abs(b[n] - f(x)).max() < 1e-12

    def test_endpoints(self):
        b = legendre_basis(65, 300).values
        n = np.arange(65)
        assert np.abs(b[:, 0] - (-1.0) ** n).max() < 1e-12
        assert np.abs(b[:, -1] - 1.0).max() < 1e-12

    def test_discrete_orthogonality(self):
        L = 1024
        P = legendre_basis(33, L).values
        G = (P * trapezoid_weights(L, 2.0)) @ P.T
        off = G - np.diag(np.diag(G))
        assert np.abs(off).max() / np.diag(G).max() < 1e-3
        np.testing.assert_allclose(np.diag(G), 2.0 / (2 * np.arange(33) + 1), rtol=0.05)

    @pytest.mark.parametrize("K, L", [(0, 10), (3, 1)])
    def test_size_errors(self, K, L):
        with pytest.raises(ParameterError):
            legendre_basis(K, L)


class TestChebyshev:
    def test_known_values(self):
        b = chebyshev_basis(4, 5).values
        assert b[2, 2] == pytest.approx(-1.0)
        assert b[3, 3] == pytest.approx(-1.0)

    def test_endpoint_and_bound(self):
        b = chebyshev_basis(65, 257).values
        assert np.abs(b[:, -1] - 1.0).max() < 1e-12
        assert np.abs(b).max() <= 1 + 1e-12


class TestFourier:
    def test_rows(self):
        b = fourier_basis(5, 101).values
        np.testing.assert_array_equal(b[0], 1.0)
        assert b[1, 0] == pytest.approx(1.0)
        assert b[1, 50] == pytest.approx(-1.0)

    def test_even_K_truncates_last_pair(self):
        b = fourier_basis(4, 21).values
        t = np.linspace(0, 1, 21)
        np.testing.assert_allclose(b[3], np.cos(2 * np.pi * 2 * t))

    def test_discrete_orthogonality(self):
        L = 1024
        F = fourier_basis(21, L).values
        G = (F * trapezoid_weights(L, 1.0)) @ F.T
        d = np.diag(G)
        off = np.abs(G - np.diag(d)) / np.sqrt(np.outer(d, d))
        assert off.max() < 1e-6


class TestBuildKernels:
    def test_constant_row(self):
        L = 16
        c = np.zeros((2, 4))
        c[0, 0] = 5.0
        c[1, 0] = 1.0
        k = build_kernels(Tensor(c), legendre_basis(4, L)).data
        np.testing.assert_allclose(k, 1.0 / L, rtol=1e-7)

    def test_zero_row_is_safe(self):
        k = build_kernels(Tensor(np.zeros((1, 4))), legendre_basis(4, 8)).data
        assert np.isfinite(k).all() and np.abs(k).max() == 0.0

    def test_zero_row_without_eps(self):
        with pytest.raises(NumericalError):
            build_kernels(Tensor(np.zeros((1, 4))), legendre_basis(4, 8), eps_norm=0.0)

    def test_dense_oracle(self, rng):
        c = rng.normal(size=(4, 8))
        basis = legendre_basis(8, 32)
        raw = np.zeros((4, 32))
        for d in range(4):
            for t in range(32):
                raw[d, t] = sum(c[d, n] * basis.values[n, t] for n in range(8))
        ref = raw / (np.abs(raw).sum(axis=1, keepdims=True) + 1e-8)
        out = build_kernels(Tensor(c), basis).data
        assert (np.abs(out - ref) / np.abs(ref).max()).max() < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            build_kernels(Tensor(np.ones((2, 3))), legendre_basis(4, 8))

    def test_gradient(self, rng):
        c = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        basis = legendre_basis(4, 16)
        probe = rng.normal(size=(2, 16))
        assert grad_check(lambda: tsum(build_kernels(c, basis) * probe), [c]) < 1e-6

    @pytest.mark.parametrize("family", ["legendre", "chebyshev", "fourier", "free"])
    def test_l1_constraint(self, family, rng):
        for _ in range(20):
            bank = FilterBank(6, make_basis(family, 8 if family != "free" else 32, 32), rng)
            s = np.abs(bank.kernels().data).sum(axis=1)
            assert np.all(s <= 1.0) and np.all(s >= 1 - 1e-6)

    def test_truncated_support(self, rng):
        bank = FilterBank(3, make_basis("legendre", 8, 64, taps=8), rng)
        k = bank.kernels().data
        assert k.shape == (3, 64)
        assert np.abs(k[:, 8:]).max() == 0.0


class TestFilterBankCache:
    def test_rebuilds_after_update(self, rng):
        bank = FilterBank(2, legendre_basis(4, 8), rng)
        with no_grad():
            k1 = bank.kernels()
            assert bank.kernels() is k1
            bank.coeffs.data[0, 1] += 1.0
            bank.coeffs.bump()
            k2 = bank.kernels()
        assert k2 is not k1
        np.testing.assert_allclose(k2.data, build_kernels(bank.coeffs, bank.basis).data)


class TestEnergy:
    def test_only_first_row(self):
        c = np.zeros((3, 5))
        c[:, 0] = [1.0, -2.0, 0.5]
        curve = energy_curve(c, legendre_basis(5, 50))
        np.testing.assert_array_equal(curve, 1.0)

    def test_full_is_one(self, rng):
        b = legendre_basis(6, 40)
        assert energy_fraction(rng.normal(size=(4, 6)), b, 6) == 1.0

    def test_equal_energies(self):
        b = legendre_basis(4, 64)
        norms = np.sqrt((b.values ** 2).sum(axis=1))
        c = (1.0 / norms)[None, :]
        assert energy_fraction(c, b, 2) == pytest.approx(0.5, abs=1e-12)

    def test_zero_energy(self):
        with pytest.raises(NumericalError):
            energy_curve(np.zeros((2, 4)), legendre_basis(4, 8))

    def test_k_range(self, rng):
        with pytest.raises(ParameterError):
            energy_fraction(rng.normal(size=(2, 4)), legendre_basis(4, 8), 5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 16), st.integers(1, 6), st.integers(0, 10_000))
    def test_monotone(self, K, D, seed):
        c = np.random.default_rng(seed).normal(size=(D, K))
        curve = energy_curve(c, legendre_basis(K, 32), per_channel=True)
        assert np.all(np.diff(curve, axis=1) >= -1e-15)
        np.testing.assert_array_equal(curve[:, -1], 1.0)
