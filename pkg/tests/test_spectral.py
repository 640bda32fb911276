import numpy as np
import pytest
from hypothesis import given, strategies as st

from speclab.errors import DimensionTooLarge, NegativeEigenvalue, ShapeMismatch
from speclab.generators import gen_random
from speclab.graph import normalized_matrices
from speclab.spectral import (
    best_rank_k_value,
    eckart_young_minimizer,
    eigendecompose,
    mf_loss,
    principal_angles,
    reconstruct,
)


class TestEigendecompose:
    def test_two_block_spectrum(self, g0):
        dec = eigendecompose(normalized_matrices(g0), 2)
        assert np.allclose(dec.eigenvalues, [1, 1, 0, 0], atol=1e-12)
        assert np.allclose(np.sort(dec.lambdas), [0, 0, 1, 1], atol=1e-12)

    def test_k_out_of_range(self, g0):
        m = normalized_matrices(g0)
        with pytest.raises(DimensionTooLarge):
            eigendecompose(m, 5)
        with pytest.raises(DimensionTooLarge):
            eigendecompose(m, 0)

    def test_sign_convention(self):
        g = gen_random(4, 10, 2, 3)
        V = eigendecompose(normalized_matrices(g), 3).eigenvectors
        idx = np.argmax(np.abs(V), axis=0)
        assert np.all(V[idx, np.arange(V.shape[1])] > 0)

    def test_deterministic(self):
        m = normalized_matrices(gen_random(4, 10, 2, 1))
        a, b = eigendecompose(m, 2), eigendecompose(m, 2)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)

    @given(st.integers(0, 10_000))
    def test_reconstruction_and_orthonormality(self, seed):
        m = normalized_matrices(gen_random(5, 11, 2, seed))
        dec = eigendecompose(m, 2)
        assert np.allclose(reconstruct(dec), m.adjacency, atol=1e-10)
        V = dec.eigenvectors
        assert np.allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-10)
        assert np.all(np.diff(dec.eigenvalues) <= 1e-14)
        assert dec.lambdas[0] == pytest.approx(0.0, abs=1e-8)


class TestLowRank:
    def test_two_block_optimum(self, g0):
        m = normalized_matrices(g0)
        dec = eigendecompose(m, 2)
        F = eckart_young_minimizer(dec, 2)
        assert mf_loss(m, F) == pytest.approx(0.0, abs=1e-12)
        assert best_rank_k_value(dec, 1) == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_eckart_young_is_optimal(self, seed, k):
        m = normalized_matrices(gen_random(5, 10, 2, seed))
        dec = eigendecompose(m, k)
        F = eckart_young_minimizer(dec, k)
        opt = best_rank_k_value(dec, k)
        assert mf_loss(m, F) == pytest.approx(opt, abs=1e-10)
        rng = np.random.default_rng(seed)
        for _ in range(5):
            G = F + 0.05 * rng.normal(size=F.shape)
            assert mf_loss(m, G) >= opt - 1e-12

    def test_negative_eigenvalue(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        dec = eigendecompose(A, 2)
        with pytest.raises(NegativeEigenvalue):
            eckart_young_minimizer(dec, 2)

    def test_shape_mismatch(self, g0):
        with pytest.raises(ShapeMismatch):
            mf_loss(normalized_matrices(g0), np.zeros((3, 2)))


class TestPrincipalAngles:
    def test_same_span_zero(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(8, 3))
        B = A @ rng.normal(size=(3, 3))
        assert np.max(principal_angles(A, B)) < 1e-7

    def test_orthogonal_spans(self):
        A = np.eye(4)[:, :2]
        B = np.eye(4)[:, 2:]
        assert np.allclose(principal_angles(A, B), np.pi / 2)
