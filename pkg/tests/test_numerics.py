import numpy as np
import pytest

from airfc_modules.numerics import (
    as_complex_matrix,
    fro2,
    herm,
    hermitian_eig,
    numerical_rank,
    pinv_apply,
    psd_solve,
)
from shared_modules.errors import DimensionMismatch, IndefiniteInput, NotHermitian
from tests.conftest import crandn


class TestComplexMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            as_complex_matrix([[1.0, np.nan]])

    def test_rejects_empty_and_vectors(self):
        with pytest.raises(DimensionMismatch):
            as_complex_matrix(np.zeros((0, 3)))
        with pytest.raises(DimensionMismatch):
            as_complex_matrix(np.ones(3))

    def test_copy_is_complex(self):
        src = np.eye(2)
        m = as_complex_matrix(src)
        m[0, 0] = 5.0
        assert m.dtype == np.complex128
        assert src[0, 0] == 1.0

    def test_fro2(self):
        assert fro2(np.array([[1 + 1j, 2.0]])) == pytest.approx(6.0)


class TestHermitianEig:
    def test_identity(self):
        eig = hermitian_eig(np.eye(3))
        np.testing.assert_allclose(eig.eigenvalues, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(eig.U @ herm(eig.U), np.eye(3), atol=1e-12)

    def test_diagonal_descending(self):
        eig = hermitian_eig(np.diag([0.0, 2.0]))
        np.testing.assert_allclose(eig.eigenvalues, [2.0, 0.0])
        np.testing.assert_allclose(np.abs(eig.U), [[0.0, 1.0], [1.0, 0.0]], atol=1e-12)
        assert eig.lambda_max == pytest.approx(2.0)

    def test_gram_matches_singular_values(self, rng):
        b = crandn(rng, 3, 2)
        eig = hermitian_eig(herm(b) @ b)
        s = np.linalg.svd(b, compute_uv=False)
        np.testing.assert_allclose(eig.eigenvalues, s ** 2, atol=1e-10)

    @pytest.mark.parametrize("n", [1, 2, 7, 16, 64])
    def test_reconstruction_and_unitarity(self, rng, n):
        b = crandn(rng, n, n)
        a = b @ herm(b)
        eig = hermitian_eig(a)
        assert np.linalg.norm(eig.U @ herm(eig.U) - np.eye(n)) <= 1e-10
        assert np.linalg.norm(eig.reconstruct() - a) <= 1e-9 * np.linalg.norm(a)
        assert np.all(np.diff(eig.eigenvalues) <= 0.0)

    def test_not_hermitian(self):
        with pytest.raises(NotHermitian):
            hermitian_eig(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_indefinite(self):
        with pytest.raises(IndefiniteInput):
            hermitian_eig(np.diag([1.0, -0.5]))

    def test_round_off_clamped(self):
        eig = hermitian_eig(np.diag([1.0, -1e-13]))
        assert eig.eigenvalues[-1] == 0.0


class TestNumericalRank:
    def test_zero(self):
        assert numerical_rank(np.zeros((4, 4))) == 0

    def test_outer_product(self, rng):
        a = crandn(rng, 5)
        b = crandn(rng, 4)
        assert numerical_rank(np.outer(a, np.conj(b))) == 1

    def test_three_outer_products(self, rng):
        a = sum(np.outer(crandn(rng, 8), np.conj(crandn(rng, 8))) for _ in range(3))
        assert numerical_rank(a) == 3

    def test_product_bound(self, rng):
        for _ in range(20):
            a = crandn(rng, 6, 2) @ crandn(rng, 2, 6)
            b = crandn(rng, 6, 4) @ crandn(rng, 4, 6)
            r = numerical_rank(a @ b)
            assert r <= min(numerical_rank(a), numerical_rank(b))
            assert r <= 6

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            numerical_rank(np.eye(2), rel_tol=0.0)


class TestSolves:
    def test_regularized_solve(self, rng):
        b = crandn(rng, 4, 4)
        gram = b @ herm(b)
        rhs = crandn(rng, 4, 2)
        x = psd_solve(gram, rhs, reg=0.5)
        np.testing.assert_allclose((gram + 0.5 * np.eye(4)) @ x, rhs, atol=1e-10)

    def test_pseudo_inverse_on_singular(self):
        gram = np.diag([2.0, 0.0]).astype(complex)
        x = psd_solve(gram, np.array([[4.0], [3.0]], dtype=complex))
        np.testing.assert_allclose(x, [[2.0], [0.0]], atol=1e-12)

    def test_shifted_pinv(self):
        eig = hermitian_eig(np.diag([3.0, 1.0]))
        x = pinv_apply(eig, np.eye(2), shift=1.0)
        np.testing.assert_allclose(np.abs(x), np.diag([0.25, 0.5]), atol=1e-12)
