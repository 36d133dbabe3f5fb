import numpy as np
import pytest

from adesign.errors import DegenerateInput, NonFiniteValue, NotPositiveDefinite
from adesign.linalg import (
    EPS,
    cholesky,
    finite_difference_gradient,
    finite_difference_hessian_diagonal,
    orthonormal_columns,
    random_design_matrix,
    rng_stream,
    trace_of_inverse,
)

from oracles import gauss_jordan_inverse, jacobi_singular_values


def random_spd(dim, rng, spread=2.0):
    Q = orthonormal_columns(dim, dim, rng)
    eigs = 10.0 ** rng.uniform(-spread, spread, size=dim)
    return (Q * eigs) @ Q.T


class TestCholesky:
    def test_identity(self):
        L = cholesky(np.eye(2)).lower
        np.testing.assert_array_equal(L, np.eye(2))

    def test_hand_checked_2x2(self):
        L = cholesky([[4.0, 2.0], [2.0, 3.0]]).lower
        np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], rtol=1e-15)

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky([[0.0, 1.0], [1.0, 0.0]])

    def test_singular_raises(self):
        v = np.array([[1.0], [2.0]])
        with pytest.raises(NotPositiveDefinite):
            cholesky(v @ v.T)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            cholesky([[1.0, 0.5], [0.4999, 1.0]])

    def test_roundtrip_random_spd(self):
        rng = rng_stream(7)
        for dim in [1, 2, 3, 5, 8, 13, 20]:
            M = random_spd(dim, rng)
            L = cholesky(M).lower
            err = np.abs(L @ L.T - M).max()
            assert err <= 10.0 * dim * EPS * np.abs(M).max()
            assert (L.diagonal() > 0.0).all()

    def test_factor_solve(self):
        rng = rng_stream(8)
        M = random_spd(6, rng)
        b = rng.normal(size=6)
        x = cholesky(M).solve(b)
        np.testing.assert_allclose(M @ x, b, rtol=1e-9, atol=1e-12)


class TestTraceOfInverse:
    def test_identity(self):
        assert trace_of_inverse(np.eye(3)) == pytest.approx(3.0, rel=1e-14)

    def test_diagonal(self):
        assert trace_of_inverse(np.diag([2.0, 4.0])) == pytest.approx(0.75, rel=1e-14)

    def test_against_explicit_inverse_5x5(self):
        rng = rng_stream(11)
        M = random_spd(5, rng)
        expected = gauss_jordan_inverse(M).diagonal().sum()
        assert trace_of_inverse(M) == pytest.approx(expected, rel=1e-10)

    def test_against_explicit_inverse_dims_to_20(self):
        rng = rng_stream(12)
        for dim in range(1, 21):
            M = random_spd(dim, rng, spread=1.5)
            expected = gauss_jordan_inverse(M).diagonal().sum()
            assert trace_of_inverse(M) == pytest.approx(expected, rel=1e-9)

    def test_propagates_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            trace_of_inverse([[1.0, 2.0], [2.0, 1.0]])


class TestRandomDesignMatrix:
    def test_condition_number_via_jacobi_oracle(self):
        J = random_design_matrix(50, 7, 1e4, rng=rng_stream(1))
        sv = jacobi_singular_values(J)
        assert sv[0] / sv[-1] == pytest.approx(1e4, rel=1e-6)

    def test_row_normalization(self):
        J = random_design_matrix(50, 7, 1e4, row_normalize=True, rng=rng_stream(1))
        norms = np.linalg.norm(J, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_orthogonal_case(self):
        J = random_design_matrix(7, 7, 1.0, rng=rng_stream(2))
        sv = jacobi_singular_values(J)
        np.testing.assert_allclose(sv, 1.0, atol=1e-10)
        np.testing.assert_allclose(J.T @ J, np.eye(7), atol=1e-10)

    def test_deterministic_per_seed(self):
        J1 = random_design_matrix(20, 4, 100.0, rng=rng_stream(5))
        J2 = random_design_matrix(20, 4, 100.0, rng=rng_stream(5))
        np.testing.assert_array_equal(J1, J2)

    def test_orthonormal_factors(self):
        rng = rng_stream(3)
        for rows, cols in [(50, 7), (7, 7), (30, 3)]:
            Q = orthonormal_columns(rows, cols, rng)
            gram = Q.T @ Q
            assert np.abs(gram - np.eye(cols)).max() <= 1e-10

    def test_input_validation(self):
        with pytest.raises(ValueError):
            random_design_matrix(3, 5, 10.0, rng=rng_stream(0))
        with pytest.raises(ValueError):
            random_design_matrix(5, 3, 0.5, rng=rng_stream(0))

    def test_degenerate_draw_raises(self):
        class ZeroRng:
            def uniform(self, lo, hi, size):
                return np.zeros(size)

        with pytest.raises(DegenerateInput):
            random_design_matrix(4, 2, 10.0, rng=ZeroRng())


class TestRngStream:
    def test_bit_identical_streams(self):
        a = rng_stream(42).uniform(size=100)
        b = rng_stream(42).uniform(size=100)
        np.testing.assert_array_equal(a, b)

    def test_substreams_differ(self):
        a = rng_stream(42, 0).uniform(size=10)
        b = rng_stream(42, 1).uniform(size=10)
        assert not np.array_equal(a, b)


class TestFiniteDifferences:
    def test_quadratic(self):
        grad = finite_difference_gradient(lambda v: v[0] ** 2, [3.0], 1e-5)
        assert grad[0] == pytest.approx(6.0, abs=1e-8)

    def test_constant(self):
        grad = finite_difference_gradient(lambda v: 4.25, [1.0, -2.0, 0.5], 1e-6)
        np.testing.assert_array_equal(grad, 0.0)

    def test_non_finite_raises(self):
        with pytest.raises(NonFiniteValue):
            finite_difference_gradient(lambda v: np.inf, [1.0], 1e-6)

    def test_bad_step_rejected(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda v: 0.0, [1.0], 0.0)

    def test_hessian_diagonal_quadratic(self):
        diag = finite_difference_hessian_diagonal(
            lambda v: 2.0 * v[0] ** 2 + 0.5 * v[1] ** 2, [0.3, -1.2], 1e-4
        )
        np.testing.assert_allclose(diag, [4.0, 1.0], rtol=1e-6)
