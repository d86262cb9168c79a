import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbp_ins.basis import (
    ReferenceElement,
    gl_nodes_weights,
    lagrange_basis_matrix,
    lagrange_diff_matrix,
    lagrange_eval,
)

DEGREES = [1, 2, 3, 4, 5, 6, 7, 8]


def _legendre_derivative(k, x):
    return np.polynomial.legendre.Legendre.basis(k).deriv()(x)


def _bisect(f, a, b, tol=1e-15):
    fa = f(a)
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
        if b - a < tol:
            break
    return 0.5 * (a + b)


class TestGaussLobatto:
    def test_two_point_rule(self):
        x, w = gl_nodes_weights(1)
        np.testing.assert_array_equal(x, [-1.0, 1.0])
        np.testing.assert_allclose(w, [1.0, 1.0], rtol=0, atol=1e-15)

    def test_three_point_weights_match_vandermonde_solve(self):
        x, w = gl_nodes_weights(2)
        np.testing.assert_allclose(x, [-1.0, 0.0, 1.0], atol=1e-15)
        # exactness for 1, xi, xi^2 on the nodes {-1, 0, 1}
        V = np.vander([-1.0, 0.0, 1.0], 3, increasing=True).T
        moments = np.array([2.0, 0.0, 2.0 / 3.0])
        np.testing.assert_allclose(w, np.linalg.solve(V, moments), atol=1e-14)

    def test_five_point_interior_nodes_by_bisection(self):
        x, _ = gl_nodes_weights(4)
        f = lambda s: _legendre_derivative(4, s)  # noqa: E731
        roots = [_bisect(f, -0.9, -0.3), _bisect(f, -0.2, 0.2), _bisect(f, 0.3, 0.9)]
        np.testing.assert_allclose(x[1:-1], roots, atol=1e-13)
        np.testing.assert_allclose(x[3], np.sqrt(3.0 / 7.0), atol=1e-14)

    @pytest.mark.parametrize("k", DEGREES)
    def test_structure(self, k):
        x, w = gl_nodes_weights(k)
        assert x.size == k + 1
        assert x[0] == -1.0 and x[-1] == 1.0
        assert np.all(np.diff(x) > 0)
        assert np.all(w > 0)
        assert abs(w.sum() - 2.0) < 1e-13
        np.testing.assert_allclose(x, -x[::-1], atol=1e-15)
        np.testing.assert_allclose(w, w[::-1], atol=1e-15)
        np.testing.assert_allclose(_legendre_derivative(k, x[1:-1]), 0.0, atol=1e-11)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_exact_up_to_degree_2k_minus_1(self, k):
        x, w = gl_nodes_weights(k)
        for m in range(2 * k):
            exact = (1.0 - (-1.0) ** (m + 1)) / (m + 1)
            assert abs(np.dot(w, x**m) - exact) <= 1e-12 * max(1.0, abs(exact))

    @pytest.mark.parametrize("k", [0, 9, -1])
    def test_unsupported_degree(self, k):
        with pytest.raises(ValueError, match=r"\[1, 8\]"):
            gl_nodes_weights(k)


class TestLagrange:
    def test_linear_derivative_matrix(self):
        D = lagrange_diff_matrix(np.array([-1.0, 1.0]))
        np.testing.assert_allclose(D, [[-0.5, 0.5], [-0.5, 0.5]], atol=1e-15)

    @pytest.mark.parametrize("k", DEGREES)
    def test_annihilates_constants(self, k):
        D = ReferenceElement.from_degree(k).diff_matrix
        np.testing.assert_allclose(D @ np.ones(k + 1), 0.0, atol=1e-12)

    def test_quadratic_reproduced(self):
        ref = ReferenceElement.from_degree(2)
        np.testing.assert_allclose(ref.diff_matrix @ ref.nodes**2, 2 * ref.nodes, atol=1e-14)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_monomial_derivatives(self, k):
        ref = ReferenceElement.from_degree(k)
        for m in range(1, k + 1):
            exact = m * ref.nodes ** (m - 1)
            got = ref.diff_matrix @ ref.nodes**m
            assert np.abs(got - exact).max() <= 1e-11 * max(1.0, np.abs(exact).max())

    def test_duplicate_nodes_rejected(self):
        with pytest.raises(ValueError):
            lagrange_diff_matrix(np.array([-1.0, 0.0, 0.0, 1.0]))

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_cardinal_property(self, k):
        x = ReferenceElement.from_degree(k).nodes
        for j in range(k + 1):
            for i in range(k + 1):
                assert lagrange_eval(x, j, x[i]) == (1.0 if i == j else 0.0)

    def test_partition_of_unity_at_point(self):
        x = ReferenceElement.from_degree(3).nodes
        assert abs(sum(lagrange_eval(x, j, 0.3) for j in range(4)) - 1.0) < 1e-14

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_partition_of_unity_random(self, k, rng):
        x = ReferenceElement.from_degree(k).nodes
        L = lagrange_basis_matrix(x, rng.uniform(-1, 1, 50))
        np.testing.assert_allclose(L.sum(axis=1), 1.0, atol=1e-13)

    @given(st.floats(min_value=-1.0, max_value=1.0), st.integers(min_value=1, max_value=6))
    def test_interpolates_polynomials_of_degree_k(self, xi, k):
        x = ReferenceElement.from_degree(k).nodes
        coeffs = np.arange(1, k + 2, dtype=float)
        f = np.polynomial.polynomial.polyval(x, coeffs)
        got = lagrange_basis_matrix(x, [xi])[0] @ f
        assert abs(got - np.polynomial.polynomial.polyval(xi, coeffs)) < 1e-11 * coeffs.sum()

    @pytest.mark.parametrize("xi", [-1.0001, 1.5])
    def test_no_extrapolation(self, xi):
        with pytest.raises(ValueError, match="outside"):
            lagrange_eval(ReferenceElement.from_degree(2).nodes, 0, xi)
