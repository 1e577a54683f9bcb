"""
Tests for the 1D nodal basis and the tensor-product operators.
"""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from stagdg.basis import (
    Interval,
    OperatorTable,
    TensorOp,
    apply_along,
    apply_tensor,
    build_basis,
    eval_lagrange,
    eval_lagrange_deriv,
    evaluate_points,
    gauss_legendre,
    kron_matrix,
    lagrange_matrix,
    mass_weights,
    overlap_matrix,
    quadrature_degree_points,
)


# =============================================================================
# Nodes and weights
# =============================================================================

@pytest.mark.parametrize("degree", range(0, 9))
def test_nodes_match_numpy_leggauss(degree):
    """Nodes and weights agree with numpy's Gauss-Legendre rule mapped to [0, 1]."""
    basis = build_basis(degree)
    x, w = leggauss(degree + 1)
    np.testing.assert_allclose(basis.nodes, 0.5 * (x + 1.0), atol=1e-14)
    np.testing.assert_allclose(basis.weights, 0.5 * w, atol=1e-14)


@pytest.mark.parametrize("degree", [0, 1, 3, 6])
def test_quadrature_exact_to_degree_2n_plus_1(degree):
    """Weights integrate monomials up to degree 2N+1 exactly on [0, 1]."""
    basis = build_basis(degree)
    for k in range(2 * degree + 2):
        assert np.sum(basis.weights * basis.nodes**k) == pytest.approx(1.0 / (k + 1), abs=1e-14)


def test_invalid_degree():
    """Negative degrees and empty rules are rejected."""
    with pytest.raises(ValueError):
        build_basis(-1)
    with pytest.raises(ValueError):
        gauss_legendre(0)


def test_build_basis_is_cached():
    """One basis object per degree."""
    assert build_basis(4) is build_basis(4)
    assert build_basis(4) == build_basis(4)
    assert build_basis(4) != build_basis(3)


# =============================================================================
# Lagrange polynomials
# =============================================================================

class TestLagrange:
    """Cardinal polynomials through the Gauss-Legendre nodes."""

    @pytest.mark.parametrize("degree", [0, 2, 5])
    def test_kronecker_property(self, degree):
        """phi_l(xi_m) = delta_lm."""
        basis = build_basis(degree)
        np.testing.assert_allclose(lagrange_matrix(basis.nodes, basis.nodes), np.eye(degree + 1), atol=1e-13)

    @pytest.mark.parametrize("degree", [1, 4, 7])
    def test_partition_of_unity(self, degree):
        """The basis sums to one and its derivatives to zero."""
        basis = build_basis(degree)
        xi = np.linspace(-0.2, 1.2, 31)
        values = np.array([eval_lagrange(basis, l, xi) for l in range(degree + 1)])
        derivs = np.array([eval_lagrange_deriv(basis, l, xi) for l in range(degree + 1)])
        np.testing.assert_allclose(values.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(derivs.sum(axis=0), 0.0, atol=1e-10)

    def test_diff_matrix_is_exact_for_polynomials(self):
        """Nodal differentiation of x^N reproduces N x^(N-1)."""
        basis = build_basis(5)
        f = basis.nodes**5
        np.testing.assert_allclose(basis.diff @ f, 5 * basis.nodes**4, atol=1e-11)

    def test_end_point_values(self):
        """``left``/``right`` interpolate values at 0 and 1."""
        basis = build_basis(3)
        f = 1.0 + 2.0 * basis.nodes - basis.nodes**3
        assert basis.left @ f == pytest.approx(1.0)
        assert basis.right @ f == pytest.approx(2.0)

    def test_linear_basis(self):
        """N = 1: nodes 1/2 -+ sqrt(3)/6, equal weights, phi_1(0) = xi_2 / (xi_2 - xi_1)."""
        basis = build_basis(1)
        np.testing.assert_allclose(basis.nodes, [0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6], atol=1e-14)
        np.testing.assert_allclose(basis.weights, [0.5, 0.5], atol=1e-14)
        xi1, xi2 = basis.nodes
        assert basis.left[0] == pytest.approx(xi2 / (xi2 - xi1))

    def test_scalar_evaluation(self):
        """A scalar argument gives a float."""
        basis = build_basis(2)
        assert isinstance(eval_lagrange(basis, 0, 0.3), float)
        assert isinstance(eval_lagrange_deriv(basis, 2, 0.3), float)

    def test_index_out_of_range(self):
        """l must satisfy 0 <= l <= N."""
        basis = build_basis(2)
        with pytest.raises(IndexError):
            eval_lagrange(basis, 3, 0.5)
        with pytest.raises(IndexError):
            eval_lagrange_deriv(basis, -1, 0.5)


# =============================================================================
# Overlap integrals
# =============================================================================

class TestOverlap:
    """Overlap matrices between shifted and scaled bases."""

    def test_same_interval_is_diagonal_mass(self):
        """On the same interval the overlap is the lumped Gauss mass matrix."""
        basis = build_basis(3)
        o = overlap_matrix(basis, Interval(0.0, 2.0), Interval(0.0, 2.0))
        np.testing.assert_allclose(o, np.diag(2.0 * basis.weights), atol=1e-14)

    def test_disjoint_intervals(self):
        """Disjoint (or touching) intervals give zero."""
        basis = build_basis(2)
        np.testing.assert_array_equal(overlap_matrix(basis, Interval(0, 1), Interval(1, 2)), np.zeros((3, 3)))

    def test_constant_integrates_to_intersection_width(self):
        """1^T O 1 is the length of the intersection."""
        basis = build_basis(4)
        o = overlap_matrix(basis, Interval(0.0, 1.0), Interval(1.0 / 3.0, 2.0))
        ones = np.ones(5)
        assert ones @ o @ ones == pytest.approx(2.0 / 3.0, abs=1e-13)

    def test_derivative_of_constant_vanishes(self):
        """The derivative overlap annihilates constants."""
        basis = build_basis(3)
        o = overlap_matrix(basis, Interval(0.0, 0.5), Interval(0.0, 1.0), derivative=True)
        np.testing.assert_allclose(o @ np.ones(4), 0.0, atol=1e-13)

    def test_sub_interval_projection(self):
        """O @ f integrates the source polynomial against the target basis exactly."""
        basis = build_basis(3)
        source = Interval(0.0, 3.0)
        target = Interval(1.0, 2.0)
        f_source = (source.lo + source.width * basis.nodes) ** 2
        o = overlap_matrix(basis, target, source)
        x = target.lo + target.width * basis.nodes
        expected = target.width * basis.weights * x**2
        np.testing.assert_allclose(o @ f_source, expected, atol=1e-13)

    def test_nonpositive_width(self):
        """Degenerate intervals are a programming error."""
        with pytest.raises(ValueError):
            overlap_matrix(build_basis(1), Interval(1.0, 1.0), Interval(0.0, 1.0))

    def test_table_is_translation_invariant(self):
        """Shifted copies of one geometry share a cache entry."""
        table = OperatorTable(build_basis(2))
        a = table.overlap(Interval(2.0, 3.0), Interval(2.5, 3.5))
        b = table.overlap(Interval(0.0, 1.0), Interval(0.5, 1.5))
        assert a is b
        assert len(table) == 1
        np.testing.assert_allclose(a, overlap_matrix(build_basis(2), Interval(0.0, 1.0), Interval(0.5, 1.5)))


# =============================================================================
# Tensor products
# =============================================================================

class TestTensor:
    """Sum factorisation against the explicit Kronecker product."""

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_apply_matches_kronecker(self, dim):
        """apply_tensor equals the dense Kronecker matrix on C-ordered blocks."""
        rng = np.random.default_rng(dim)
        n = 3
        factors = tuple(None if a == 1 else rng.standard_normal((n, n)) for a in range(dim))
        op = TensorOp(factors)
        blocks = rng.standard_normal((4,) + (n,) * dim)
        out = apply_tensor(op, blocks)
        mat = kron_matrix(op, n)
        for i in range(4):
            np.testing.assert_allclose(out[i].ravel(), mat @ blocks[i].ravel(), atol=1e-12)

    def test_transpose(self):
        """TensorOp.transpose transposes every factor."""
        rng = np.random.default_rng(1)
        op = TensorOp((rng.standard_normal((3, 3)), rng.standard_normal((3, 3))))
        np.testing.assert_allclose(kron_matrix(op.transpose(), 3), kron_matrix(op, 3).T)

    def test_identity(self):
        """The identity operator leaves blocks unchanged."""
        block = np.arange(27.0).reshape(3, 3, 3)
        np.testing.assert_array_equal(apply_tensor(TensorOp.identity(3), block), block)

    def test_shape_mismatch(self):
        """Factor sizes must match the block."""
        with pytest.raises(ValueError):
            apply_tensor(TensorOp((np.eye(4),)), np.ones(3))
        with pytest.raises(ValueError):
            apply_tensor(TensorOp((None, None)), np.ones(3))

    def test_apply_along_single_axis(self):
        """apply_along touches only one axis."""
        matrix = np.array([[0.0, 1.0], [1.0, 0.0]])
        block = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(apply_along(block, matrix, 1, 2), block[:, ::-1])
        np.testing.assert_array_equal(apply_along(block, matrix, 0, 2), block[::-1, :])

    def test_mass_weights(self):
        """Tensor weights sum to the unit cube volume."""
        w = mass_weights(build_basis(3), 3)
        assert w.shape == (4, 4, 4)
        assert w.sum() == pytest.approx(1.0)

    def test_evaluate_points_reproduces_polynomial(self):
        """Point evaluation of a nodal block is exact for degree-N polynomials."""
        basis = build_basis(3)
        x, y = np.meshgrid(basis.nodes, basis.nodes, indexing="ij")
        block = x**2 * y - y**3
        rng = np.random.default_rng(7)
        points = rng.random((5, 2))
        values = evaluate_points(basis, np.repeat(block[None], 5, axis=0), points)
        np.testing.assert_allclose(values, points[:, 0] ** 2 * points[:, 1] - points[:, 1] ** 3, atol=1e-12)


def test_quadrature_degree_points():
    """ceil((p+1)/2) points integrate degree p exactly."""
    assert quadrature_degree_points(0) == 1
    assert quadrature_degree_points(1) == 1
    assert quadrature_degree_points(2) == 2
    assert quadrature_degree_points(7) == 4
