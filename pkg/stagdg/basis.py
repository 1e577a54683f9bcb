"""
One-dimensional nodal Gauss-Legendre basis and tensor-product operators.

Every d-dimensional operator in the solver is a composition of 1D matrices
acting along the axes of a block of (N+1)^d nodal values, so this module only
ever builds (N+1) x (N+1) matrices:

- :func:`build_basis` computes the Gauss-Legendre nodes/weights on [0, 1]
- :func:`overlap_matrix` integrates products of two shifted/scaled bases
- :class:`TensorOp` and :func:`apply_tensor` apply Z^x (x) Z^y (x) Z^z without
  ever forming the Kronecker product
- :class:`OperatorTable` caches overlap matrices by relative geometry

Reference coordinates are always xi in [0, 1]; physical scaling happens where
operators are assembled.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

Number = Union[int, float, Fraction]

# Newton iteration on P_{N+1} converges quadratically; this is far more than needed up to N ~ 30.
_NEWTON_MAX_ITER = 100
_NEWTON_TOL = 1e-15

# Degrees above this still work but the product-form Lagrange evaluation loses digits.
PRACTICAL_MAX_DEGREE = 15


def _legendre_and_derivative(n: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate P_n and P_n' on [-1, 1] by the three-term recurrence."""
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


@dataclass(frozen=True, eq=False)
class Basis1D:
    """
    Nodal Lagrange basis through the N+1 Gauss-Legendre points of [0, 1].

    Besides nodes and weights the basis carries the matrices every kernel
    needs: end-point values ``left``/``right`` and the nodal differentiation
    matrix ``diff`` with ``diff[a, b] = phi_b'(xi_a)``.
    """

    degree: int
    nodes: np.ndarray
    weights: np.ndarray
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    diff: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.degree + 1

    def __hash__(self) -> int:
        return hash(("Basis1D", self.degree))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Basis1D) and other.degree == self.degree


def gauss_legendre(n_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre rule with ``n_points`` points mapped to [0, 1].

    Newton iteration on P_n starting from Chebyshev-like guesses; nodes are
    returned in increasing order and the weights sum to one.
    """
    if n_points < 1:
        raise ValueError(f"Need at least one quadrature point, got {n_points}")
    n = n_points
    i = np.arange(n)
    x = np.cos(np.pi * (i + 0.75) / (n + 0.5))
    for _ in range(_NEWTON_MAX_ITER):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    return 0.5 * (x + 1.0), 0.5 * w


def lagrange_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Values ``L[i, l] = phi_l(points[i])`` of the cardinal polynomials through ``nodes``."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n = len(nodes)
    out = np.ones((len(points), n))
    for l in range(n):
        for m in range(n):
            if m != l:
                out[:, l] *= (points - nodes[m]) / (nodes[l] - nodes[m])
    return out


def lagrange_deriv_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Derivatives ``D[i, l] = phi_l'(points[i])``, product-rule form (stable at the nodes)."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n = len(nodes)
    out = np.zeros((len(points), n))
    for l in range(n):
        for j in range(n):
            if j == l:
                continue
            term = np.full(len(points), 1.0 / (nodes[l] - nodes[j]))
            for m in range(n):
                if m != l and m != j:
                    term *= (points - nodes[m]) / (nodes[l] - nodes[m])
            out[:, l] += term
    return out


@lru_cache(maxsize=None)
def build_basis(degree: int) -> Basis1D:
    """
    Build the degree-N nodal Gauss-Legendre basis on [0, 1].

    Quadrature with the returned weights is exact for polynomials of degree
    up to 2N+1. Results are cached per degree.
    """
    if degree < 0:
        raise ValueError(f"Polynomial degree must be >= 0, got {degree}")
    nodes, weights = gauss_legendre(degree + 1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    left = lagrange_matrix(nodes, np.array([0.0]))[0]
    right = lagrange_matrix(nodes, np.array([1.0]))[0]
    diff = lagrange_deriv_matrix(nodes, nodes)
    for arr in (left, right, diff):
        arr.setflags(write=False)
    return Basis1D(degree=degree, nodes=nodes, weights=weights, left=left, right=right, diff=diff)


def eval_lagrange(basis: Basis1D, l: int, xi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Value of the l-th cardinal polynomial (0 <= l <= N) at ``xi``."""
    if not 0 <= l <= basis.degree:
        raise IndexError(f"Basis index {l} out of range for degree {basis.degree}")
    values = lagrange_matrix(basis.nodes, np.atleast_1d(xi))[:, l]
    return float(values[0]) if np.ndim(xi) == 0 else values


def eval_lagrange_deriv(basis: Basis1D, l: int, xi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Derivative of the l-th cardinal polynomial at ``xi`` (reference coordinates)."""
    if not 0 <= l <= basis.degree:
        raise IndexError(f"Basis index {l} out of range for degree {basis.degree}")
    values = lagrange_deriv_matrix(basis.nodes, np.atleast_1d(xi))[:, l]
    return float(values[0]) if np.ndim(xi) == 0 else values


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] on a line, in whatever length unit the caller uses."""

    lo: Number
    hi: Number

    @property
    def width(self) -> Number:
        return self.hi - self.lo

    def intersect(self, other: "Interval") -> Optional["Interval"]:
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if hi <= lo:
            return None
        return Interval(lo, hi)


def overlap_matrix(
    basis: Basis1D,
    target: Interval,
    source: Interval,
    derivative: bool = False,
) -> np.ndarray:
    """
    Overlap integrals between a basis on ``target`` and one on ``source``.

    ``O[p, q] = integral over target & source of phi_p(target) * phi_q(source) dx``
    with both bases mapped to their interval. With ``derivative=True`` the
    source function is differentiated in x (the result is then independent of
    the length unit). Disjoint intervals give the zero matrix.
    """
    if target.width <= 0 or source.width <= 0:
        raise ValueError(f"Intervals must have positive width: {target}, {source}")
    n = basis.size
    common = target.intersect(source)
    if common is None:
        return np.zeros((n, n))

    a, b = float(common.lo), float(common.hi)
    x = a + (b - a) * basis.nodes
    w = (b - a) * basis.weights
    t_lo, t_w = float(target.lo), float(target.width)
    s_lo, s_w = float(source.lo), float(source.width)

    phi_t = lagrange_matrix(basis.nodes, (x - t_lo) / t_w)
    if derivative:
        phi_s = lagrange_deriv_matrix(basis.nodes, (x - s_lo) / s_w) / s_w
    else:
        phi_s = lagrange_matrix(basis.nodes, (x - s_lo) / s_w)
    return (phi_t * w[:, None]).T @ phi_s


class OperatorTable:
    """
    Cache of 1D overlap matrices keyed by exact relative geometry.

    Overlaps are translation invariant, so the key is the target offset
    relative to the source plus both widths, all as exact fractions. The
    same cache therefore serves every cell and level with the same shape.
    """

    def __init__(self, basis: Basis1D):
        self.basis = basis
        self._overlap: Dict[Tuple, np.ndarray] = {}

    def overlap(self, target: Interval, source: Interval, derivative: bool = False) -> np.ndarray:
        key = (
            Fraction(target.lo) - Fraction(source.lo),
            Fraction(target.width),
            Fraction(source.width),
            derivative,
        )
        cached = self._overlap.get(key)
        if cached is None:
            src = Interval(Fraction(0), Fraction(source.width))
            tgt = Interval(key[0], key[0] + key[1])
            cached = overlap_matrix(self.basis, tgt, src, derivative=derivative)
            cached.setflags(write=False)
            self._overlap[key] = cached
        return cached

    def __len__(self) -> int:
        return len(self._overlap)


@dataclass(frozen=True)
class TensorOp:
    """
    Tensor-product operator Z^x (x) Z^y (x) Z^z.

    ``None`` in ``factors`` marks an identity factor. The first factor acts
    on the slowest (first) block axis, matching C-order flattening.
    """

    factors: Tuple[Optional[np.ndarray], ...]

    @property
    def dim(self) -> int:
        return len(self.factors)

    def transpose(self) -> "TensorOp":
        return TensorOp(tuple(None if z is None else z.T for z in self.factors))

    @classmethod
    def identity(cls, dim: int) -> "TensorOp":
        return cls(tuple(None for _ in range(dim)))


def apply_tensor(op: TensorOp, dofs: np.ndarray) -> np.ndarray:
    """
    Apply ``op`` to one block or a batch of blocks.

    The last ``op.dim`` axes of ``dofs`` are the tensor axes; any leading
    axes are batch axes. Costs O(d (N+1)^(d+1)) per block.
    """
    d = op.dim
    if dofs.ndim < d:
        raise ValueError(f"Block has {dofs.ndim} axes, operator needs {d}")
    lead = dofs.ndim - d
    out = dofs
    for a, z in enumerate(op.factors):
        if z is None:
            continue
        axis = lead + a
        if z.ndim != 2 or z.shape[1] != out.shape[axis]:
            raise ValueError(f"Factor {a} has shape {z.shape}, block axis has length {out.shape[axis]}")
        out = np.moveaxis(np.tensordot(out, z, axes=([axis], [1])), -1, axis)
    return out


def kron_matrix(op: TensorOp, n: int) -> np.ndarray:
    """Dense Kronecker-product matrix of ``op`` for blocks of side ``n`` (test oracle)."""
    mat = np.ones((1, 1))
    for z in op.factors:
        mat = np.kron(mat, np.eye(n) if z is None else z)
    return mat


def mass_weights(basis: Basis1D, dim: int) -> np.ndarray:
    """Tensor quadrature weights w (x) ... (x) w as a block of shape (N+1,)*dim."""
    w = np.ones(())
    for _ in range(dim):
        w = np.multiply.outer(w, basis.weights)
    return w


def evaluate_points(basis: Basis1D, blocks: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
    """
    Evaluate nodal blocks at reference points.

    Args:
        blocks: shape (n, N+1, ..., N+1)
        ref_points: shape (n, d) reference coordinates in [0, 1]^d, one per block

    Returns:
        Array of shape (n,) with the polynomial value of each block at its point.
    """
    values = blocks
    d = ref_points.shape[1]
    for k in range(d):
        phi = lagrange_matrix(basis.nodes, ref_points[:, k])
        values = np.einsum("ia...,ia->i...", values, phi)
    return values


def quadrature_degree_points(degree: int) -> int:
    """Points needed to integrate a polynomial of ``degree`` exactly with Gauss-Legendre."""
    return max(1, math.ceil((degree + 1) / 2))


def evaluate_at_nodes(basis: Basis1D, blocks: np.ndarray, points_1d: np.ndarray, dim: int) -> np.ndarray:
    """Resample nodal blocks onto the tensor grid of ``points_1d`` (reference coordinates)."""
    interp = lagrange_matrix(basis.nodes, points_1d)
    return apply_tensor(TensorOp(tuple(interp for _ in range(dim))), blocks)


def apply_along(blocks: np.ndarray, matrix: np.ndarray, axis: int, dim: int) -> np.ndarray:
    """Apply ``matrix`` along tensor axis ``axis`` only."""
    factors: Sequence[Optional[np.ndarray]] = [matrix if a == axis else None for a in range(dim)]
    return apply_tensor(TensorOp(tuple(factors)), blocks)
