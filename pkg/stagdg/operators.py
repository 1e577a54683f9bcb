"""
Staggered DG operators: grid-transfer projections, weak gradient, divergence
and the matrix-free discrete Laplacian H = D^T M*^-1 D.

Every operator is a sum over (dual element, cell) incidences of tensor
products of 1D matrices. Incidences sharing a sigma configuration and a cell
level share their factors, so each operator is applied group by group with
one batched tensor contraction and one scatter-add per group.

For an incidence (m, c) on the dual mesh of axis k the factors are, in
physical units:

- axial overlap       O[p, q] = int psi_p phi_q dx                (pi, pi*)
- axial derivative    V[p, q] = int psi_p dphi_q/dx dx
- face term           F[p, q] = psi_p(x_f) phi_q(x_f)
- transverse overlap  O_t along each other axis

and the weak gradient block is (sign * F + V) (x) O_t, sign = +1 when the
cell lies on the high side of the face. u.s. elements carry V only.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .basis import (
    Basis1D,
    Interval,
    OperatorTable,
    TensorOp,
    apply_tensor,
    build_basis,
    kron_matrix,
    lagrange_matrix,
    mass_weights,
)
from .mesh.amr import AmrMesh
from .mesh.staggered import BOUNDARY, STANDARD, UNUSUAL, DualMesh, SigmaConfig

logger = logging.getLogger(__name__)

KERNEL_RTOL = 1e-8
POWER_ITERATIONS = 8

_UNIT = Interval(Fraction(0), Fraction(1))


def _broadcast(values: np.ndarray, dim: int) -> np.ndarray:
    return values.reshape((-1,) + (1,) * dim)


@dataclass
class _Group:
    duals: np.ndarray
    cells: np.ndarray
    factors: Tuple[np.ndarray, ...]

    def forward(self, src: np.ndarray, out: np.ndarray) -> None:
        np.add.at(out, self.duals, apply_tensor(TensorOp(self.factors), src[self.cells]))

    def backward(self, src: np.ndarray, out: np.ndarray) -> None:
        np.add.at(out, self.cells, apply_tensor(TensorOp(self.factors).transpose(), src[self.duals]))


@dataclass(frozen=True)
class IncidenceFactors:
    """The 1D matrices of one (sigma, cell level) configuration, in physical units."""

    overlap: np.ndarray
    deriv: np.ndarray
    face: np.ndarray
    transverse: Tuple[np.ndarray, ...]


class StaggeredOperators:
    """
    Operators tied to one dual mesh: masses, pi / pi* and gradient factories.

    Args:
        dual: dual mesh of axis k
        degree: polynomial degree N
        table: shared cache of 1D overlap matrices
    """

    def __init__(self, dual: DualMesh, degree: int, table: Optional[OperatorTable] = None):
        self.dual = dual
        self.mesh: AmrMesh = dual.mesh
        self.axis = dual.axis
        self.degree = degree
        self.basis = build_basis(degree)
        self.table = table or OperatorTable(self.basis)
        self.dim = self.mesh.dim
        self.block_shape = (degree + 1,) * self.dim

        weights = mass_weights(self.basis, self.dim)
        _, widths = self.mesh.active_boxes()
        self.cell_volumes = np.prod(widths, axis=1)
        self.cell_mass = _broadcast(self.cell_volumes, self.dim) * weights
        self.dual_mass = _broadcast(dual.volumes, self.dim) * weights

        self._factor_cache: Dict[Tuple[SigmaConfig, int], IncidenceFactors] = {}
        self._levels = self.mesh.active_levels()
        grouped: Dict[Tuple[SigmaConfig, int], Tuple[List[int], List[int]]] = {}
        for inc in dual.incidences:
            key = (inc.sigma, int(self._levels[inc.cell]))
            duals, cells = grouped.setdefault(key, ([], []))
            duals.append(inc.dual)
            cells.append(inc.cell)
        self._incidence_groups = [
            (sigma, level, np.array(duals, dtype=np.int64), np.array(cells, dtype=np.int64))
            for (sigma, level), (duals, cells) in grouped.items()
        ]
        self._overlap_groups = [
            _Group(duals, cells, self._tensor(self.factors(sigma, level), "overlap"))
            for sigma, level, duals, cells in self._incidence_groups
        ]

    @property
    def n_cells(self) -> int:
        return self.mesh.n_active

    @property
    def n_duals(self) -> int:
        return len(self.dual)

    def zeros_main(self) -> np.ndarray:
        return np.zeros((self.n_cells,) + self.block_shape)

    def zeros_dual(self) -> np.ndarray:
        return np.zeros((self.n_duals,) + self.block_shape)

    # ------------------------------------------------------------------
    # 1D factors

    def factors(self, sigma: SigmaConfig, level: int) -> IncidenceFactors:
        key = (sigma, level)
        cached = self._factor_cache.get(key)
        if cached is not None:
            return cached
        h = self.mesh.cell_width(level)
        k = self.axis
        extent = Interval(*sigma.extent)
        overlap = self.table.overlap(extent, _UNIT) * h[k]
        deriv = np.array(self.table.overlap(extent, _UNIT, derivative=True))
        if sigma.kind == UNUSUAL:
            face = np.zeros_like(deriv)
        else:
            at_high = sigma.role == "L"
            x_face = Fraction(1) if at_high else Fraction(0)
            xi = (x_face - extent.lo) / extent.width
            psi = _lagrange_row(self.basis, float(xi))
            phi = self.basis.right if at_high else self.basis.left
            face = np.outer(psi, phi)
        transverse = []
        t_index = 0
        r = self.mesh.refine_factor
        for t in range(self.dim):
            if t == k:
                continue
            if sigma.level_gap > 0:
                o = sigma.offsets[t_index]
                interval = Interval(Fraction(o, r), Fraction(o + 1, r))
            else:
                interval = _UNIT
            transverse.append(self.table.overlap(interval, _UNIT) * h[t])
            t_index += 1
        cached = IncidenceFactors(overlap=overlap, deriv=deriv, face=face, transverse=tuple(transverse))
        self._factor_cache[key] = cached
        return cached

    def _tensor(self, f: IncidenceFactors, axial_kind: str, sign: int = 0, with_face: bool = False) -> Tuple:
        if axial_kind == "overlap":
            axial = f.overlap
        else:
            axial = f.deriv + sign * f.face if with_face else f.deriv
        out = []
        t_iter = iter(f.transverse)
        for t in range(self.dim):
            out.append(axial if t == self.axis else next(t_iter))
        return tuple(out)

    # ------------------------------------------------------------------
    # Grid transfer

    def project_to_dual(self, u: np.ndarray) -> np.ndarray:
        """pi*: L2 projection of a main-mesh field onto the dual elements."""
        out = self.zeros_dual()
        for g in self._overlap_groups:
            g.forward(u, out)
        return out / self.dual_mass

    def project_to_main(self, v: np.ndarray) -> np.ndarray:
        """pi: L2 projection of a dual field onto the main cells."""
        out = self.zeros_main()
        for g in self._overlap_groups:
            g.backward(v, out)
        return out / self.cell_mass

    # ------------------------------------------------------------------
    # Gradient

    def gradient(self, face_mask: Optional[np.ndarray] = None) -> "Gradient":
        """
        Weak gradient along this axis.

        ``face_mask[m]`` selects which boundary elements carry the face term
        (the boundary is Dirichlet for the scalar being differentiated).
        """
        return Gradient(self, face_mask)

    def boundary_elements(self) -> np.ndarray:
        return np.array([e.index for e in self.dual.elements if e.kind == BOUNDARY], dtype=np.int64)

    def boundary_face_points(self, elements: np.ndarray) -> np.ndarray:
        """
        Physical quadrature points on the wall face of boundary elements.

        Returns shape (n, (N+1)^(d-1), d); transverse points in C order.
        """
        k = self.axis
        nodes = self.basis.nodes
        if len(elements) == 0:
            return np.zeros((0, (self.degree + 1) ** (self.dim - 1), self.dim))
        out = []
        for m in elements:
            e = self.dual.elements[int(m)]
            lo = self.dual.lo[m]
            w = self.dual.widths[m]
            axes = []
            for t in range(self.dim):
                if t == k:
                    axes.append(np.array([self.mesh.origin[k] + e.face * self.mesh.unit_length[k]]))
                else:
                    axes.append(lo[t] + w[t] * nodes)
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
            out.append(grid)
        return np.array(out).reshape(len(elements), -1, self.dim)

    def _face_quadrature(self, elements: np.ndarray, values: np.ndarray) -> np.ndarray:
        """|face| w_t g at the face nodes, shaped (n, N+1, ..., N+1) over the d-1 transverse axes."""
        k = self.axis
        widths = self.dual.widths[elements]
        area = np.prod(np.delete(widths, k, axis=1), axis=1) if self.dim > 1 else np.ones(len(elements))
        w_t = mass_weights(self.basis, self.dim - 1)
        shaped = values.reshape((len(elements),) + (self.degree + 1,) * (self.dim - 1))
        return _broadcast(area, self.dim - 1) * w_t * shaped

    def _with_axial(self, axial: np.ndarray, transverse: np.ndarray) -> np.ndarray:
        return np.moveaxis(np.multiply.outer(transverse, axial), -1, self.axis + 1)

    def boundary_lift(self, elements: np.ndarray, values: np.ndarray) -> np.ndarray:
        """
        Known part of the weak gradient from prescribed boundary values.

        The face term of a boundary element reads sign * int psi (u_cell - g),
        so the known part is -sign * int psi g, stored on the dual mesh.
        """
        out = self.zeros_dual()
        if len(elements) == 0:
            return out
        signs = np.array([-self.dual.elements[int(m)].boundary_side for m in elements], dtype=float)
        quad = self._face_quadrature(elements, values)
        for side in (-1, 1):
            sel = self._side_select(elements, side)
            if not sel.any():
                continue
            psi = self.basis.left if side < 0 else self.basis.right
            block = self._with_axial(psi, quad[sel])
            out[elements[sel]] -= _broadcast(signs[sel], self.dim) * block
        return out

    def boundary_flux(self, elements: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Prescribed normal flux n_k int phi g over wall faces, on the main mesh."""
        out = self.zeros_main()
        if len(elements) == 0:
            return out
        quad = self._face_quadrature(elements, values)
        for side in (-1, 1):
            sel = self._side_select(elements, side)
            if not sel.any():
                continue
            phi = self.basis.left if side < 0 else self.basis.right
            block = self._with_axial(phi, quad[sel])
            cells = np.array([self._boundary_cell(int(m)) for m in elements[sel]], dtype=np.int64)
            np.add.at(out, cells, side * block)
        return out

    def _side_select(self, elements: np.ndarray, side: int) -> np.ndarray:
        return np.array([self.dual.elements[int(m)].boundary_side == side for m in elements], dtype=bool)

    def _boundary_cell(self, m: int) -> int:
        e = self.dual.elements[m]
        return e.right if e.boundary_side < 0 else e.left

    # ------------------------------------------------------------------
    # Oracles

    def assemble_overlap(self) -> sp.csr_matrix:
        """Sparse matrix of the (unscaled) main -> dual overlap sum."""
        return _assemble(self._overlap_groups, self.n_duals, self.n_cells, self.degree + 1)


def _lagrange_row(basis: Basis1D, xi: float) -> np.ndarray:
    return lagrange_matrix(basis.nodes, np.array([xi]))[0]


def _assemble(groups: Sequence[_Group], n_rows: int, n_cols: int, n: int) -> sp.csr_matrix:
    block = n ** len(groups[0].factors) if groups else 1
    rows, cols, data = [], [], []
    for g in groups:
        mat = kron_matrix(TensorOp(g.factors), n)
        r_idx, c_idx = np.meshgrid(np.arange(block), np.arange(block), indexing="ij")
        for m, c in zip(g.duals, g.cells):
            rows.append(m * block + r_idx.ravel())
            cols.append(c * block + c_idx.ravel())
            data.append(mat.ravel())
    if not rows:
        return sp.csr_matrix((n_rows * block, n_cols * block))
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows * block, n_cols * block),
    ).tocsr()


class Gradient:
    """Weak gradient D_k: main-mesh scalar -> dual mesh k, with its transpose."""

    def __init__(self, ops: StaggeredOperators, face_mask: Optional[np.ndarray] = None):
        self.ops = ops
        mask = np.zeros(ops.n_duals, dtype=bool) if face_mask is None else np.asarray(face_mask, dtype=bool)
        if mask.shape != (ops.n_duals,):
            raise ValueError(f"Face mask has shape {mask.shape}, expected ({ops.n_duals},)")
        self.face_mask = mask
        self.groups: List[_Group] = []
        for sigma, level, duals, cells in ops._incidence_groups:
            f = ops.factors(sigma, level)
            if sigma.kind == BOUNDARY:
                for with_face in (False, True):
                    sel = mask[duals] == with_face
                    if sel.any():
                        self.groups.append(
                            _Group(duals[sel], cells[sel], ops._tensor(f, "grad", sigma.sign, with_face))
                        )
            else:
                with_face = sigma.kind == STANDARD
                self.groups.append(_Group(duals, cells, ops._tensor(f, "grad", sigma.sign, with_face)))

    def apply(self, p: np.ndarray) -> np.ndarray:
        out = self.ops.zeros_dual()
        for g in self.groups:
            g.forward(p, out)
        return out

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        out = self.ops.zeros_main()
        for g in self.groups:
            g.backward(v, out)
        return out

    def transpose_magnitude(self, v: np.ndarray) -> float:
        """Euclidean size of the dual -> cell contributions to D^T v before they are summed per cell."""
        total = 0.0
        for g in self.groups:
            part = apply_tensor(TensorOp(g.factors).transpose(), v[g.duals])
            total += float(np.sum(part * part))
        return float(np.sqrt(total))

    def assemble(self) -> sp.csr_matrix:
        return _assemble(self.groups, self.ops.n_duals, self.ops.n_cells, self.ops.degree + 1)


class Laplacian:
    """
    Matrix-free H = sum_k D_k^T M*_k^-1 D_k on the main mesh.

    Symmetric positive semi-definite; definite once some boundary elements
    carry a face term.
    """

    def __init__(self, gradients: Sequence[Gradient]):
        self.gradients = list(gradients)

    def apply(self, p: np.ndarray) -> np.ndarray:
        out = np.zeros_like(p)
        for g in self.gradients:
            out += g.apply_transpose(g.apply(p) / g.ops.dual_mass)
        return out

    def __call__(self, p: np.ndarray) -> np.ndarray:
        return self.apply(p)

    def assemble(self) -> sp.csr_matrix:
        total = None
        for g in self.gradients:
            d = g.assemble()
            inv_mass = sp.diags(1.0 / g.ops.dual_mass.ravel())
            term = (d.T @ inv_mass @ d).tocsr()
            total = term if total is None else total + term
        return total

    def stencil_sizes(self) -> np.ndarray:
        """Number of distinct cells each cell couples to (itself included)."""
        ops0 = self.gradients[0].ops
        neighbours: List[set] = [{i} for i in range(ops0.n_cells)]
        for g in self.gradients:
            per_dual: Dict[int, set] = {}
            for grp in g.groups:
                for m, c in zip(grp.duals, grp.cells):
                    per_dual.setdefault(int(m), set()).add(int(c))
            for cells in per_dual.values():
                for c in cells:
                    neighbours[c] |= cells
        return np.array([len(s) for s in neighbours])

    @property
    def has_dirichlet(self) -> bool:
        return any(g.face_mask.any() for g in self.gradients)

    def kernel_basis(self, rtol: float = KERNEL_RTOL) -> np.ndarray:
        """
        Orthonormal basis (rows, C-ordered) of the measured kernel of H.

        Candidates repeat one nodal block on every cell of a level. This spans
        the constants and, for odd N, the per-cell sawtooth modes whose weak
        gradient vanishes. A candidate combination is kept when
        ||H w|| <= rtol ||H|| ||w||, with ||H|| estimated from a few power
        iterations.
        """
        ops0 = self.gradients[0].ops
        shape = ops0.cell_mass.shape
        n_cells, block = shape[0], shape[1:]
        m = int(np.prod(block))
        levels = ops0.mesh.active_levels()
        columns, images = [], []
        for level in np.unique(levels):
            on_level = levels == level
            scale = 1.0 / np.sqrt(np.count_nonzero(on_level) * 1.0)
            for j in range(m):
                w = np.zeros(shape)
                w.reshape(n_cells, m)[on_level, j] = scale
                columns.append(w.ravel())
                images.append(self.apply(w).ravel())
        w_mat = np.array(columns).T
        h_w = np.array(images).T

        x = np.random.default_rng(0).standard_normal(shape)
        h_norm = 0.0
        for _ in range(POWER_ITERATIONS):
            x = self.apply(x / np.linalg.norm(x))
            h_norm = float(np.linalg.norm(x))
            if h_norm == 0.0:
                break
        if h_norm == 0.0:
            return w_mat.T.copy()

        _, s, vt = np.linalg.svd(h_w, full_matrices=False)
        null = vt[s <= rtol * h_norm]
        return (w_mat @ null.T).T


def divergence(gradients: Sequence[Gradient], velocity: Sequence[np.ndarray], flux: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Continuity functional on the main mesh: -sum_k D_k^T v_k + prescribed wall flux.

    Exact transpose of the gradient up to sign, so <div V, P> = -<V, D P>.
    """
    out = gradients[0].ops.zeros_main()
    for g, v in zip(gradients, velocity):
        out -= g.apply_transpose(v)
    if flux is not None:
        out += flux
    return out


@dataclass(frozen=True)
class RLMatrices:
    """
    Jump-plus-volume matrices of a conforming face: R~ = F + V_R, L~ = F - V_L.

    D_k p on the straddling element is R~ p_r - L~ p_l (dimensionless, i.e.
    already normalised by the element size); the continuity side uses
    R_bar = L~^T and L_bar = R~^T.
    """

    R: np.ndarray
    L: np.ndarray

    @property
    def R_bar(self) -> np.ndarray:
        return self.L.T

    @property
    def L_bar(self) -> np.ndarray:
        return self.R.T

    @classmethod
    def conforming(cls, degree: int) -> "RLMatrices":
        basis = build_basis(degree)
        table = OperatorTable(basis)
        half = Fraction(1, 2)
        # element [1/2, 3/2] seen from the left cell, [-1/2, 1/2] from the right one
        v_left = table.overlap(Interval(half, 3 * half), _UNIT, derivative=True)
        v_right = table.overlap(Interval(-half, half), _UNIT, derivative=True)
        psi_mid = _lagrange_row(basis, 0.5)
        f_left = np.outer(psi_mid, basis.right)
        f_right = np.outer(psi_mid, basis.left)
        return cls(R=f_right + v_right, L=f_left - v_left)


@dataclass(frozen=True)
class LaplacianBlocks:
    """1D blocks of H for a uniform conforming line: H^R couples to the right neighbour."""

    HR: np.ndarray
    HL: np.ndarray
    HC: np.ndarray

    @classmethod
    def from_rl(cls, rl: RLMatrices, dual_mass: np.ndarray) -> "LaplacianBlocks":
        inv = np.diag(1.0 / dual_mass)
        return cls(
            HR=-rl.L.T @ inv @ rl.R,
            HL=-rl.R.T @ inv @ rl.L,
            HC=rl.L.T @ inv @ rl.L + rl.R.T @ inv @ rl.R,
        )


class OperatorSet:
    """All dual meshes and their operators for one state of the main mesh."""

    def __init__(self, mesh: AmrMesh, duals: Sequence[DualMesh], degree: int):
        self.mesh = mesh
        self.duals = list(duals)
        self.degree = degree
        self.table = OperatorTable(build_basis(degree))
        self.axes = [StaggeredOperators(d, degree, self.table) for d in self.duals]
        self.cell_mass = self.axes[0].cell_mass
        self.cell_volumes = self.axes[0].cell_volumes

    def to_main(self, velocity: Sequence[np.ndarray]) -> List[np.ndarray]:
        return [ops.project_to_main(v) for ops, v in zip(self.axes, velocity)]

    def to_dual(self, velocity: Sequence[np.ndarray]) -> List[np.ndarray]:
        return [ops.project_to_dual(u) for ops, u in zip(self.axes, velocity)]

    def laplacian(self, masks: Optional[Sequence[np.ndarray]] = None) -> Laplacian:
        masks = masks or [None] * len(self.axes)
        return Laplacian([ops.gradient(m) for ops, m in zip(self.axes, masks)])
