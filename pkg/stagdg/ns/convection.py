"""
Explicit DG convection on the collocated main mesh with a Rusanov flux.

For each velocity component u_i the weak form reads

    M du_i/dt = int grad(phi) . F_i  -  sum_faces int phi F^_i . n

with F_ik = u_i u_k, volume integrals by collocation at the Gauss-Legendre
nodes and face integrals at the nodes of the finer face. The coarse trace on
a non-conforming face is interpolated to the fine face points.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..basis import TensorOp, apply_along, apply_tensor, build_basis, lagrange_matrix, mass_weights
from ..mesh.amr import AmrMesh
from .boundary import ResolvedBoundary, ghost_velocity

logger = logging.getLogger(__name__)

_SQRT_HALF_PI = np.sqrt(np.pi / 2.0)

Transverse = Optional[Tuple[np.ndarray, ...]]


@dataclass
class FaceGroup:
    """Interior faces normal to ``axis`` sharing one trace configuration per side."""

    axis: int
    lo_cells: np.ndarray
    hi_cells: np.ndarray
    area: np.ndarray
    normal_width: np.ndarray
    lo_trans: Transverse = None
    hi_trans: Transverse = None


@dataclass
class BoundaryFaces:
    axis: int
    side: int
    cells: np.ndarray
    area: np.ndarray
    normal_width: np.ndarray
    points: np.ndarray
    patches: list


def _insert_axis(transverse: np.ndarray, vec: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.multiply.outer(transverse, vec), -1, axis + 1)


class ConvectionOperator:
    """Face tables and Rusanov flux evaluation for one mesh state."""

    def __init__(self, mesh: AmrMesh, degree: int, boundary: ResolvedBoundary):
        self.mesh = mesh
        self.degree = degree
        self.dim = mesh.dim
        self.basis = build_basis(degree)
        self.boundary = boundary
        self.mesh_version = mesh.version
        _, self.widths = mesh.active_boxes()
        self.volumes = np.prod(self.widths, axis=1)
        self.weights = mass_weights(self.basis, self.dim)
        self.face_weights = mass_weights(self.basis, self.dim - 1)
        self.groups: List[FaceGroup] = []
        self.boundary_faces: List[BoundaryFaces] = []
        self._build()

    def _interp(self, offsets: Sequence[int]) -> Tuple[np.ndarray, ...]:
        r = self.mesh.refine_factor
        nodes = self.basis.nodes
        return tuple(lagrange_matrix(nodes, (o + nodes) / r) for o in offsets)

    def _build(self) -> None:
        mesh = self.mesh
        table = mesh.neighbor_table()
        levels = mesh.active_levels()
        conforming: Dict[int, List[Tuple[int, int]]] = {}
        hanging: Dict[Tuple[int, str, Tuple[int, ...]], List[Tuple[int, int]]] = {}
        walls: Dict[Tuple[int, int], List[int]] = {}

        for i, cid in enumerate(mesh.active):
            c_lo, _ = mesh.box_units(cid)
            s_f = mesh.scale(int(levels[i]) + 1) if levels[i] < mesh.max_level else 1
            for axis in range(self.dim):
                lo_entries, hi_entries = table[i][axis]
                if hi_entries is None:
                    walls.setdefault((axis, 1), []).append(i)
                elif hi_entries[0].level_gap == 0:
                    conforming.setdefault(axis, []).append((i, hi_entries[0].index))
                elif hi_entries[0].level_gap == 1:
                    for e in hi_entries:
                        offs = self._offsets(e.face_lo, c_lo, s_f, axis)
                        hanging.setdefault((axis, "lo", offs), []).append((i, e.index))
                if lo_entries is None:
                    walls.setdefault((axis, -1), []).append(i)
                elif lo_entries[0].level_gap == 1:
                    for e in lo_entries:
                        offs = self._offsets(e.face_lo, c_lo, s_f, axis)
                        hanging.setdefault((axis, "hi", offs), []).append((e.index, i))

        for axis, pairs in conforming.items():
            lo, hi = (np.array(v, dtype=np.int64) for v in zip(*pairs))
            self.groups.append(FaceGroup(axis, lo, hi, self._area(hi, axis), self.widths[hi, axis]))
        for (axis, coarse, offs), pairs in hanging.items():
            lo, hi = (np.array(v, dtype=np.int64) for v in zip(*pairs))
            fine = hi if coarse == "lo" else lo
            interp = self._interp(offs)
            self.groups.append(
                FaceGroup(
                    axis,
                    lo,
                    hi,
                    self._area(fine, axis),
                    self.widths[fine, axis],
                    lo_trans=interp if coarse == "lo" else None,
                    hi_trans=interp if coarse == "hi" else None,
                )
            )
        for (axis, side), cells in walls.items():
            idx = np.array(cells, dtype=np.int64)
            points = np.array([self.boundary.face_points(i, axis, side, self.basis.nodes) for i in cells])
            patches = [self.boundary.patch(i, axis, side) for i in cells]
            self.boundary_faces.append(
                BoundaryFaces(axis, side, idx, self._area(idx, axis), self.widths[idx, axis], points, patches)
            )

    def _offsets(self, face_lo: Sequence[int], c_lo: np.ndarray, s_f: int, axis: int) -> Tuple[int, ...]:
        return tuple((int(face_lo[t]) - int(c_lo[t])) // s_f for t in range(self.dim) if t != axis)

    def _area(self, cells: np.ndarray, axis: int) -> np.ndarray:
        return np.prod(np.delete(self.widths[cells], axis, axis=1), axis=1)

    # ------------------------------------------------------------------

    def _trace(self, blocks: np.ndarray, end: np.ndarray, axis: int, trans: Transverse) -> np.ndarray:
        out = np.tensordot(blocks, end, axes=([axis + 1], [0]))
        if trans is not None:
            out = apply_tensor(TensorOp(trans), out)
        return out

    def _lift(self, values: np.ndarray, end: np.ndarray, axis: int, trans: Transverse) -> np.ndarray:
        if trans is not None:
            values = apply_tensor(TensorOp(trans).transpose(), values)
        return _insert_axis(values, end, axis)

    def _rusanov(
        self,
        minus: List[np.ndarray],
        plus: List[np.ndarray],
        axis: int,
        normal_width: np.ndarray,
        nu_penalty: float,
    ) -> List[np.ndarray]:
        s = 2.0 * np.maximum(np.abs(minus[axis]), np.abs(plus[axis]))
        if nu_penalty > 0.0:
            shape = (-1,) + (1,) * (self.dim - 1)
            s = s + (2.0 * nu_penalty * (2 * self.degree + 1) / (normal_width * _SQRT_HALF_PI)).reshape(shape)
        return [
            0.5 * (minus[i] * minus[axis] + plus[i] * plus[axis]) - 0.5 * s * (plus[i] - minus[i])
            for i in range(self.dim)
        ]

    def surface(self, velocity: Sequence[np.ndarray], t: float, nu_penalty: float = 0.0) -> List[np.ndarray]:
        """sum over faces of int phi F^ . n, one main-mesh array per component."""
        out = [np.zeros_like(u) for u in velocity]
        left, right = self.basis.left, self.basis.right
        shape = (-1,) + (1,) * (self.dim - 1)
        for g in self.groups:
            minus = [self._trace(u[g.lo_cells], right, g.axis, g.lo_trans) for u in velocity]
            plus = [self._trace(u[g.hi_cells], left, g.axis, g.hi_trans) for u in velocity]
            flux = self._rusanov(minus, plus, g.axis, g.normal_width, nu_penalty)
            for i in range(self.dim):
                weighted = flux[i] * self.face_weights * g.area.reshape(shape)
                np.add.at(out[i], g.lo_cells, self._lift(weighted, right, g.axis, g.lo_trans))
                np.add.at(out[i], g.hi_cells, -self._lift(weighted, left, g.axis, g.hi_trans))
        for b in self.boundary_faces:
            end = right if b.side > 0 else left
            interior = [self._trace(u[b.cells], end, b.axis, None) for u in velocity]
            n_faces = len(b.cells)
            flat = np.stack([v.reshape(n_faces, -1) for v in interior], axis=-1)
            ghost = np.stack(
                [ghost_velocity(p, flat[f], b.points[f], t) for f, p in enumerate(b.patches)]
            ) if n_faces else flat
            ghost_parts = [ghost[..., i].reshape(interior[i].shape) for i in range(self.dim)]
            if b.side > 0:
                flux = self._rusanov(interior, ghost_parts, b.axis, b.normal_width, nu_penalty)
            else:
                flux = self._rusanov(ghost_parts, interior, b.axis, b.normal_width, nu_penalty)
            for i in range(self.dim):
                weighted = flux[i] * self.face_weights * b.area.reshape(shape)
                np.add.at(out[i], b.cells, b.side * self._lift(weighted, end, b.axis, None))
        return out

    def volume(self, velocity: Sequence[np.ndarray]) -> List[np.ndarray]:
        """int grad(phi) . F by collocation, one main-mesh array per component."""
        diff_t = self.basis.diff.T
        shape = (-1,) + (1,) * self.dim
        out = []
        for i in range(self.dim):
            acc = np.zeros_like(velocity[i])
            for k in range(self.dim):
                scaled = (self.volumes / self.widths[:, k]).reshape(shape) * self.weights * velocity[i] * velocity[k]
                acc += apply_along(scaled, diff_t, k, self.dim)
            out.append(acc)
        return out

    def rhs(self, velocity: Sequence[np.ndarray], t: float, nu_penalty: float = 0.0) -> List[np.ndarray]:
        """Volume minus surface term, i.e. M du/dt of the convective part."""
        surface = self.surface(velocity, t, nu_penalty)
        return [v - s for v, s in zip(self.volume(velocity), surface)]
