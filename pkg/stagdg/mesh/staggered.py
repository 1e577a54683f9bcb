"""
Face-based dual meshes (edge-based / C-grid staggering).

For every axis k the dual mesh holds:

- a *standard* element for each interior face normal to k, spanning half of
  each incident cell; where a coarse cell meets r^(d-1) finer cells, each fine
  face gets a fine-level element centred on it
- an *unusual staggered* (u.s.) element filling the rest of the coarse cell's
  half next to such a transition; it lies inside one cell, has no face and
  ``left == right``
- a *boundary* half element next to every wall or solid face

Geometry is exact in mesh units (see :mod:`stagdg.mesh.amr`). Periodic
elements keep unwrapped coordinates; incidences carry the shift that places
the wrapped cell next to them.
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import MeshError
from .amr import AmrMesh

logger = logging.getLogger(__name__)

STANDARD = "standard"
BOUNDARY = "boundary"
UNUSUAL = "us"

Coords = Tuple[int, ...]


@dataclass(frozen=True)
class SigmaConfig:
    """
    Mutual position and refinement of a dual element and one incident cell.

    ``role`` is ``"L"`` when the cell lies on the low side of the element's
    face (for u.s. elements: when the strip sits in the cell's high half).
    ``axial`` is the part of the element inside the cell along k and ``extent``
    the whole element, both in cell units;
    ``offsets`` index the transverse sub-position of a finer element.
    """

    kind: str
    role: str
    level_gap: int
    offsets: Tuple[int, ...]
    axial: Tuple[Fraction, Fraction]
    extent: Tuple[Fraction, Fraction]

    @property
    def sign(self) -> int:
        """+1 when the cell is on the high side of the face, -1 on the low side, 0 without a face."""
        if self.kind == UNUSUAL:
            return 0
        return -1 if self.role == "L" else 1


@dataclass(frozen=True)
class DualElement:
    """One staggered element; boxes are in (unwrapped) mesh units."""

    index: int
    kind: str
    lo: Coords
    hi: Coords
    left: Optional[int]
    right: Optional[int]
    level: float
    face: Optional[int]
    boundary_side: int = 0

    @property
    def has_face(self) -> bool:
        return self.face is not None


@dataclass(frozen=True)
class Incidence:
    """A (dual element, active cell) pair whose volumes intersect."""

    dual: int
    cell: int
    shift: Coords
    sigma: SigmaConfig


@dataclass(frozen=True)
class DualFace:
    """Interior face between two dual elements inside one main cell."""

    position: int
    lower: int
    upper: int
    lo: Coords
    hi: Coords


class DualMesh:
    """The staggered mesh for axis ``axis`` of an :class:`AmrMesh`."""

    def __init__(self, mesh: AmrMesh, axis: int, elements: List[DualElement], incidences: List[Incidence]):
        self.mesh = mesh
        self.axis = axis
        self.mesh_version = mesh.version
        self.elements = elements
        self.incidences = incidences
        self.lo_units = np.array([e.lo for e in elements], dtype=np.int64).reshape(len(elements), mesh.dim)
        self.hi_units = np.array([e.hi for e in elements], dtype=np.int64).reshape(len(elements), mesh.dim)
        self.lo = mesh.origin + self.lo_units * mesh.unit_length
        self.widths = (self.hi_units - self.lo_units) * mesh.unit_length
        self.volumes = np.prod(self.widths, axis=1)
        self._by_cell: Optional[Dict[int, List[Incidence]]] = None

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    def count(self, kind: str) -> int:
        return sum(1 for e in self.elements if e.kind == kind)

    def incidences_of_cell(self, cell: int) -> List[Incidence]:
        if self._by_cell is None:
            by_cell: Dict[int, List[Incidence]] = {}
            for inc in self.incidences:
                by_cell.setdefault(inc.cell, []).append(inc)
            self._by_cell = by_cell
        return self._by_cell.get(cell, [])

    def sigma_catalog_in_use(self) -> List[SigmaConfig]:
        return sorted({inc.sigma for inc in self.incidences}, key=repr)


def classify_sigma(mesh: AmrMesh, element: DualElement, axis: int, cell: int, shift: Coords) -> SigmaConfig:
    """Canonical configuration key of the (element, cell) pair, derived from exact geometry."""
    cid = mesh.active[cell]
    c_lo, _ = mesh.box_units(cid)
    c_lo = c_lo + np.array(shift, dtype=np.int64)
    cell_level = mesh.cells[cid].level
    s = mesh.scale(cell_level)
    a_lo = max(element.lo[axis], int(c_lo[axis]))
    a_hi = min(element.hi[axis], int(c_lo[axis]) + s)
    axial = (Fraction(a_lo - int(c_lo[axis]), s), Fraction(a_hi - int(c_lo[axis]), s))
    extent = (Fraction(element.lo[axis] - int(c_lo[axis]), s), Fraction(element.hi[axis] - int(c_lo[axis]), s))

    offsets = []
    level_gap = int(element.level) - cell_level if element.kind == STANDARD else 0
    for t in range(mesh.dim):
        if t == axis:
            continue
        width = element.hi[t] - element.lo[t]
        if width < s:
            offsets.append((element.lo[t] - int(c_lo[t])) // width)
        else:
            offsets.append(0)
    if element.kind == UNUSUAL:
        role = "L" if axial[0] >= Fraction(1, 2) else "R"
    else:
        face = element.face
        role = "L" if face is not None and face >= int(c_lo[axis]) + s else "R"
    return SigmaConfig(element.kind, role, level_gap, tuple(offsets), axial, extent)


def sigma_catalog(dim: int, refine_factor: int) -> List[SigmaConfig]:
    """Every configuration that can occur for (d, r) under the 2:1 constraint."""
    r = refine_factor
    half, zero, one = Fraction(1, 2), Fraction(0), Fraction(1)
    thin = Fraction(1, 2 * r)
    zeros = tuple([0] * (dim - 1))
    out = [
        SigmaConfig(STANDARD, "L", 0, zeros, (half, one), (half, one + half)),
        SigmaConfig(STANDARD, "R", 0, zeros, (zero, half), (-half, half)),
        SigmaConfig(BOUNDARY, "L", 0, zeros, (half, one), (half, one)),
        SigmaConfig(BOUNDARY, "R", 0, zeros, (zero, half), (zero, half)),
        SigmaConfig(UNUSUAL, "L", 0, zeros, (half, one - thin), (half, one - thin)),
        SigmaConfig(UNUSUAL, "R", 0, zeros, (thin, half), (thin, half)),
    ]
    for offsets in itertools.product(range(r), repeat=dim - 1):
        out.append(SigmaConfig(STANDARD, "L", 1, tuple(offsets), (one - thin, one), (one - thin, one + thin)))
        out.append(SigmaConfig(STANDARD, "R", 1, tuple(offsets), (zero, thin), (-thin, thin)))
    return out


def build_dual(mesh: AmrMesh, axis: int) -> DualMesh:
    """
    Build the dual mesh for ``axis``.

    A pure function of the mesh: identical meshes give identical dual meshes
    (same element order, same coordinates).

    Raises:
        MeshError: if the mesh violates the 2:1 level constraint
    """
    if not 0 <= axis < mesh.dim:
        raise ValueError(f"Axis {axis} out of range for a {mesh.dim}D mesh")
    if not mesh.is_balanced():
        raise MeshError("Cannot build dual meshes on a mesh that is not 2:1 balanced")

    r = mesh.refine_factor
    table = mesh.neighbor_table()
    zero = tuple([0] * mesh.dim)
    elements: List[DualElement] = []
    pending: List[Tuple[int, int, Coords]] = []

    def _add(kind: str, lo: np.ndarray, hi: np.ndarray, left, right, level, face, cells, boundary_side=0) -> None:
        idx = len(elements)
        elements.append(
            DualElement(
                index=idx,
                kind=kind,
                lo=tuple(int(v) for v in lo),
                hi=tuple(int(v) for v in hi),
                left=None if left is None else left[0],
                right=None if right is None else right[0],
                level=level,
                face=face,
                boundary_side=boundary_side,
            )
        )
        for cell, shift in cells:
            pending.append((idx, cell, shift))

    for i, cid in enumerate(mesh.active):
        level = mesh.cells[cid].level
        lo, hi = mesh.box_units(cid)
        s = mesh.scale(level)
        centre = int(lo[axis]) + s // 2
        lo_entries, hi_entries = table[i][axis]

        # low side
        if lo_entries is None:
            b_lo, b_hi = lo.copy(), hi.copy()
            b_hi[axis] = centre
            _add(BOUNDARY, b_lo, b_hi, None, (i, zero), level, int(lo[axis]), [(i, zero)], boundary_side=-1)
        elif lo_entries[0].level_gap == 1:
            s_f = s // r
            for e in lo_entries:
                d_lo, d_hi = np.array(e.face_lo), np.array(e.face_hi)
                d_lo[axis] = int(lo[axis]) - s_f // 2
                d_hi[axis] = int(lo[axis]) + s_f // 2
                _add(STANDARD, d_lo, d_hi, (e.index, e.shift), (i, zero), level + 1, int(lo[axis]),
                     [(e.index, e.shift), (i, zero)])
            u_lo, u_hi = lo.copy(), hi.copy()
            u_lo[axis] = int(lo[axis]) + s_f // 2
            u_hi[axis] = centre
            _add(UNUSUAL, u_lo, u_hi, (i, zero), (i, zero), level + 0.5, None, [(i, zero)])

        # high side
        if hi_entries is None:
            b_lo, b_hi = lo.copy(), hi.copy()
            b_lo[axis] = centre
            _add(BOUNDARY, b_lo, b_hi, (i, zero), None, level, int(hi[axis]), [(i, zero)], boundary_side=1)
        elif hi_entries[0].level_gap == 0:
            e = hi_entries[0]
            d_lo, d_hi = lo.copy(), hi.copy()
            d_lo[axis] = centre
            d_hi[axis] = centre + s
            _add(STANDARD, d_lo, d_hi, (i, zero), (e.index, e.shift), level, int(hi[axis]),
                 [(i, zero), (e.index, e.shift)])
        elif hi_entries[0].level_gap == 1:
            s_f = s // r
            u_lo, u_hi = lo.copy(), hi.copy()
            u_lo[axis] = centre
            u_hi[axis] = int(hi[axis]) - s_f // 2
            _add(UNUSUAL, u_lo, u_hi, (i, zero), (i, zero), level + 0.5, None, [(i, zero)])
            for e in hi_entries:
                d_lo, d_hi = np.array(e.face_lo), np.array(e.face_hi)
                d_lo[axis] = int(hi[axis]) - s_f // 2
                d_hi[axis] = int(hi[axis]) + s_f // 2
                _add(STANDARD, d_lo, d_hi, (i, zero), (e.index, e.shift), level + 1, int(hi[axis]),
                     [(i, zero), (e.index, e.shift)])

    incidences = [
        Incidence(dual=m, cell=cell, shift=shift, sigma=classify_sigma(mesh, elements[m], axis, cell, shift))
        for m, cell, shift in pending
    ]
    dual = DualMesh(mesh, axis, elements, incidences)
    logger.debug(
        "Dual mesh axis %d: %d standard, %d boundary, %d u.s. elements",
        axis,
        dual.count(STANDARD),
        dual.count(BOUNDARY),
        dual.count(UNUSUAL),
    )
    return dual


def build_duals(mesh: AmrMesh) -> List[DualMesh]:
    return [build_dual(mesh, k) for k in range(mesh.dim)]


def dual_faces_within(dual: DualMesh, cell: int) -> List[DualFace]:
    """
    Interior faces between dual elements inside an active cell (by active index).

    Neighbouring elements along the axis that touch inside the cell and
    overlap transversally share a face; the lower one is l*(i), the upper r*(i).
    """
    axis = dual.axis
    mesh = dual.mesh
    cid = mesh.active[cell]
    c_lo, c_hi = mesh.box_units(cid)
    pieces = []
    for inc in dual.incidences_of_cell(cell):
        shift = np.array(inc.shift, dtype=np.int64)
        e_lo = dual.lo_units[inc.dual] - shift
        e_hi = dual.hi_units[inc.dual] - shift
        pieces.append((int(e_lo[axis]), inc.dual, e_lo, e_hi))
    pieces.sort(key=lambda p: (p[0], p[1]))

    faces = []
    for _, a, a_lo, a_hi in pieces:
        pos = int(a_hi[axis])
        if not c_lo[axis] < pos < c_hi[axis]:
            continue
        for _, b, b_lo, b_hi in pieces:
            if int(b_lo[axis]) != pos:
                continue
            t_lo = np.maximum(a_lo, b_lo)
            t_hi = np.minimum(a_hi, b_hi)
            t_lo[axis] = t_hi[axis] = pos
            if all(t_hi[t] > t_lo[t] for t in range(mesh.dim) if t != axis):
                faces.append(DualFace(pos, a, b, tuple(int(v) for v in t_lo), tuple(int(v) for v in t_hi)))
    return faces
