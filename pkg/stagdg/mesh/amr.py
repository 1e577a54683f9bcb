"""
Cell-by-cell adaptive Cartesian mesh.

Cells live on per-level integer lattices. Every cell carries a status:

- ``VIRTUAL_PARENT`` (-1): refined, its children (or deeper cells) are active
- ``ACTIVE`` (0): part of the computational mesh
- ``VIRTUAL_CHILD`` (+1): kept after coarsening so a later refinement can reuse it

Geometry is kept in exact integer *units*: one unit is half of the
finest-level cell width (``h0 / (2 r^Lmax)``) per axis, so cell faces,
cell centres and every dual-element boundary land on integers.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..basis import Interval, TensorOp, apply_tensor, build_basis, overlap_matrix
from ..errors import MeshError
from .fields import DofField

logger = logging.getLogger(__name__)

VIRTUAL_PARENT = -1
ACTIVE = 0
VIRTUAL_CHILD = 1

Coords = Tuple[int, ...]


@dataclass
class Cell:
    """One node of the refinement tree."""

    level: int
    coords: Coords
    status: int = ACTIVE
    parent: int = -1
    children: List[int] = field(default_factory=list)


@dataclass(frozen=True)
class FaceNeighbor:
    """
    One piece of a cell face and what lies on its other side.

    ``face_lo``/``face_hi`` are the corners of the shared rectangle in mesh
    units (the axial coordinate is the face position). ``shift`` must be added
    to the neighbour's stored box to place it next to the querying cell
    across a periodic boundary. ``cell`` is None on domain and solid walls.
    """

    cell: Optional[int]
    face_lo: Coords
    face_hi: Coords
    level_gap: int
    shift: Coords
    solid: bool = False

    @property
    def is_boundary(self) -> bool:
        return self.cell is None


@dataclass(frozen=True)
class NeighborEntry:
    """Face neighbour in active-index space (see :meth:`AmrMesh.neighbor_table`)."""

    index: int
    level_gap: int
    shift: Coords
    face_lo: Coords
    face_hi: Coords


class AmrMesh:
    """Refinement tree over a Cartesian box, with optional solid level-0 blocks."""

    def __init__(
        self,
        extent: Sequence[Tuple[float, float]],
        counts: Sequence[int],
        refine_factor: int = 2,
        max_level: int = 0,
        periodic: Optional[Sequence[bool]] = None,
        solid_boxes: Optional[Sequence[Sequence[Tuple[float, float]]]] = None,
    ):
        self.dim = len(counts)
        if self.dim not in (1, 2, 3) or len(extent) != self.dim:
            raise MeshError(f"Extent {extent} and counts {counts} must describe a 1D, 2D or 3D box")
        for lo, hi in extent:
            if not hi > lo:
                raise MeshError(f"Non-positive extent [{lo}, {hi}]")
        if any(int(c) < 1 for c in counts):
            raise MeshError(f"Level-0 cell counts must be >= 1, got {counts}")
        if refine_factor < 2:
            raise MeshError(f"Refinement factor must be >= 2, got {refine_factor}")
        if max_level < 0:
            raise MeshError(f"Maximum level must be >= 0, got {max_level}")

        self.extent = tuple((float(lo), float(hi)) for lo, hi in extent)
        self.counts = tuple(int(c) for c in counts)
        self.refine_factor = int(refine_factor)
        self.max_level = int(max_level)
        self.periodic = tuple(bool(p) for p in (periodic or [False] * self.dim))
        if len(self.periodic) != self.dim:
            raise MeshError(f"Periodicity flags {periodic} do not match dimension {self.dim}")

        self.origin = np.array([lo for lo, _ in self.extent])
        self.length = np.array([hi - lo for lo, hi in self.extent])
        self.h0 = self.length / np.array(self.counts)
        self.unit_length = self.h0 / (2 * self.refine_factor**self.max_level)
        self.domain_units = np.array(self.counts) * self.scale(0)

        self.solid_boxes = [tuple((float(a), float(b)) for a, b in box) for box in (solid_boxes or [])]
        self.solid = np.zeros(self.counts, dtype=bool)
        for idx in itertools.product(*(range(c) for c in self.counts)):
            centre = self.origin + (np.array(idx) + 0.5) * self.h0
            for box in self.solid_boxes:
                if all(a <= centre[k] <= b for k, (a, b) in enumerate(box)):
                    self.solid[idx] = True
                    break

        self.cells: List[Cell] = []
        self._lookup: List[Dict[Coords, int]] = [dict() for _ in range(self.max_level + 1)]
        self.roots: List[int] = []
        for idx in itertools.product(*(range(c) for c in self.counts)):
            if not self.solid[idx]:
                self.roots.append(self._new_cell(0, tuple(idx), ACTIVE, -1))

        self.version = 0
        self._active_cache: Optional[List[int]] = None
        self._index_cache: Optional[Dict[int, int]] = None
        self._neighbor_cache: Optional[Tuple[int, List]] = None

    # ------------------------------------------------------------------
    # Tree bookkeeping

    def _new_cell(self, level: int, coords: Coords, status: int, parent: int) -> int:
        cid = len(self.cells)
        self.cells.append(Cell(level=level, coords=coords, status=status, parent=parent))
        self._lookup[level][coords] = cid
        return cid

    def _touch(self) -> None:
        self.version += 1
        self._active_cache = None
        self._index_cache = None
        self._neighbor_cache = None

    def lookup(self, level: int, coords: Coords) -> Optional[int]:
        if level > self.max_level:
            return None
        return self._lookup[level].get(tuple(coords))

    @property
    def active(self) -> List[int]:
        """Active cell ids, depth-first from the level-0 cells in lexicographic order."""
        if self._active_cache is None:
            out: List[int] = []
            stack = list(reversed(self.roots))
            while stack:
                cid = stack.pop()
                cell = self.cells[cid]
                if cell.status == ACTIVE:
                    out.append(cid)
                elif cell.status == VIRTUAL_PARENT:
                    stack.extend(reversed(cell.children))
            self._active_cache = out
        return self._active_cache

    @property
    def active_index(self) -> Dict[int, int]:
        if self._index_cache is None:
            self._index_cache = {cid: i for i, cid in enumerate(self.active)}
        return self._index_cache

    @property
    def n_active(self) -> int:
        return len(self.active)

    def count_by_status(self) -> Dict[int, int]:
        counts = {VIRTUAL_PARENT: 0, ACTIVE: 0, VIRTUAL_CHILD: 0}
        for cell in self.cells:
            counts[cell.status] += 1
        return counts

    def level_counts(self) -> List[int]:
        """Number of active cells per level 0..max_level."""
        counts = [0] * (self.max_level + 1)
        for cid in self.active:
            counts[self.cells[cid].level] += 1
        return counts

    # ------------------------------------------------------------------
    # Geometry

    def scale(self, level: int) -> int:
        """Cell width at ``level`` in mesh units."""
        return 2 * self.refine_factor ** (self.max_level - level)

    def cell_width(self, level: int) -> np.ndarray:
        return self.h0 / self.refine_factor**level

    def box_units(self, cid: int) -> Tuple[np.ndarray, np.ndarray]:
        cell = self.cells[cid]
        s = self.scale(cell.level)
        lo = np.array(cell.coords, dtype=np.int64) * s
        return lo, lo + s

    def to_physical(self, units: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(units, dtype=float) * self.unit_length

    def cell_box(self, cid: int) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self.box_units(cid)
        return self.to_physical(lo), self.to_physical(hi)

    def cell_center(self, cid: int) -> np.ndarray:
        lo, hi = self.cell_box(cid)
        return 0.5 * (lo + hi)

    def cell_volume(self, cid: int) -> float:
        return float(np.prod(self.cell_width(self.cells[cid].level)))

    def active_levels(self) -> np.ndarray:
        return np.array([self.cells[cid].level for cid in self.active], dtype=np.int64)

    def active_boxes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical lower corners and widths of all active cells, in active order."""
        levels = self.active_levels()
        lo = np.array([self.cells[cid].coords for cid in self.active], dtype=float)
        widths = self.h0[None, :] / (self.refine_factor ** levels[:, None])
        return self.origin + lo * widths, widths

    def min_width(self) -> np.ndarray:
        levels = self.active_levels()
        return self.cell_width(int(levels.max())) if len(levels) else self.h0

    def domain_volume(self) -> float:
        """Fluid volume (domain box minus solid blocks)."""
        return float(np.prod(self.h0) * np.count_nonzero(~self.solid))

    def is_solid(self, level: int, coords: Coords) -> bool:
        root = tuple(c // self.refine_factor**level for c in coords)
        return bool(self.solid[root])

    def fully_periodic(self) -> bool:
        return all(self.periodic) and not self.solid.any()

    # ------------------------------------------------------------------
    # Neighbours

    def _wrap(self, level: int, coords: List[int]) -> Tuple[Optional[Coords], Coords]:
        wrapped = list(coords)
        shift = [0] * self.dim
        for a in range(self.dim):
            n = self.counts[a] * self.refine_factor**level
            if 0 <= wrapped[a] < n:
                continue
            if not self.periodic[a]:
                return None, tuple(shift)
            if wrapped[a] >= n:
                wrapped[a] -= n
                shift[a] = int(self.domain_units[a])
            else:
                wrapped[a] += n
                shift[a] = -int(self.domain_units[a])
        return tuple(wrapped), tuple(shift)

    def _covering_leaf(self, level: int, coords: Coords) -> Optional[int]:
        """Active ancestor-or-self of the lattice position (level, coords), if any."""
        while level >= 0:
            cid = self.lookup(level, coords)
            if cid is not None and self.cells[cid].status == ACTIVE:
                return cid
            if cid is not None and self.cells[cid].status == VIRTUAL_PARENT:
                return None
            level -= 1
            coords = tuple(c // self.refine_factor for c in coords)
        return None

    def _leaves_facing(self, level: int, coords: Coords, axis: int, side: int) -> List[int]:
        """Active cells covering the ``side`` face of lattice position (level, coords)."""
        cid = self.lookup(level, coords)
        if cid is None or self.cells[cid].status == VIRTUAL_CHILD:
            leaf = self._covering_leaf(level - 1, tuple(c // self.refine_factor for c in coords)) if level else None
            return [] if leaf is None else [leaf]
        cell = self.cells[cid]
        if cell.status == ACTIVE:
            return [cid]
        edge = 0 if side < 0 else self.refine_factor - 1
        out: List[int] = []
        for ch in cell.children:
            child = self.cells[ch]
            if child.coords[axis] - cell.coords[axis] * self.refine_factor == edge:
                out.extend(self._leaves_facing(child.level, child.coords, axis, side))
        return out

    def face_neighbors(self, cid: int, axis: int, side: int) -> List[FaceNeighbor]:
        """
        Neighbours across the ``side`` (-1 or +1) face of ``cid`` normal to ``axis``.

        Returns one entry for a same-level or coarser neighbour, one entry per
        finer neighbour, or a single boundary entry on walls and solids.
        """
        if side not in (-1, 1):
            raise ValueError(f"side must be -1 or +1, got {side}")
        cell = self.cells[cid]
        lo, hi = self.box_units(cid)
        face_pos = int(hi[axis] if side > 0 else lo[axis])
        target = list(cell.coords)
        target[axis] += side
        wrapped, shift = self._wrap(cell.level, target)

        def _face(a_lo: np.ndarray, a_hi: np.ndarray) -> Tuple[Coords, Coords]:
            f_lo = np.maximum(lo, a_lo)
            f_hi = np.minimum(hi, a_hi)
            f_lo[axis] = f_hi[axis] = face_pos
            return tuple(int(v) for v in f_lo), tuple(int(v) for v in f_hi)

        zero = tuple([0] * self.dim)
        if wrapped is None:
            f_lo, f_hi = _face(lo, hi)
            return [FaceNeighbor(None, f_lo, f_hi, 0, zero, solid=False)]
        if self.is_solid(cell.level, wrapped):
            f_lo, f_hi = _face(lo, hi)
            return [FaceNeighbor(None, f_lo, f_hi, 0, zero, solid=True)]

        out = []
        shift_arr = np.array(shift, dtype=np.int64)
        for leaf in self._leaves_facing(cell.level, wrapped, axis, -side):
            n_lo, n_hi = self.box_units(leaf)
            f_lo, f_hi = _face(n_lo + shift_arr, n_hi + shift_arr)
            out.append(FaceNeighbor(leaf, f_lo, f_hi, self.cells[leaf].level - cell.level, shift))
        return out

    def neighbor_table(self) -> List[List[List[Optional[List[NeighborEntry]]]]]:
        """
        Face neighbours of every active cell in active-index space.

        ``table[i][axis][0 | 1]`` is the list for the low/high side, or None on
        a wall. Cached until the next mutation.
        """
        if self._neighbor_cache is not None and self._neighbor_cache[0] == self.version:
            return self._neighbor_cache[1]
        index = self.active_index
        table = []
        for cid in self.active:
            per_axis = []
            for axis in range(self.dim):
                sides = []
                for side in (-1, 1):
                    nbs = self.face_neighbors(cid, axis, side)
                    if nbs[0].is_boundary:
                        sides.append(None)
                    else:
                        sides.append(
                            [NeighborEntry(index[n.cell], n.level_gap, n.shift, n.face_lo, n.face_hi) for n in nbs]
                        )
                per_axis.append(sides)
            table.append(per_axis)
        self._neighbor_cache = (self.version, table)
        return table

    def is_balanced(self) -> bool:
        """True when face-adjacent active cells differ by at most one level."""
        for per_axis in self.neighbor_table():
            for sides in per_axis:
                for entries in sides:
                    if entries and any(abs(e.level_gap) > 1 for e in entries):
                        return False
        return True

    # ------------------------------------------------------------------
    # Refinement transactions (no data transfer here, see adapt)

    def child_offset(self, cid: int) -> Coords:
        cell = self.cells[cid]
        parent = self.cells[cell.parent]
        return tuple(c - p * self.refine_factor for c, p in zip(cell.coords, parent.coords))

    def refine(self, cid: int) -> List[int]:
        """Split an active cell into r^d active children, reusing virtual children if present."""
        cell = self.cells[cid]
        if cell.status != ACTIVE:
            raise ValueError(f"Cell {cid} is not active")
        if cell.level >= self.max_level:
            raise MeshError(f"Cell {cid} is already at the maximum level {self.max_level}")
        r = self.refine_factor
        if not cell.children:
            for off in itertools.product(range(r), repeat=self.dim):
                coords = tuple(c * r + o for c, o in zip(cell.coords, off))
                cell.children.append(self._new_cell(cell.level + 1, coords, ACTIVE, cid))
        else:
            for ch in cell.children:
                self.cells[ch].status = ACTIVE
        cell.status = VIRTUAL_PARENT
        self._touch()
        return list(cell.children)

    def coarsen(self, parent: int) -> None:
        """Merge an all-active family back into its parent; children become virtual."""
        cell = self.cells[parent]
        if cell.status != VIRTUAL_PARENT or any(self.cells[ch].status != ACTIVE for ch in cell.children):
            raise ValueError(f"Cell {parent} does not have an all-active family")
        for ch in cell.children:
            self.cells[ch].status = VIRTUAL_CHILD
        cell.status = ACTIVE
        self._touch()

    # ------------------------------------------------------------------
    # Serialization helpers (checkpointing)

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "level": np.array([c.level for c in self.cells], dtype=np.int64),
            "coords": np.array([c.coords for c in self.cells], dtype=np.int64).reshape(len(self.cells), self.dim),
            "status": np.array([c.status for c in self.cells], dtype=np.int64),
            "parent": np.array([c.parent for c in self.cells], dtype=np.int64),
        }

    @classmethod
    def from_arrays(
        cls,
        extent: Sequence[Tuple[float, float]],
        counts: Sequence[int],
        refine_factor: int,
        max_level: int,
        periodic: Sequence[bool],
        solid_boxes: Sequence[Sequence[Tuple[float, float]]],
        arrays: Dict[str, np.ndarray],
    ) -> "AmrMesh":
        mesh = cls(extent, counts, refine_factor, max_level, periodic, solid_boxes)
        n_roots = len(mesh.roots)
        levels, coords, status, parents = arrays["level"], arrays["coords"], arrays["status"], arrays["parent"]
        if len(levels) < n_roots or np.any(levels[:n_roots] != 0):
            raise MeshError("Cell arrays do not start with the level-0 cells of this mesh")
        for i in range(n_roots, len(levels)):
            cid = mesh._new_cell(int(levels[i]), tuple(int(v) for v in coords[i]), ACTIVE, int(parents[i]))
            mesh.cells[int(parents[i])].children.append(cid)
        for cid, st in enumerate(status):
            mesh.cells[cid].status = int(st)
        mesh._touch()
        return mesh

    def describe(self) -> str:
        return (
            f"{self.dim}D mesh {self.counts} r={self.refine_factor} lmax={self.max_level}: "
            f"{self.n_active} active cells, levels {self.level_counts()}"
        )


def build_uniform(
    extent: Sequence[Tuple[float, float]],
    counts: Sequence[int],
    refine_factor: int = 2,
    max_level: int = 0,
    periodic: Optional[Sequence[bool]] = None,
    solid_boxes: Optional[Sequence[Sequence[Tuple[float, float]]]] = None,
) -> AmrMesh:
    """Level-0 mesh with every (non-solid) cell active and no virtual cells."""
    return AmrMesh(extent, counts, refine_factor, max_level, periodic, solid_boxes)


# ----------------------------------------------------------------------
# Data transfer between levels


class LevelTransfer:
    """
    L2 prolongation P (parent -> child) and averaging A (children -> parent).

    Both are tensor products of 1D matrices indexed by the child offset along
    each axis; A(P(u)) reproduces u for every polynomial of degree <= N.
    """

    def __init__(self, degree: int, dim: int, refine_factor: int):
        self.basis = build_basis(degree)
        self.dim = dim
        self.refine_factor = refine_factor
        r = refine_factor
        w = self.basis.weights
        parent = Interval(Fraction(0), Fraction(1))
        self._prolong = []
        self._average = []
        for o in range(r):
            child = Interval(Fraction(o, r), Fraction(o + 1, r))
            self._prolong.append(overlap_matrix(self.basis, child, parent) / (w[:, None] / r))
            self._average.append(overlap_matrix(self.basis, parent, child) / w[:, None])

    def prolong(self, block: np.ndarray, offset: Coords) -> np.ndarray:
        return apply_tensor(TensorOp(tuple(self._prolong[o] for o in offset)), block)

    def average(self, blocks: Sequence[np.ndarray], offsets: Sequence[Coords]) -> np.ndarray:
        total = np.zeros_like(blocks[0])
        for block, offset in zip(blocks, offsets):
            total = total + apply_tensor(TensorOp(tuple(self._average[o] for o in offset)), block)
        return total


@dataclass
class RemeshReport:
    """What an adapt call did, including requests it had to clip."""

    refined: List[int] = field(default_factory=list)
    forced: List[int] = field(default_factory=list)
    coarsened: List[int] = field(default_factory=list)
    clipped_max_level: List[int] = field(default_factory=list)
    clipped_balance: List[int] = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return bool(self.refined or self.forced or self.coarsened)

    @property
    def is_empty(self) -> bool:
        return not (self.changed or self.clipped_max_level or self.clipped_balance)

    def summary(self) -> str:
        return (
            f"refined {len(self.refined)} (+{len(self.forced)} forced), coarsened {len(self.coarsened)}, "
            f"clipped {len(self.clipped_max_level)} at max level / {len(self.clipped_balance)} by balance"
        )


def adapt(
    mesh: AmrMesh,
    fields: Sequence[DofField],
    chi: np.ndarray,
    chi_ref: float,
    chi_rec: float,
) -> Tuple[List[DofField], RemeshReport]:
    """
    Refine cells with chi > chi_ref and merge families with chi < chi_rec.

    ``chi`` and the field blocks follow the mesh's active order on entry; the
    returned fields follow the new active order. Refinement transfers data by
    L2 prolongation, coarsening by L2 averaging. The 2:1 constraint is kept by
    refining coarser neighbours first and by skipping coarsenings that would
    break it; both are recorded in the report.
    """
    if not chi_rec < chi_ref:
        raise ValueError(f"chi_rec ({chi_rec}) must be smaller than chi_ref ({chi_ref})")
    active = list(mesh.active)
    chi = np.asarray(chi, dtype=float)
    if len(chi) != len(active):
        raise ValueError(f"chi has {len(chi)} entries for {len(active)} active cells")
    for f in fields:
        if f.attachment != "main" or f.blocks.shape[0] != len(active):
            raise ValueError(f"Field {f.name!r} is not a main-mesh field of this mesh")

    report = RemeshReport()
    if not fields:
        degree = 0
    else:
        degree = fields[0].degree
    transfer = LevelTransfer(degree, mesh.dim, mesh.refine_factor)
    store: List[Dict[int, np.ndarray]] = [{cid: f.blocks[i] for i, cid in enumerate(active)} for f in fields]
    chi_of = {cid: float(x) for cid, x in zip(active, chi)}
    touched = set()

    def _refine(cid: int, forced: bool) -> None:
        if mesh.cells[cid].status != ACTIVE:
            return
        # coarser neighbours would end up two levels apart from the children
        for axis in range(mesh.dim):
            for side in (-1, 1):
                for nb in mesh.face_neighbors(cid, axis, side):
                    if nb.cell is not None and nb.level_gap < 0:
                        _refine(nb.cell, forced=True)
        children = mesh.refine(cid)
        for s in store:
            parent_block = s.pop(cid)
            for ch in children:
                s[ch] = transfer.prolong(parent_block, mesh.child_offset(ch))
        touched.add(cid)
        (report.forced if forced else report.refined).append(cid)

    for cid in active:
        if chi_of[cid] > chi_ref:
            if mesh.cells[cid].level >= mesh.max_level:
                report.clipped_max_level.append(cid)
            else:
                _refine(cid, forced=False)

    parents = sorted(
        {
            mesh.cells[cid].parent
            for cid in active
            if mesh.cells[cid].parent >= 0 and mesh.cells[cid].status == ACTIVE and chi_of[cid] < chi_rec
        }
    )
    for p in parents:
        family = mesh.cells[p].children
        if p in touched or mesh.cells[p].status != VIRTUAL_PARENT:
            continue
        if any(mesh.cells[ch].status != ACTIVE or chi_of.get(ch, np.inf) >= chi_rec for ch in family):
            continue
        family_set = set(family)
        violates = False
        for ch in family:
            for axis in range(mesh.dim):
                for side in (-1, 1):
                    for nb in mesh.face_neighbors(ch, axis, side):
                        if nb.cell is not None and nb.cell not in family_set and nb.level_gap > 0:
                            violates = True
        if violates:
            report.clipped_balance.append(p)
            continue
        offsets = [mesh.child_offset(ch) for ch in family]
        for s in store:
            s[p] = transfer.average([s.pop(ch) for ch in family], offsets)
        mesh.coarsen(p)
        report.coarsened.append(p)

    if report.clipped_max_level or report.clipped_balance:
        logger.warning(
            "Clipped refinement requests: %d at max level, %d by 2:1 balance",
            len(report.clipped_max_level),
            len(report.clipped_balance),
        )
    if not report.changed:
        return list(fields), report

    new_active = mesh.active
    out = [
        DofField(f.name, "main", f.degree, np.stack([s[cid] for cid in new_active]))
        for f, s in zip(fields, store)
    ]
    logger.info("Remeshed: %s -> %d active cells", report.summary(), len(new_active))
    return out, report
