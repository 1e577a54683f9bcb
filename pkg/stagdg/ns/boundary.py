"""
Boundary conditions: patches on the walls of the box and of solid blocks.

A :class:`BoundarySpec` is a list of :class:`BoundaryPatch` entries. Each
non-periodic boundary face of the main mesh must be covered by exactly one
patch; faces against solid blocks fall back to ``solid_default`` (no-slip
unless configured). :func:`resolve_boundaries` turns the spec into per-face
lookups used by convection, the viscous solve and the pressure solve.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigError
from ..mesh.amr import AmrMesh

logger = logging.getLogger(__name__)

NO_SLIP = "no_slip"
SLIP = "slip"
VELOCITY = "velocity"
PRESSURE = "pressure"

KINDS = (NO_SLIP, SLIP, VELOCITY, PRESSURE)

# f(points (n, d), t) -> (n, d) velocity or (n,) pressure
ValueFunction = Callable[[np.ndarray, float], np.ndarray]
Value = Union[float, Sequence[float], ValueFunction, None]


@dataclass
class BoundaryPatch:
    """
    One boundary condition on part of a wall.

    Attributes:
        kind: ``no_slip``, ``slip``, ``velocity`` (Dirichlet vector) or ``pressure`` (Dirichlet scalar)
        axis: normal axis of the wall
        side: -1 for the low wall, +1 for the high wall; ignored for solid faces
        region: optional per-axis (lo, hi) limits on the face centre, physical units
        value: constant or function of (points, t); velocity for ``velocity``, pressure for ``pressure``
        solid: the patch applies to faces against solid blocks instead of the box walls
        name: label used in messages
    """

    kind: str
    axis: int
    side: int
    region: Optional[Sequence[Tuple[float, float]]] = None
    value: Value = None
    solid: bool = False
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"Unknown boundary kind {self.kind!r}; expected one of {KINDS}")
        if self.side not in (-1, 1):
            raise ConfigError(f"Boundary side must be -1 or +1, got {self.side}")
        if not self.name:
            self.name = f"{self.kind}@{'lo' if self.side < 0 else 'hi'}{self.axis}"

    def contains(self, centre: np.ndarray) -> bool:
        if self.region is None:
            return True
        return all(lo - 1e-12 <= centre[a] <= hi + 1e-12 for a, (lo, hi) in enumerate(self.region))

    def velocity(self, points: np.ndarray, t: float, dim: int) -> np.ndarray:
        """Prescribed velocity at ``points``; zero for walls."""
        if self.kind != VELOCITY or self.value is None:
            return np.zeros((len(points), dim))
        if callable(self.value):
            return np.asarray(self.value(points, t), dtype=float).reshape(len(points), dim)
        return np.broadcast_to(np.asarray(self.value, dtype=float), (len(points), dim)).copy()

    def pressure(self, points: np.ndarray, t: float) -> np.ndarray:
        if self.kind != PRESSURE or self.value is None:
            return np.zeros(len(points))
        if callable(self.value):
            return np.asarray(self.value(points, t), dtype=float).reshape(len(points))
        return np.full(len(points), float(self.value))  # type: ignore[arg-type]

    def dirichlet_for(self, component: int) -> bool:
        """Whether this patch fixes velocity component ``component`` (normal only for slip walls)."""
        if self.kind in (NO_SLIP, VELOCITY):
            return True
        if self.kind == SLIP:
            return component == self.axis
        return False


@dataclass
class BoundarySpec:
    """All patches of a case. Periodic axes are a property of the mesh and need no patch."""

    patches: List[BoundaryPatch] = field(default_factory=list)
    solid_default: str = NO_SLIP

    def add(self, patch: BoundaryPatch) -> "BoundarySpec":
        self.patches.append(patch)
        return self

    @classmethod
    def closed_box(cls, dim: int, kind: str = NO_SLIP) -> "BoundarySpec":
        return cls([BoundaryPatch(kind, a, s) for a in range(dim) for s in (-1, 1)])


FaceKey = Tuple[int, int, int]  # (active cell index, axis, side)


class ResolvedBoundary:
    """
    Boundary patch of every non-periodic boundary face of one mesh state.

    Faces are keyed by ``(active cell index, axis, side)``.
    """

    def __init__(self, mesh: AmrMesh, spec: BoundarySpec, faces: Dict[FaceKey, BoundaryPatch]):
        self.mesh = mesh
        self.spec = spec
        self.faces = faces
        self.mesh_version = mesh.version

    def patch(self, cell: int, axis: int, side: int) -> BoundaryPatch:
        return self.faces[(cell, axis, side)]

    @property
    def has_pressure_outlet(self) -> bool:
        return any(p.kind == PRESSURE for p in self.faces.values())

    def face_points(self, cell: int, axis: int, side: int, ref_1d: np.ndarray) -> np.ndarray:
        """Physical points on a cell face at the tensor grid of ``ref_1d`` along the other axes."""
        mesh = self.mesh
        lo, hi = mesh.cell_box(mesh.active[cell])
        axes = []
        for t in range(mesh.dim):
            if t == axis:
                axes.append(np.array([hi[t] if side > 0 else lo[t]]))
            else:
                axes.append(lo[t] + (hi[t] - lo[t]) * ref_1d)
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, mesh.dim)


def resolve_boundaries(mesh: AmrMesh, spec: BoundarySpec) -> ResolvedBoundary:
    """
    Assign a patch to every non-periodic boundary face.

    Raises:
        ConfigError: if a wall face matches no patch, or more than one
    """
    faces: Dict[FaceKey, BoundaryPatch] = {}
    table = mesh.neighbor_table()
    solid_defaults: Dict[Tuple[int, int], BoundaryPatch] = {}
    for i, cid in enumerate(mesh.active):
        for axis in range(mesh.dim):
            for s_idx, side in enumerate((-1, 1)):
                if table[i][axis][s_idx] is not None:
                    continue
                nb = mesh.face_neighbors(cid, axis, side)[0]
                lo, hi = mesh.cell_box(cid)
                centre = 0.5 * (lo + hi)
                centre[axis] = hi[axis] if side > 0 else lo[axis]
                if nb.solid:
                    candidates = [p for p in spec.patches if p.solid and p.axis == axis and p.contains(centre)]
                    if not candidates:
                        key = (axis, side)
                        if key not in solid_defaults:
                            solid_defaults[key] = BoundaryPatch(spec.solid_default, axis, side, name="solid")
                        candidates = [solid_defaults[key]]
                else:
                    candidates = [
                        p for p in spec.patches if not p.solid and p.axis == axis and p.side == side and p.contains(centre)
                    ]
                if not candidates:
                    raise ConfigError(f"Boundary face at {centre.tolist()} (axis {axis}, side {side:+d}) has no condition")
                if len(candidates) > 1:
                    names = ", ".join(p.name for p in candidates)
                    raise ConfigError(f"Boundary face at {centre.tolist()} is covered by several patches: {names}")
                faces[(i, axis, side)] = candidates[0]
    logger.debug("Resolved %d boundary faces", len(faces))
    return ResolvedBoundary(mesh, spec, faces)


def ghost_velocity(patch: BoundaryPatch, interior: np.ndarray, points: np.ndarray, t: float) -> np.ndarray:
    """
    Exterior velocity state used by the convective flux at a boundary face.

    Walls and inflow give the prescribed value, slip walls mirror the normal
    component, pressure outlets copy the interior state.
    """
    dim = interior.shape[1]
    if patch.kind == PRESSURE:
        return interior.copy()
    if patch.kind == SLIP:
        ghost = interior.copy()
        ghost[:, patch.axis] = -interior[:, patch.axis]
        return ghost
    return patch.velocity(points, t, dim)
