"""
Snapshots (VTK unstructured grids via meshio) and checkpoints (HDF5 via h5py).

Snapshot layout: every active element contributes its tensor Gauss-Legendre
nodes as points; neighbouring nodes of one element are joined into quads
(2D) or hexahedra (3D), vertices for N = 0. Elements share no points, so the
discontinuous fields are shown as they are. Point data: ``pressure``,
``velocity`` (collocated, padded to 3 components), ``level``; cell data:
``element`` (active index of the owning element).

Checkpoint layout: root attributes ``format``, ``version``, ``config``
(JSON), ``degree``; group ``mesh`` with the tree arrays and the box
parameters; group ``state`` with the clock and the dof blocks; group
``diagnostics`` with the time-series columns so far.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import h5py
import meshio
import numpy as np

from .errors import CheckpointError, MeshError
from .mesh.amr import AmrMesh
from .mesh.fields import element_nodes
from .ns.solver import SolverState

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "stagdg-checkpoint"
CHECKPOINT_VERSION = 1


# ============================================================================
# Snapshots
# ============================================================================


def _sub_cells(degree: int, dim: int) -> np.ndarray:
    """Local connectivity of the sub-cells of one element, in VTK vertex order."""
    n = degree + 1

    def idx(*ijk: int) -> int:
        return int(np.ravel_multi_index(ijk, (n,) * dim))

    cells = []
    for base in itertools.product(range(degree), repeat=dim):
        if dim == 2:
            i, j = base
            cells.append([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)])
        else:
            i, j, k = base
            cells.append(
                [
                    idx(i, j, k),
                    idx(i + 1, j, k),
                    idx(i + 1, j + 1, k),
                    idx(i, j + 1, k),
                    idx(i, j, k + 1),
                    idx(i + 1, j, k + 1),
                    idx(i + 1, j + 1, k + 1),
                    idx(i, j + 1, k + 1),
                ]
            )
    return np.array(cells, dtype=np.int64)


def snapshot_mesh(
    mesh: AmrMesh,
    degree: int,
    pressure: np.ndarray,
    velocity: Sequence[np.ndarray],
    extra: Optional[Dict[str, np.ndarray]] = None,
) -> meshio.Mesh:
    """Build the meshio object of a snapshot from main-mesh blocks."""
    dim = mesh.dim
    lo, widths = mesh.active_boxes()
    nodes = element_nodes(lo, widths, degree)
    n_el = nodes.shape[0]
    per = (degree + 1) ** dim
    points = nodes.reshape(-1, dim)
    if dim == 2:
        points = np.hstack([points, np.zeros((len(points), 1))])

    if degree == 0:
        cell_type = "vertex"
        local = np.zeros((1, 1), dtype=np.int64)
    else:
        cell_type = "quad" if dim == 2 else "hexahedron"
        local = _sub_cells(degree, dim)
    offsets = (np.arange(n_el, dtype=np.int64) * per)[:, None, None]
    connectivity = (local[None, :, :] + offsets).reshape(-1, local.shape[1])
    owner = np.repeat(np.arange(n_el), local.shape[0])

    vel = np.zeros((len(points), 3))
    for k, v in enumerate(velocity):
        vel[:, k] = v.reshape(-1)
    point_data = {
        "pressure": pressure.reshape(-1),
        "velocity": vel,
        "level": np.repeat(mesh.active_levels(), per).astype(float),
    }
    for name, values in (extra or {}).items():
        point_data[name] = values.reshape(-1)
    return meshio.Mesh(
        points=points,
        cells=[(cell_type, connectivity)],
        point_data=point_data,
        cell_data={"element": [owner]},
    )


def write_snapshot(path: Path, mesh: AmrMesh, degree: int, pressure: np.ndarray, velocity: Sequence[np.ndarray]) -> Path:
    """Write a ``.vtu`` snapshot of collocated fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    snapshot_mesh(mesh, degree, pressure, velocity).write(path)
    logger.debug("Snapshot written to %s", path)
    return path


# ============================================================================
# Checkpoints
# ============================================================================


@dataclass
class Checkpoint:
    """Everything needed to continue a run bit-exactly."""

    config: Dict[str, Any]
    mesh: AmrMesh
    degree: int
    pressure: np.ndarray
    velocity: List[np.ndarray]
    t: float
    dt: float
    step: int
    theta: float
    nu: float
    diagnostics: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_state(self) -> SolverState:
        return SolverState(
            self.mesh,
            self.degree,
            self.pressure,
            self.velocity,
            t=self.t,
            dt=self.dt,
            theta=self.theta,
            nu=self.nu,
            step=self.step,
        )


def write_checkpoint(
    path: Path,
    state: SolverState,
    config: Dict[str, Any],
    diagnostics: Optional[Dict[str, np.ndarray]] = None,
) -> Path:
    """Write an HDF5 checkpoint of ``state``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = state.mesh
    with h5py.File(path, "w") as f:
        f.attrs["format"] = CHECKPOINT_FORMAT
        f.attrs["version"] = CHECKPOINT_VERSION
        f.attrs["config"] = json.dumps(config, sort_keys=True)
        f.attrs["degree"] = state.degree

        g = f.create_group("mesh")
        g.attrs["extent"] = np.array(mesh.extent, dtype=float)
        g.attrs["counts"] = np.array(mesh.counts, dtype=np.int64)
        g.attrs["refine_factor"] = mesh.refine_factor
        g.attrs["max_level"] = mesh.max_level
        g.attrs["periodic"] = np.array(mesh.periodic, dtype=bool)
        g.attrs["solid_boxes"] = json.dumps([list(map(list, b)) for b in mesh.solid_boxes])
        for name, arr in mesh.to_arrays().items():
            g.create_dataset(name, data=arr)

        s = f.create_group("state")
        for name in ("t", "dt", "theta", "nu"):
            s.attrs[name] = float(getattr(state, name))
        s.attrs["step"] = int(state.step)
        s.create_dataset("pressure", data=state.pressure)
        for k, v in enumerate(state.velocity):
            s.create_dataset(f"velocity_{k}", data=v)

        d = f.create_group("diagnostics")
        for name, column in (diagnostics or {}).items():
            d.create_dataset(name, data=np.asarray(column, dtype=float))
    logger.info("Checkpoint written to %s (step %d, t=%.6g)", path, state.step, state.t)
    return path


def read_checkpoint(path: Path) -> Checkpoint:
    """
    Read a checkpoint written by :func:`write_checkpoint`.

    Raises:
        CheckpointError: missing file, foreign or corrupt content, or another format version
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        with h5py.File(path, "r") as f:
            if f.attrs.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError(f"{path} is not a stagdg checkpoint")
            version = int(f.attrs.get("version", -1))
            if version != CHECKPOINT_VERSION:
                raise CheckpointError(f"{path} has checkpoint version {version}, expected {CHECKPOINT_VERSION}")
            config = json.loads(f.attrs["config"])
            degree = int(f.attrs["degree"])

            g = f["mesh"]
            mesh = AmrMesh.from_arrays(
                extent=[tuple(row) for row in g.attrs["extent"]],
                counts=[int(c) for c in g.attrs["counts"]],
                refine_factor=int(g.attrs["refine_factor"]),
                max_level=int(g.attrs["max_level"]),
                periodic=[bool(p) for p in g.attrs["periodic"]],
                solid_boxes=[tuple(map(tuple, b)) for b in json.loads(g.attrs["solid_boxes"])],
                arrays={name: g[name][()] for name in ("level", "coords", "status", "parent")},
            )

            s = f["state"]
            velocity = [s[f"velocity_{k}"][()] for k in range(mesh.dim)]
            checkpoint = Checkpoint(
                config=config,
                mesh=mesh,
                degree=degree,
                pressure=s["pressure"][()],
                velocity=velocity,
                t=float(s.attrs["t"]),
                dt=float(s.attrs["dt"]),
                step=int(s.attrs["step"]),
                theta=float(s.attrs["theta"]),
                nu=float(s.attrs["nu"]),
                diagnostics={name: ds[()] for name, ds in f["diagnostics"].items()},
            )
    except CheckpointError:
        raise
    except (OSError, KeyError, ValueError, MeshError) as e:
        raise CheckpointError(f"Corrupt checkpoint {path}: {e}") from e

    if checkpoint.pressure.shape[0] != mesh.n_active:
        raise CheckpointError(
            f"Checkpoint {path}: pressure has {checkpoint.pressure.shape[0]} blocks for {mesh.n_active} cells"
        )
    return checkpoint
