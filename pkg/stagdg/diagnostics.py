"""
Run diagnostics: error norms, convergence orders, profiles, reattachment
length, kinetic energy dissipation, and the per-step time series written to
``diag.csv``.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .basis import build_basis, evaluate_at_nodes, evaluate_points, gauss_legendre
from .mesh.amr import ACTIVE, AmrMesh
from .mesh.estimator import vorticity

logger = logging.getLogger(__name__)

BASE_COLUMNS = [
    "step",
    "t",
    "dt",
    "kinetic_energy",
    "dissipation",
    "max_velocity",
    "continuity_residual",
    "cg_pressure_iters",
    "cg_viscous_iters",
    "active_cells",
]


# ============================================================================
# Norms and orders
# ============================================================================


@dataclass(frozen=True)
class ErrorNorms:
    l1: float
    l2: float
    linf: float

    def as_dict(self) -> Dict[str, float]:
        return {"L1": self.l1, "L2": self.l2, "Linf": self.linf}


def error_norms(
    blocks: np.ndarray,
    lo: np.ndarray,
    widths: np.ndarray,
    degree: int,
    exact: Callable[[np.ndarray], np.ndarray],
) -> ErrorNorms:
    """
    L1, L2 and Linf errors of nodal blocks against ``exact`` (points (m, d) -> (m,)).

    Integrals use N+2 Gauss points per axis, exact for polynomials of degree
    2N+3; Linf is the maximum over those points.
    """
    basis = build_basis(degree)
    q_nodes, q_weights = gauss_legendre(degree + 2)
    dim = lo.shape[1]
    numeric = evaluate_at_nodes(basis, blocks, q_nodes, dim)
    grids = np.meshgrid(*([q_nodes] * dim), indexing="ij")
    ref = np.stack(grids, axis=-1)
    shape = (lo.shape[0],) + (1,) * dim + (dim,)
    points = lo.reshape(shape) + widths.reshape(shape) * ref
    exact_values = np.asarray(exact(points.reshape(-1, dim)), dtype=float).reshape(numeric.shape)
    err = np.abs(numeric - exact_values)
    w = np.ones(())
    for _ in range(dim):
        w = np.multiply.outer(w, q_weights)
    vol = np.prod(widths, axis=1).reshape((-1,) + (1,) * dim)
    l1 = float(np.sum(err * w * vol))
    l2 = float(np.sqrt(np.sum(err * err * w * vol)))
    linf = float(np.max(err)) if err.size else 0.0
    return ErrorNorms(l1, l2, linf)


def combine_norms(parts: Sequence[ErrorNorms]) -> ErrorNorms:
    """Norms of a vector field from the norms of its components."""
    return ErrorNorms(
        l1=sum(p.l1 for p in parts),
        l2=float(np.sqrt(sum(p.l2**2 for p in parts))),
        linf=max(p.linf for p in parts),
    )


@dataclass(frozen=True)
class ConvergenceOrder:
    order: float
    saturated: bool = False


def convergence_order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> ConvergenceOrder:
    """log(e1/e2) / log(h1/h2); a zero error is reported as saturated."""
    if e_coarse <= 0.0 or e_fine <= 0.0:
        return ConvergenceOrder(float("nan"), saturated=True)
    if h_coarse == h_fine:
        raise ValueError("Mesh sizes must differ to measure an order")
    return ConvergenceOrder(float(np.log(e_coarse / e_fine) / np.log(h_coarse / h_fine)))


# ============================================================================
# Point evaluation and profiles
# ============================================================================


def locate(mesh: AmrMesh, point: Sequence[float]) -> int:
    """
    Active index of the cell containing ``point``.

    Raises:
        ValueError: if the point lies outside the domain or inside a solid block
    """
    x = np.asarray(point, dtype=float)
    rel = (x - mesh.origin) / mesh.length
    if np.any(rel < -1e-12) or np.any(rel > 1 + 1e-12):
        raise ValueError(f"Point {x.tolist()} lies outside the domain")
    level = 0
    while True:
        n = np.array(mesh.counts) * mesh.refine_factor**level
        coords = tuple(int(c) for c in np.clip(np.floor(rel * n), 0, n - 1))
        cid = mesh.lookup(level, coords)
        if cid is None:
            raise ValueError(f"Point {x.tolist()} lies inside a solid block")
        if mesh.cells[cid].status == ACTIVE:
            return mesh.active_index[cid]
        if level >= mesh.max_level:
            raise ValueError(f"No active cell contains {x.tolist()}")
        level += 1


def evaluate_field(mesh: AmrMesh, degree: int, blocks: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Point values of a main-mesh DG field (the polynomial of the containing element)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lo, widths = mesh.active_boxes()
    cells = np.array([locate(mesh, p) for p in points], dtype=np.int64)
    ref = np.clip((points - lo[cells]) / widths[cells], 0.0, 1.0)
    return evaluate_points(build_basis(degree), blocks[cells], ref)


@dataclass
class Profile:
    """Samples of a field along a segment; ``s`` is the arc length from the start."""

    s: np.ndarray
    points: np.ndarray
    values: np.ndarray

    def write_csv(self, path: Path, name: str = "value") -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            dim = self.points.shape[1]
            writer.writerow(["s"] + ["xyz"[a] for a in range(dim)] + [name])
            for s, p, v in zip(self.s, self.points, self.values):
                writer.writerow([f"{s:.10g}"] + [f"{c:.10g}" for c in p] + [f"{v:.10g}"])


def extract_profile(
    mesh: AmrMesh,
    degree: int,
    blocks: np.ndarray,
    start: Sequence[float],
    end: Sequence[float],
    samples: int = 101,
) -> Profile:
    """Evaluate a main-mesh field at ``samples`` equally spaced points from ``start`` to ``end``."""
    if samples < 2:
        raise ValueError(f"Need at least two samples, got {samples}")
    a, b = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    frac = np.linspace(0.0, 1.0, samples)
    points = a[None, :] + frac[:, None] * (b - a)[None, :]
    values = evaluate_field(mesh, degree, blocks, points)
    return Profile(frac * float(np.linalg.norm(b - a)), points, values)


def recirculation_length(
    mesh: AmrMesh,
    degree: int,
    u_blocks: np.ndarray,
    x_start: float,
    x_end: float,
    y: float,
    samples: int = 400,
) -> Optional[float]:
    """
    Downstream position where the streamwise velocity along ``y`` turns from
    negative to positive, or None when the flow does not reattach.

    ``y`` is normally the height of the first node row above the wall. The
    root is refined with Brent's method on the DG polynomial.
    """
    dim = mesh.dim

    def u_at(x: float) -> float:
        p = np.zeros(dim)
        p[0], p[1] = x, y
        if dim == 3:
            p[2] = mesh.origin[2] + 0.5 * mesh.length[2]
        return float(evaluate_field(mesh, degree, u_blocks, p[None, :])[0])

    xs = np.linspace(x_start, x_end, samples)
    values = np.array([u_at(x) for x in xs])
    seen_negative = False
    for i in range(1, len(xs)):
        if values[i - 1] < 0.0:
            seen_negative = True
        if seen_negative and values[i - 1] < 0.0 <= values[i]:
            if values[i] == 0.0:
                return float(xs[i])
            return float(brentq(u_at, xs[i - 1], xs[i], xtol=1e-12))
    return None


# ============================================================================
# Energy
# ============================================================================


def dissipation_series(t: Sequence[float], energy: Sequence[float]) -> np.ndarray:
    """epsilon = -dK/dt, centred differences inside, one-sided at the ends."""
    t_arr = np.asarray(t, dtype=float)
    k_arr = np.asarray(energy, dtype=float)
    if len(t_arr) < 3:
        raise ValueError(f"Need at least three samples for a dissipation series, got {len(t_arr)}")
    if np.any(np.diff(t_arr) <= 0.0):
        raise ValueError("Time samples must be strictly increasing")
    return -np.gradient(k_arr, t_arr, edge_order=1)


def enstrophy(mesh: AmrMesh, degree: int, collocated: Sequence[np.ndarray], cell_mass: np.ndarray) -> float:
    """Domain-averaged 1/2 |omega|^2 of the collocated velocity."""
    omega = vorticity(mesh, degree, collocated)
    total = 0.5 * sum(float(np.sum(cell_mass * w * w)) for w in omega)
    return total / mesh.domain_volume()


# ============================================================================
# Time series
# ============================================================================


@dataclass
class DiagnosticsLog:
    """Per-step rows of the time series; level columns are fixed by ``max_level``."""

    max_level: int
    rows: List[Dict[str, float]] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        return BASE_COLUMNS + [f"level_{l}" for l in range(self.max_level + 1)]

    def append(self, row: Dict[str, float]) -> None:
        if self.rows and row["t"] <= self.rows[-1]["t"]:
            raise ValueError(f"Diagnostics time must increase: {row['t']} after {self.rows[-1]['t']}")
        self.rows.append({c: row.get(c, 0.0) for c in self.columns})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def fill_dissipation(self) -> None:
        if len(self.rows) < 3:
            return
        eps = dissipation_series(self.column("t"), self.column("kinetic_energy"))
        for row, e in zip(self.rows, eps):
            row["dissipation"] = float(e)

    def write_csv(self, path: Path) -> None:
        self.fill_dissipation()
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=self.columns)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({c: _format(row[c]) for c in self.columns})

    def as_arrays(self) -> Dict[str, np.ndarray]:
        return {c: self.column(c) for c in self.columns}

    @classmethod
    def from_arrays(cls, max_level: int, arrays: Dict[str, np.ndarray]) -> "DiagnosticsLog":
        log = cls(max_level)
        n = len(arrays["t"]) if "t" in arrays else 0
        for i in range(n):
            log.rows.append({c: float(arrays[c][i]) if c in arrays else 0.0 for c in log.columns})
        return log


def _format(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))
