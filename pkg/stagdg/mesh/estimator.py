"""
Refinement estimator chi and the indicator quantities it is evaluated on.

chi compares second differences of the indicator with first differences
plus an epsilon-weighted floor, per axis, using element means of the
indicator and of its face neighbours::

    chi = sqrt( sum_k (d2_k Phi)^2 /
                sum_k ((|Phi+ - Phi|/h+ + |Phi - Phi-|/h-)/hbar + eps (|Phi+| + 2|Phi| + |Phi-|)/hbar^2)^2 )

Mixed second derivatives are not included (they need corner neighbours,
which a cell-by-cell tree does not index). A missing neighbour on a wall is
replaced by a linearly extrapolated ghost, so the wall side contributes no
curvature. chi lies in [0, 1].
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from .amr import AmrMesh, NeighborEntry
from .fields import DofField, broken_derivative, cell_means

logger = logging.getLogger(__name__)

INDICATORS = ("velocity_magnitude", "vorticity_magnitude", "pressure", "kinetic_energy")

DEFAULT_EPSILON = 0.01


def _side(
    entries: Optional[List[NeighborEntry]], means: np.ndarray, widths: np.ndarray, axis: int
) -> Optional[tuple]:
    if entries is None:
        return None
    idx = [e.index for e in entries]
    return float(np.mean(means[idx])), float(np.mean(widths[idx, axis]))


def _chi_cell(i: int, means: np.ndarray, widths: np.ndarray, table: List, epsilon: float) -> float:
    phi = float(means[i])
    num = 0.0
    den = 0.0
    for axis, (lo_entries, hi_entries) in enumerate(table[i]):
        h = float(widths[i, axis])
        lo = _side(lo_entries, means, widths, axis)
        hi = _side(hi_entries, means, widths, axis)
        if lo is None and hi is None:
            continue
        if lo is None:
            lo = (2.0 * phi - hi[0], hi[1])
        if hi is None:
            hi = (2.0 * phi - lo[0], lo[1])
        h_p = 0.5 * (h + hi[1])
        h_m = 0.5 * (h + lo[1])
        hbar = 0.5 * (h_p + h_m)
        d_p = (hi[0] - phi) / h_p
        d_m = (phi - lo[0]) / h_m
        num += ((d_p - d_m) / hbar) ** 2
        floor = epsilon * (abs(hi[0]) + 2.0 * abs(phi) + abs(lo[0])) / hbar**2
        den += ((abs(hi[0] - phi) / h_p + abs(phi - lo[0]) / h_m) / hbar + floor) ** 2
    if den <= 0.0:
        return 0.0
    return float(np.sqrt(num / den))


def chi_values(mesh: AmrMesh, field: DofField, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """chi for every active cell, in active order."""
    if field.attachment != "main":
        raise ValueError(f"Estimator needs a main-mesh field, got {field.attachment}")
    means = cell_means(field.blocks, field.degree)
    _, widths = mesh.active_boxes()
    table = mesh.neighbor_table()
    return np.array([_chi_cell(i, means, widths, table, epsilon) for i in range(mesh.n_active)])


def chi_estimator(mesh: AmrMesh, field: DofField, cell: int, epsilon: float = DEFAULT_EPSILON) -> float:
    """chi of one active cell (by cell id)."""
    means = cell_means(field.blocks, field.degree)
    _, widths = mesh.active_boxes()
    return _chi_cell(mesh.active_index[cell], means, widths, mesh.neighbor_table(), epsilon)


def indicator_field(
    kind: str,
    mesh: AmrMesh,
    degree: int,
    velocity: Sequence[np.ndarray],
    pressure: Optional[np.ndarray] = None,
) -> DofField:
    """
    Build the indicator Phi on the main mesh from collocated velocity and pressure.

    Vorticity uses element-wise derivatives of the collocated velocity.
    """
    if kind == "velocity_magnitude":
        values = np.sqrt(sum(v * v for v in velocity))
    elif kind == "kinetic_energy":
        values = 0.5 * sum(v * v for v in velocity)
    elif kind == "pressure":
        if pressure is None:
            raise ValueError("Pressure indicator requested without a pressure field")
        values = pressure
    elif kind == "vorticity_magnitude":
        values = np.sqrt(sum(w * w for w in vorticity(mesh, degree, velocity)))
    else:
        raise ValueError(f"Unknown indicator {kind!r}; expected one of {INDICATORS}")
    return DofField(kind, "main", degree, np.asarray(values))


def vorticity(mesh: AmrMesh, degree: int, velocity: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Broken curl of a collocated velocity: [w_z] in 2D, [w_x, w_y, w_z] in 3D."""
    _, widths = mesh.active_boxes()

    def d(i: int, axis: int) -> np.ndarray:
        return broken_derivative(velocity[i], widths, degree, axis)

    if mesh.dim == 2:
        return [d(1, 0) - d(0, 1)]
    if mesh.dim == 3:
        return [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
    raise ValueError("Vorticity needs a 2D or 3D mesh")
