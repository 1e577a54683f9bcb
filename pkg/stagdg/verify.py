"""
Operator property suite.

On randomly adapted meshes (2D and 3D, refinement factors 2 and 3) the
pressure operator H = sum_k D_k^T M*_k^-1 D_k must be symmetric, positive
semi-definite, annihilate constants, agree with its assembled sparse form,
and couple each cell to at most 2 d r^(d-1) + 1 cells. The dual meshes must
tile the domain.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .mesh.amr import AmrMesh, adapt, build_uniform
from .mesh.staggered import build_duals
from .operators import OperatorSet

logger = logging.getLogger(__name__)

TOLERANCE = 1e-12


@dataclass
class PropertyCheck:
    name: str
    value: float
    limit: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.limit)


@dataclass
class MeshReport:
    """All checks on one mesh."""

    label: str
    n_cells: int
    degree: int
    checks: List[PropertyCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[PropertyCheck]:
        return [c for c in self.checks if not c.passed]


def random_adapted_mesh(
    rng: np.random.Generator,
    dim: int,
    refine_factor: int,
    max_level: int,
    max_cells: int = 1000,
) -> AmrMesh:
    """Small box with random periodicity, refined at random cells up to ``max_level``."""
    high = 5 if dim == 2 else 3
    counts = [int(c) for c in rng.integers(2, high + 1, size=dim)]
    periodic = [bool(p) for p in rng.random(dim) < 0.5]
    extent = [(0.0, float(c) * (1.0 + 0.25 * a)) for a, c in enumerate(counts)]
    mesh = build_uniform(extent, counts, refine_factor, max_level, periodic)
    for _ in range(max_level):
        chi = rng.random(mesh.n_active)
        before = mesh.n_active
        _, report = adapt(mesh, [], chi, chi_ref=0.7, chi_rec=0.0)
        if mesh.n_active > max_cells:
            logger.debug("Random mesh stopped growing at %d cells", mesh.n_active)
            break
        if not report.changed or mesh.n_active == before:
            break
    return mesh


def check_operators(mesh: AmrMesh, degree: int, rng: Optional[np.random.Generator] = None) -> MeshReport:
    """Run every property check of the pressure operator on ``mesh``."""
    rng = rng or np.random.default_rng(0)
    label = (
        f"{mesh.dim}D r={mesh.refine_factor} lmax={mesh.max_level} periodic={list(mesh.periodic)} "
        f"levels={mesh.level_counts()}"
    )
    report = MeshReport(label, mesh.n_active, degree)
    duals = build_duals(mesh)
    for k, dual in enumerate(duals):
        total = float(np.sum(dual.volumes))
        report.checks.append(
            PropertyCheck(f"dual_{k}_tiling", abs(total - mesh.domain_volume()) / mesh.domain_volume(), TOLERANCE)
        )

    ops = OperatorSet(mesh, duals, degree)
    lap = ops.laplacian()
    a = lap.assemble()
    norm_a = float(spla.norm(a)) or 1.0
    report.checks.append(PropertyCheck("symmetry", float(spla.norm(a - a.T)) / norm_a, TOLERANCE))

    shape = ops.cell_mass.shape
    p = rng.standard_normal(shape)
    hp = lap.apply(p)
    quad = float(np.sum(hp * p))
    report.checks.append(PropertyCheck("semi_definite", max(0.0, -quad) / (norm_a * float(np.sum(p * p))), TOLERANCE))

    assembled = (a @ p.ravel()).reshape(shape)
    scale = float(np.linalg.norm(assembled)) or 1.0
    report.checks.append(PropertyCheck("matrix_free", float(np.linalg.norm(hp - assembled)) / scale, TOLERANCE))

    ones = np.ones(shape)
    report.checks.append(
        PropertyCheck("constant_kernel", float(np.linalg.norm(lap.apply(ones))) / (norm_a * np.sqrt(ones.size)), TOLERANCE)
    )

    bound = 2 * mesh.dim * mesh.refine_factor ** (mesh.dim - 1) + 1
    report.checks.append(PropertyCheck("stencil", float(np.max(lap.stencil_sizes())), float(bound)))
    return report


def run_verification(n_meshes: int = 10, seed: int = 0, max_degree: int = 3, max_cells: int = 1000) -> List[MeshReport]:
    """Check ``n_meshes`` random meshes cycling through 2D/3D and r = 2/3."""
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(n_meshes):
        dim = 2 if i % 2 == 0 else 3
        refine_factor = 2 if (i // 2) % 2 == 0 else 3
        max_level = 2 if dim == 2 else 1
        degree = int(rng.integers(0, max_degree + 1)) if dim == 2 else int(rng.integers(0, min(max_degree, 2) + 1))
        mesh = random_adapted_mesh(rng, dim, refine_factor, max_level, max_cells)
        report = check_operators(mesh, degree, rng)
        logger.info("%s N=%d: %s", report.label, degree, "ok" if report.passed else "FAILED")
        reports.append(report)
    return reports
