"""
Lid-driven cavity on [-0.5, 0.5]^d.

The lid y = 0.5 moves with v = (1, 0, 0); every other wall is no-slip and
the pressure is fixed only up to a constant. Re = 1 / nu.
"""

import logging
from typing import Dict, Optional

import numpy as np

from ..config import AdaptSettings, CaseConfig, MeshSettings, OutputSettings, TimeSettings
from ..diagnostics import DiagnosticsLog, Profile, evaluate_field, extract_profile
from ..errors import ConfigError
from ..ns.boundary import NO_SLIP, VELOCITY, BoundaryPatch, BoundarySpec
from ..ns.solver import NavierStokesSolver, SolverState
from ..reference import ghia_centerlines
from . import BaseCase, CaseResult

logger = logging.getLogger(__name__)

# level-0 cells per axis by Reynolds number in 2D
CELLS_2D = {100: 6, 400: 6, 1000: 6, 3200: 16}


def lid_boundary(dim: int) -> BoundarySpec:
    spec = BoundarySpec()
    lid = np.zeros(dim)
    lid[0] = 1.0
    for axis in range(dim):
        for side in (-1, 1):
            if axis == 1 and side == 1:
                spec.add(BoundaryPatch(VELOCITY, axis, side, value=lid.tolist(), name="lid"))
            else:
                spec.add(BoundaryPatch(NO_SLIP, axis, side))
    return spec


def centerline_profiles(solver: NavierStokesSolver, state: SolverState, samples: int = 129) -> Dict[str, Profile]:
    """u along the vertical centreline and v along the horizontal one."""
    mesh = state.mesh
    u = solver.collocated(state)
    centre = mesh.origin + 0.5 * mesh.length
    lo, hi = mesh.origin, mesh.origin + mesh.length

    def line(axis: int):
        a, b = centre.copy(), centre.copy()
        a[axis], b[axis] = lo[axis], hi[axis]
        return a, b

    profiles = {}
    a, b = line(1)
    profiles["u_vertical"] = extract_profile(mesh, state.degree, u[0], a, b, samples)
    a, b = line(0)
    profiles["v_horizontal"] = extract_profile(mesh, state.degree, u[1], a, b, samples)
    return profiles


def ghia_deviation(solver: NavierStokesSolver, state: SolverState, re: int) -> Optional[Dict[str, float]]:
    """Largest absolute deviation from the interior Ghia points, or None without a table."""
    try:
        ref = ghia_centerlines(re)
    except ConfigError:
        return None
    mesh = state.mesh
    u = solver.collocated(state)
    centre = mesh.origin + 0.5 * mesh.length

    def along(component: int, axis: int):
        def fn(s: np.ndarray) -> np.ndarray:
            points = np.tile(centre, (len(s), 1))
            # reference coordinates live on [0, 1]
            points[:, axis] = mesh.origin[axis] + s * mesh.length[axis]
            return evaluate_field(mesh, state.degree, u[component], points)

        return fn

    return {
        "ghia_u_max_deviation": ref["u"].interior().max_deviation(along(0, 1)),
        "ghia_v_max_deviation": ref["v"].interior().max_deviation(along(1, 0)),
    }


class Cavity2D(BaseCase):
    """2D lid-driven cavity, compared with Ghia et al."""

    @property
    def name(self) -> str:
        return "cavity_2d"

    @property
    def description(self) -> str:
        return "2D lid-driven cavity, Re 100-3200, centreline profiles against Ghia et al."

    def config_for(self, re: int) -> CaseConfig:
        """Default setup at Reynolds number ``re`` (16^2 cells from Re = 3200 on)."""
        config = self.default_config()
        cells = CELLS_2D.get(re, 16 if re >= 3200 else 6)
        return config.with_overrides(**{"params": {"Re": float(re)}, "mesh.counts": [cells, cells]})

    def default_config(self) -> CaseConfig:
        return CaseConfig(
            case=self.name,
            degree=4,
            params={"Re": 100.0},
            mesh=MeshSettings(
                extent=[(-0.5, 0.5), (-0.5, 0.5)],
                counts=[6, 6],
                refine_factor=3,
                max_level=1,
                periodic=[False, False],
            ),
            adapt=AdaptSettings(indicator="velocity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=100),
            time=TimeSettings(cfl=0.5, t_end=30.0, theta=0.5, dt_max=1e-2),
            output=OutputSettings(out="runs/cavity_2d", dump_every=1000),
        )

    def default_boundary(self, config: CaseConfig) -> BoundarySpec:
        return lid_boundary(config.dim)

    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        return solver.new_state()

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        result = CaseResult(profiles=centerline_profiles(solver, state))
        re = config.params.get("Re")
        if re is not None and float(re).is_integer():
            deviation = ghia_deviation(solver, state, int(re))
            if deviation is not None:
                result.records.update(deviation)
                logger.info("Ghia deviation: u %.4f, v %.4f", *deviation.values())
        return result


class Cavity3D(Cavity2D):
    """3D lid-driven cavity; centreline profiles only."""

    @property
    def name(self) -> str:
        return "cavity_3d"

    @property
    def description(self) -> str:
        return "3D lid-driven cavity, Re 100 and 1000, centreline profiles"

    def config_for(self, re: int) -> CaseConfig:
        return self.default_config().with_overrides(params={"Re": float(re)})

    def default_config(self) -> CaseConfig:
        return CaseConfig(
            case=self.name,
            degree=4,
            params={"Re": 100.0},
            mesh=MeshSettings(
                extent=[(-0.5, 0.5)] * 3,
                counts=[8, 8, 8],
                refine_factor=2,
                max_level=1,
                periodic=[False, False, False],
            ),
            adapt=AdaptSettings(indicator="velocity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=100),
            time=TimeSettings(cfl=0.5, t_end=20.0, theta=0.5, dt_max=1e-2),
            output=OutputSettings(out="runs/cavity_3d", dump_every=1000),
        )

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        return CaseResult(profiles=centerline_profiles(solver, state))
