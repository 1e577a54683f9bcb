"""
Wall-bounded channel flows with inflow and outflow.

- ``blasius_2d``: flat plate starting at x = 0 in [-1, 1] x [0, 0.5].
- ``backward_step_2d``: duct x in [-10, 20], height 1, with a step of
  height 0.5 at x = 0 (expansion ratio 2) modelled as a solid block.
"""

import logging
from typing import Optional

import numpy as np

from ..basis import build_basis
from ..config import AdaptSettings, CaseConfig, MeshSettings, OutputSettings, TimeSettings
from ..diagnostics import DiagnosticsLog, extract_profile, recirculation_length
from ..errors import ConfigError
from ..ns.boundary import NO_SLIP, PRESSURE, SLIP, VELOCITY, BoundaryPatch, BoundarySpec
from ..ns.solver import NavierStokesSolver, SolverState
from ..reference import blasius_velocity, load_reference_csv
from . import BaseCase, CaseResult

logger = logging.getLogger(__name__)

BLASIUS_STATIONS = (0.75, 0.80)


class Blasius2D(BaseCase):
    """Laminar boundary layer over a flat plate."""

    @property
    def name(self) -> str:
        return "blasius_2d"

    @property
    def description(self) -> str:
        return "2D laminar boundary layer over a flat plate, profiles against the Blasius solution"

    def default_config(self) -> CaseConfig:
        return CaseConfig(
            case=self.name,
            degree=4,
            nu=1e-3,
            mesh=MeshSettings(
                extent=[(-1.0, 1.0), (0.0, 0.5)],
                counts=[20, 10],
                refine_factor=3,
                max_level=1,
                periodic=[False, False],
            ),
            adapt=AdaptSettings(indicator="velocity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=50),
            time=TimeSettings(cfl=0.5, t_end=6.0, theta=0.5, dt_max=1e-2),
            output=OutputSettings(out="runs/blasius_2d", dump_every=500),
        )

    def default_boundary(self, config: CaseConfig) -> BoundarySpec:
        (x0, x1), _ = config.mesh.extent
        return BoundarySpec(
            [
                BoundaryPatch(VELOCITY, 0, -1, value=[1.0, 0.0], name="inflow"),
                BoundaryPatch(PRESSURE, 0, 1, value=0.0, name="outflow"),
                BoundaryPatch(PRESSURE, 1, 1, value=0.0, name="top"),
                BoundaryPatch(SLIP, 1, -1, region=[(x0, 0.0), (-np.inf, np.inf)], name="upstream"),
                BoundaryPatch(NO_SLIP, 1, -1, region=[(0.0, x1), (-np.inf, np.inf)], name="plate"),
            ]
        )

    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        state = solver.new_state(lambda x: np.stack([np.ones(len(x)), np.zeros(len(x))], axis=1))
        solver.project(state)
        return state

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        result = CaseResult()
        mesh = state.mesh
        u = solver.collocated(state)
        y_top = mesh.origin[1] + mesh.length[1]
        for x in BLASIUS_STATIONS:
            profile = extract_profile(mesh, state.degree, u[0], [x, 0.0], [x, y_top], samples=101)
            reference = blasius_velocity(x, profile.points[:, 1], solver.nu)
            result.profiles[f"u_x{x:.2f}"] = profile
            result.records[f"blasius_max_deviation_x{x:.2f}"] = float(np.max(np.abs(profile.values - reference)))
        return result


def wall_row_height(state: SolverState, x_from: float) -> float:
    """Height of the lowest node row of the bottom-wall cells downstream of ``x_from``."""
    lo, widths = state.mesh.active_boxes()
    floor = state.mesh.origin[1]
    on_wall = np.isclose(lo[:, 1], floor) & (lo[:, 0] >= x_from - 1e-12)
    if not np.any(on_wall):
        raise ValueError(f"No bottom-wall cells downstream of x={x_from}")
    node = float(build_basis(state.degree).nodes[0])
    return floor + float(np.min(widths[on_wall, 1])) * node


class BackwardStep2D(BaseCase):
    """
    Backward-facing step, expansion ratio 2, step height 0.5.

    Re is based on the inlet hydraulic diameter 2 h_in = 1 and the inlet
    speed 1, so nu = 1 / Re.
    """

    step_height = 0.5

    @property
    def name(self) -> str:
        return "backward_step_2d"

    @property
    def description(self) -> str:
        return "2D backward-facing step, ER = 2, reattachment length of the main recirculation"

    def default_config(self) -> CaseConfig:
        return CaseConfig(
            case=self.name,
            degree=4,
            params={"Re": 100.0},
            mesh=MeshSettings(
                extent=[(-10.0, 20.0), (0.0, 1.0)],
                counts=[72, 6],
                refine_factor=3,
                max_level=2,
                periodic=[False, False],
                solid=[[(-10.0, 0.0), (0.0, 0.5)]],
            ),
            adapt=AdaptSettings(indicator="velocity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=50),
            time=TimeSettings(cfl=0.5, t_end=60.0, theta=0.5, dt_max=5e-2),
            output=OutputSettings(out="runs/backward_step_2d", dump_every=1000),
        )

    def default_boundary(self, config: CaseConfig) -> BoundarySpec:
        return BoundarySpec(
            [
                BoundaryPatch(VELOCITY, 0, -1, value=[1.0, 0.0], name="inflow"),
                BoundaryPatch(PRESSURE, 0, 1, value=0.0, name="outflow"),
                BoundaryPatch(NO_SLIP, 1, -1, name="floor"),
                BoundaryPatch(NO_SLIP, 1, 1, name="ceiling"),
            ]
        )

    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        h = self.step_height

        def velocity(x: np.ndarray) -> np.ndarray:
            # same flow rate in the inlet channel and in the expanded duct
            u = np.where(x[:, 0] < 0.0, 1.0, h / (h + h))
            return np.stack([u, np.zeros(len(x))], axis=1)

        state = solver.new_state(velocity)
        solver.project(state)
        return state

    def reattachment(self, solver: NavierStokesSolver, state: SolverState) -> Optional[float]:
        """Reattachment point of the recirculation behind the step, None when not reattached."""
        u = solver.collocated(state)
        y = wall_row_height(state, 0.0)
        x_end = state.mesh.origin[0] + state.mesh.length[0]
        return recirculation_length(state.mesh, state.degree, u[0], 0.0, x_end, y)

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        result = CaseResult()
        x_r = self.reattachment(solver, state)
        if x_r is None:
            result.records["reattached"] = False
            logger.warning("Main recirculation did not reattach within the domain")
            return result
        result.records["reattached"] = True
        result.records["reattachment_length"] = x_r
        result.records["reattachment_length_per_step"] = x_r / self.step_height

        reference_csv = config.params.get("reference_csv")
        if reference_csv:
            try:
                curve = load_reference_csv(reference_csv)
            except ConfigError as e:
                logger.warning("Reference not used: %s", e)
            else:
                re = float(config.params.get("Re", 1.0 / solver.nu))
                expected = float(curve(np.array([re]))[0])
                result.records["reference_length"] = expected
                result.records["reference_relative_deviation"] = abs(x_r - expected) / abs(expected)
        return result
