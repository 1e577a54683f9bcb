"""
Taylor-Green vortices.

2D: the exact decaying solution on [0, 2 pi]^2, used for convergence tables
and spectral decay. 3D: the classic transition-to-turbulence initial field on
[0, 2 pi]^3, judged by its kinetic energy dissipation rate.
"""

import numpy as np

from ..config import AdaptSettings, CaseConfig, MeshSettings, OutputSettings, TimeSettings
from ..diagnostics import DiagnosticsLog
from ..ns.solver import NavierStokesSolver, SolverState
from . import BaseCase, CaseResult, ExactSolution

TWO_PI = 2.0 * np.pi


def tgv2d_velocity(points: np.ndarray, t: float, nu: float) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    decay = np.exp(-2.0 * nu * t)
    return np.stack([np.sin(x) * np.cos(y) * decay, -np.cos(x) * np.sin(y) * decay], axis=1)


def tgv2d_pressure(points: np.ndarray, t: float, nu: float) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return 0.25 * (np.cos(2.0 * x) + np.cos(2.0 * y)) * np.exp(-4.0 * nu * t)


def tgv3d_velocity(points: np.ndarray) -> np.ndarray:
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    u = np.sin(x) * np.cos(y) * np.cos(z)
    v = -np.cos(x) * np.sin(y) * np.cos(z)
    return np.stack([u, v, np.zeros_like(u)], axis=1)


def tgv3d_pressure(points: np.ndarray) -> np.ndarray:
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return (np.cos(2.0 * x) + np.cos(2.0 * y)) * (np.cos(2.0 * z) + 2.0) / 16.0


class TaylorGreen2D(BaseCase):
    """Decaying 2D Taylor-Green vortex with its exact solution."""

    @property
    def name(self) -> str:
        return "taylor_green_2d"

    @property
    def description(self) -> str:
        return "2D Taylor-Green vortex, periodic [0,2pi]^2, exact solution (convergence and spectral decay)"

    def default_config(self) -> CaseConfig:
        return CaseConfig(
            case=self.name,
            degree=3,
            nu=0.1,
            mesh=MeshSettings(
                extent=[(0.0, TWO_PI), (0.0, TWO_PI)],
                counts=[6, 6],
                refine_factor=3,
                max_level=1,
                periodic=[True, True],
            ),
            adapt=AdaptSettings(indicator="velocity_magnitude", chi_refine=0.2, chi_coarsen=0.05),
            time=TimeSettings(cfl=0.5, t_end=0.1, theta=0.5, dt_max=1e-3),
            output=OutputSettings(out="runs/taylor_green_2d"),
        )

    def exact(self, config: CaseConfig) -> ExactSolution:
        nu = self.viscosity(config)
        return ExactSolution(
            velocity=lambda x, t: tgv2d_velocity(x, t, nu),
            pressure=lambda x, t: tgv2d_pressure(x, t, nu),
        )

    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        exact = self.exact(config)
        state = solver.new_state(lambda x: exact.velocity(x, 0.0), lambda x: exact.pressure(x, 0.0))
        solver.project(state)
        return state

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        result = super().postprocess(solver, state, config, log)
        # K0 = 1/4 for the unit-amplitude field on [0, 2 pi]^2
        result.records["exact_kinetic_energy"] = 0.25 * float(np.exp(-4.0 * solver.nu * state.t))
        result.records["kinetic_energy"] = solver.kinetic_energy(state)
        return result


class TaylorGreen3D(BaseCase):
    """3D Taylor-Green vortex; Re = 1/nu with unit velocity and length."""

    @property
    def name(self) -> str:
        return "taylor_green_3d"

    @property
    def description(self) -> str:
        return "3D Taylor-Green vortex, periodic [0,2pi]^3, kinetic energy dissipation rate"

    def default_config(self) -> CaseConfig:
        return CaseConfig(
            case=self.name,
            degree=4,
            params={"Re": 800.0},
            mesh=MeshSettings(
                extent=[(0.0, TWO_PI)] * 3,
                counts=[20, 20, 20],
                refine_factor=2,
                max_level=1,
                periodic=[True, True, True],
            ),
            adapt=AdaptSettings(indicator="vorticity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=20),
            time=TimeSettings(cfl=0.5, t_end=10.0, theta=0.5, dt_max=5e-2),
            output=OutputSettings(out="runs/taylor_green_3d", dump_every=200),
        )

    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        state = solver.new_state(tgv3d_velocity, tgv3d_pressure)
        solver.project(state)
        return state

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        result = CaseResult()
        # K0 = 1/8 and eps(0) = 3 nu / 4 for the initial field
        result.records["initial_kinetic_energy"] = 0.125
        result.records["initial_dissipation_exact"] = 0.75 * solver.nu
        if len(log.rows) >= 3:
            log.fill_dissipation()
            eps = log.column("dissipation")
            t = log.column("t")
            peak = int(np.argmax(eps))
            result.records["dissipation_peak"] = float(eps[peak])
            result.records["dissipation_peak_time"] = float(t[peak])
        return result
