"""
Thin double shear layer on the periodic box [-0.5, 0.5] x [-1, 1].

    u = u0 tanh((y - 0.5) / delta)        for y > 0
    u = -u0 tanh((y + 0.5) / delta)       for y <= 0
    v = +/- v0 sin(2 pi x) exp(-(y -/+ 0.5)^2 / (2 sigma2))

Defaults: delta = 1e-2, u0 = 10, v0 = 0.5, sigma2 = 0.05, nu = 1e-4.
"""

import numpy as np

from ..config import AdaptSettings, CaseConfig, MeshSettings, OutputSettings, TimeSettings
from ..diagnostics import DiagnosticsLog, enstrophy
from ..errors import ConfigError
from ..mesh.estimator import vorticity
from ..ns.solver import NavierStokesSolver, SolverState
from . import BaseCase, CaseResult

DEFAULT_PARAMS = {"delta": 1e-2, "u0": 10.0, "v0": 0.5, "sigma2": 0.05}


def shear_layer_velocity(points: np.ndarray, delta: float, u0: float, v0: float, sigma2: float) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    upper = y > 0.0
    u = np.where(upper, u0 * np.tanh((y - 0.5) / delta), -u0 * np.tanh((y + 0.5) / delta))
    bump = np.where(upper, np.exp(-((y - 0.5) ** 2) / (2.0 * sigma2)), -np.exp(-((y + 0.5) ** 2) / (2.0 * sigma2)))
    v = v0 * np.sin(2.0 * np.pi * x) * bump
    return np.stack([u, v], axis=1)


class DoubleShearLayer2D(BaseCase):
    @property
    def name(self) -> str:
        return "double_shear_layer_2d"

    @property
    def description(self) -> str:
        return "2D thin double shear layer, periodic [-0.5,0.5]x[-1,1], vorticity-driven AMR"

    def default_config(self) -> CaseConfig:
        return CaseConfig(
            case=self.name,
            degree=4,
            nu=1e-4,
            params=dict(DEFAULT_PARAMS),
            mesh=MeshSettings(
                extent=[(-0.5, 0.5), (-1.0, 1.0)],
                counts=[20, 40],
                refine_factor=2,
                max_level=2,
                periodic=[True, True],
            ),
            adapt=AdaptSettings(indicator="vorticity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=10),
            time=TimeSettings(cfl=0.5, t_end=1.0, theta=0.5, dt_max=1e-2),
            output=OutputSettings(out="runs/double_shear_layer_2d", dump_every=100),
        )

    def layer_params(self, config: CaseConfig) -> dict:
        params = {k: float(config.params.get(k, v)) for k, v in DEFAULT_PARAMS.items()}
        if params["delta"] <= 0.0 or params["sigma2"] <= 0.0:
            raise ConfigError(f"delta and sigma2 must be positive, got {params}")
        return params

    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        params = self.layer_params(config)
        state = solver.new_state(lambda x: shear_layer_velocity(x, **params))
        solver.project(state)
        return state

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        u = solver.collocated(state)
        omega = vorticity(state.mesh, state.degree, u)[0]
        result = CaseResult()
        result.records["max_vorticity"] = float(np.max(np.abs(omega)))
        result.records["enstrophy"] = enstrophy(state.mesh, state.degree, u, solver.ops.cell_mass)
        return result
