"""
Vortex ring pairs initialised from their vorticity on periodic boxes.

- ``vortex_ring_collision_3d``: two coplanar rings in [-pi, pi]^3, centred
  at +/-(D cos 45 / 2, D cos 45 / 2, 0), D = 1.83, R = 0.491, a = 0.196,
  omega0 = 23.8, Re_gamma = 577.
- ``vortex_ring_leapfrog_3d``: two coaxial rings one radius apart in
  [-1.5, 1.5]^2 x [-4, 4], R = 0.5, a = 0.05, omega0 = 1, nu = 1e-3.
"""

from typing import List

import numpy as np

from ..config import AdaptSettings, CaseConfig, MeshSettings, OutputSettings, RingSettings, TimeSettings
from ..diagnostics import DiagnosticsLog, enstrophy
from ..errors import ConfigError
from ..mesh.estimator import vorticity
from ..mesh.fields import element_nodes
from ..ns.solver import NavierStokesSolver, SolverState
from ..vorticity import VortexRing, VorticitySpec, nu_from_circulation_reynolds, velocity_from_vorticity
from . import BaseCase, CaseResult


def rings_from_settings(settings: List[RingSettings]) -> List[VortexRing]:
    return [VortexRing(r.center, r.radius, r.core, r.omega0, r.axis) for r in settings]


def vorticity_centroid(solver: NavierStokesSolver, state: SolverState) -> np.ndarray:
    """|omega|-weighted centroid of the collocated vorticity."""
    u = solver.collocated(state)
    omega = vorticity(state.mesh, state.degree, u)
    magnitude = np.sqrt(sum(w * w for w in omega))
    weight = solver.ops.cell_mass * magnitude
    lo, widths = state.mesh.active_boxes()
    nodes = element_nodes(lo, widths, state.degree)
    total = float(np.sum(weight))
    if total == 0.0:
        return state.mesh.origin + 0.5 * state.mesh.length
    return np.array([float(np.sum(weight * nodes[..., a])) / total for a in range(state.mesh.dim)])


class _RingCase(BaseCase):
    """Shared set-up of the ring cases."""

    def rings(self, config: CaseConfig) -> List[VortexRing]:
        if not config.rings:
            raise ConfigError(f"Case {self.name} needs at least one ring")
        return rings_from_settings(config.rings)

    def viscosity(self, config: CaseConfig) -> float:
        """nu = gamma / Re_gamma when ``params["Re_gamma"]`` is set."""
        re_gamma = config.params.get("Re_gamma")
        if re_gamma is None:
            return super().viscosity(config)
        if float(re_gamma) <= 0.0:
            raise ConfigError(f"Re_gamma must be positive, got {re_gamma}")
        return nu_from_circulation_reynolds(self.rings(config), float(re_gamma))

    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        return velocity_from_vorticity(solver, VorticitySpec(rings=self.rings(config)))

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        u = solver.collocated(state)
        omega = vorticity(state.mesh, state.degree, u)
        result = CaseResult()
        result.records["max_vorticity"] = float(np.max(np.sqrt(sum(w * w for w in omega))))
        result.records["enstrophy"] = enstrophy(state.mesh, state.degree, u, solver.ops.cell_mass)
        centroid = vorticity_centroid(solver, state)
        for a, c in enumerate(centroid):
            result.records[f"vorticity_centroid_{'xyz'[a]}"] = float(c)
        return result


class VortexRingCollision3D(_RingCase):
    @property
    def name(self) -> str:
        return "vortex_ring_collision_3d"

    @property
    def description(self) -> str:
        return "Collision of two coplanar vortex rings, periodic [-pi,pi]^3, Re_gamma = 577"

    def default_config(self) -> CaseConfig:
        d = 1.83
        offset = d * np.cos(np.pi / 4.0) / 2.0
        ring = {"radius": 0.491, "core": 0.196, "omega0": 23.8, "axis": [0.0, 0.0, 1.0]}
        return CaseConfig(
            case=self.name,
            degree=4,
            params={"Re_gamma": 577.0},
            rings=[
                RingSettings(center=[offset, offset, 0.0], **ring),
                RingSettings(center=[-offset, -offset, 0.0], **ring),
            ],
            mesh=MeshSettings(
                extent=[(-np.pi, np.pi)] * 3,
                counts=[30, 30, 30],
                refine_factor=2,
                max_level=1,
                periodic=[True, True, True],
            ),
            adapt=AdaptSettings(indicator="vorticity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=10),
            time=TimeSettings(cfl=0.5, t_end=6.0, theta=0.5, dt_max=1e-2),
            output=OutputSettings(out="runs/vortex_ring_collision_3d", dump_every=100),
        )


class VortexRingLeapfrog3D(_RingCase):
    @property
    def name(self) -> str:
        return "vortex_ring_leapfrog_3d"

    @property
    def description(self) -> str:
        return "Leapfrogging coaxial vortex rings, periodic [-1.5,1.5]^2x[-4,4]"

    def default_config(self) -> CaseConfig:
        radius = 0.5
        ring = {"radius": radius, "core": 0.05, "omega0": 1.0, "axis": [0.0, 0.0, 1.0]}
        return CaseConfig(
            case=self.name,
            degree=4,
            nu=1e-3,
            rings=[
                RingSettings(center=[0.0, 0.0, -0.5 * radius], **ring),
                RingSettings(center=[0.0, 0.0, 0.5 * radius], **ring),
            ],
            mesh=MeshSettings(
                extent=[(-1.5, 1.5), (-1.5, 1.5), (-4.0, 4.0)],
                counts=[30, 30, 80],
                refine_factor=2,
                max_level=1,
                periodic=[True, True, True],
            ),
            adapt=AdaptSettings(indicator="vorticity_magnitude", chi_refine=0.2, chi_coarsen=0.05, every=10),
            time=TimeSettings(cfl=0.5, t_end=3.35, theta=0.5, dt_max=1e-2),
            output=OutputSettings(out="runs/vortex_ring_leapfrog_3d", dump_every=100),
        )
