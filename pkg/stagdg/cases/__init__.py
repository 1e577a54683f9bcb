"""
Benchmark cases.

A case bundles the default configuration of one test problem with the
pieces the runner cannot guess: boundary conditions, the initial state,
the exact solution where one is known, and the case-specific
post-processing (error norms, centreline profiles, reattachment length).
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ..config import BoundaryPatchSettings, CaseConfig
from ..diagnostics import DiagnosticsLog, ErrorNorms, Profile, combine_norms, error_norms
from ..errors import ConfigError
from ..mesh.amr import AmrMesh, build_uniform
from ..mesh.fields import interpolate
from ..ns.boundary import BoundaryPatch, BoundarySpec
from ..ns.solver import NavierStokesSolver, SolverState


@dataclass
class ExactSolution:
    """Analytic fields as functions of (points (m, d), t)."""

    velocity: Callable[[np.ndarray, float], np.ndarray]
    pressure: Optional[Callable[[np.ndarray, float], np.ndarray]] = None


@dataclass
class CaseResult:
    """Case-specific output written next to the time series."""

    records: Dict[str, Any] = field(default_factory=dict)
    profiles: Dict[str, Profile] = field(default_factory=dict)
    norms: Dict[str, ErrorNorms] = field(default_factory=dict)


def boundary_from_settings(patches: List[BoundaryPatchSettings]) -> BoundarySpec:
    """Boundary specification from the constant-valued patches of a case file."""
    spec = BoundarySpec()
    for p in patches:
        spec.add(BoundaryPatch(p.kind, p.axis, p.side, region=p.region, value=p.value, solid=p.solid))
    return spec


def refine_uniformly(mesh: AmrMesh, levels: int) -> AmrMesh:
    """Refine every active cell ``levels`` times."""
    for _ in range(levels):
        for cid in list(mesh.active):
            mesh.refine(cid)
    return mesh


class BaseCase(ABC):
    """Abstract base class for benchmark cases."""

    #: velocity and length scales of the Reynolds number in ``params["Re"]``
    velocity_scale: float = 1.0
    length_scale: float = 1.0

    @property
    @abstractmethod
    def name(self) -> str:
        """Registry id of this case."""
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        """One-line description shown by ``stagdg cases``."""
        pass

    @abstractmethod
    def default_config(self) -> CaseConfig:
        """Configuration with the published setup as defaults."""
        pass

    @abstractmethod
    def initial_state(self, solver: NavierStokesSolver, config: CaseConfig) -> SolverState:
        """Discretely solenoidal state at t = 0 on the solver's current mesh."""
        pass

    def default_boundary(self, config: CaseConfig) -> Optional[BoundarySpec]:
        """Boundary conditions used when the case file gives none; None for periodic boxes."""
        return None

    def boundary(self, config: CaseConfig) -> Optional[BoundarySpec]:
        if config.boundary is not None:
            return boundary_from_settings(config.boundary)
        return self.default_boundary(config)

    def viscosity(self, config: CaseConfig) -> float:
        """nu from ``params["Re"]`` when present, otherwise ``config.nu``."""
        re = config.params.get("Re")
        if re is None:
            return config.nu
        if float(re) <= 0.0:
            raise ConfigError(f"Reynolds number must be positive, got {re}")
        return self.velocity_scale * self.length_scale / float(re)

    def build_mesh(self, config: CaseConfig) -> AmrMesh:
        m = config.mesh
        mesh = build_uniform(m.extent, m.counts, m.refine_factor, m.max_level, m.periodic, m.solid or None)
        return refine_uniformly(mesh, m.initial_level)

    def build_solver(self, config: CaseConfig, mesh: AmrMesh) -> NavierStokesSolver:
        return NavierStokesSolver(
            mesh,
            config.degree,
            boundary=self.boundary(config),
            nu=self.viscosity(config),
            theta=config.time.theta,
            cfl=config.time.cfl,
            dt_max=config.time.dt_max,
            viscosity=config.time.viscosity,
            dual_update=config.time.dual_update,
            tol_pressure=config.solver.tol_pressure,
            tol_viscous=config.solver.tol_viscous,
            max_iter=config.solver.max_iter,
            reorth_every=config.solver.reorthogonalize_every,
            accept_max_iter=config.solver.accept_max_iter,
        )

    def exact(self, config: CaseConfig) -> Optional[ExactSolution]:
        return None

    def error_norms(self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig) -> Dict[str, ErrorNorms]:
        """
        Errors of the collocated velocity and of the pressure against the exact solution.

        The pressure is compared after removing the mean difference when the
        problem fixes it only up to a constant.
        """
        exact = self.exact(config)
        if exact is None:
            return {}
        lo, widths = state.mesh.active_boxes()
        u = solver.collocated(state)
        norms: Dict[str, ErrorNorms] = {}
        parts = []
        for k, comp in enumerate(u):
            n = error_norms(comp, lo, widths, state.degree, lambda x, k=k: exact.velocity(x, state.t)[:, k])
            norms["uvw"[k]] = n
            parts.append(n)
        norms["velocity"] = combine_norms(parts)
        if exact.pressure is not None:
            p = state.pressure
            if solver.pressure_nullspace:
                exact_p = exact.pressure
                p = p - _mean_offset(p, lo, widths, state.degree, solver.ops.cell_mass, lambda x: exact_p(x, state.t))
            norms["pressure"] = error_norms(p, lo, widths, state.degree, lambda x: exact.pressure(x, state.t))
        return norms

    def postprocess(
        self, solver: NavierStokesSolver, state: SolverState, config: CaseConfig, log: DiagnosticsLog
    ) -> CaseResult:
        """Case-specific results at the end of a run; error norms by default."""
        return CaseResult(norms=self.error_norms(solver, state, config))


def _mean_offset(
    blocks: np.ndarray,
    lo: np.ndarray,
    widths: np.ndarray,
    degree: int,
    mass: np.ndarray,
    exact: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Mean of (numeric - exact) over the domain, with the nodal quadrature."""
    diff = blocks - interpolate(exact, lo, widths, degree)
    return float(np.sum(mass * diff) / np.sum(mass))


class CaseRegistry:
    """Registry of the available cases, keyed by name."""

    def __init__(self):
        self._cases: Dict[str, BaseCase] = {}

    def register(self, case: BaseCase) -> None:
        """Register a case; a later registration under the same name replaces the earlier one."""
        self._cases[case.name] = case

    def get(self, name: str) -> BaseCase:
        """
        Look up a case by name.

        Raises:
            ConfigError: if no case has that name
        """
        try:
            return self._cases[name]
        except KeyError:
            raise ConfigError(f"Unknown case {name!r}; available: {', '.join(self.names())}") from None

    def get_all(self) -> List[BaseCase]:
        """Get all registered cases."""
        return list(self._cases.values())

    def names(self) -> List[str]:
        return sorted(self._cases)


# Global registry instance
_registry = CaseRegistry()


def _register_builtin(registry: CaseRegistry) -> None:
    from .cavity import Cavity2D, Cavity3D
    from .channel import BackwardStep2D, Blasius2D
    from .shear_layer import DoubleShearLayer2D
    from .taylor_green import TaylorGreen2D, TaylorGreen3D
    from .vortex_rings import VortexRingCollision3D, VortexRingLeapfrog3D

    for case in (
        TaylorGreen2D(),
        Blasius2D(),
        Cavity2D(),
        Cavity3D(),
        BackwardStep2D(),
        DoubleShearLayer2D(),
        TaylorGreen3D(),
        VortexRingCollision3D(),
        VortexRingLeapfrog3D(),
    ):
        registry.register(case)


def get_registry() -> CaseRegistry:
    """Get the global case registry, with the built-in cases registered."""
    if not _registry.names():
        _register_builtin(_registry)
    return _registry


__all__ = [
    "BaseCase",
    "CaseRegistry",
    "CaseResult",
    "ExactSolution",
    "boundary_from_settings",
    "get_registry",
    "refine_uniformly",
]
