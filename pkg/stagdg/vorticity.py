"""
Divergence-free initial velocity from a prescribed vorticity field.

On a periodic box the vector potential A with v = curl A and div A = 0
satisfies -lap A = omega. Each component is obtained from the discrete
pressure operator, H A_k = M omega_k, the broken curl of A gives a
collocated velocity, and pi* plus one discrete projection put it on the dual
meshes as an exactly solenoidal field.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .linsolve import cg_solve, require_converged
from .mesh.fields import broken_derivative, cell_means, interpolate
from .ns.solver import NavierStokesSolver, SolverState

logger = logging.getLogger(__name__)

# Relative size of div(omega) above which the prescribed field is reported
SOLENOIDAL_WARN = 1e-2


@dataclass
class VortexRing:
    """Ring with a Gaussian core: |omega| = omega0 exp(-(s/a)^2), s the distance to the core line."""

    center: Sequence[float]
    radius: float
    core: float
    omega0: float
    axis: Sequence[float] = (0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        if self.radius <= 0 or self.core <= 0:
            raise ConfigError(f"Ring radius and core must be positive, got R={self.radius}, a={self.core}")
        norm = float(np.linalg.norm(self.axis))
        if norm == 0.0:
            raise ConfigError("Ring axis must be a non-zero vector")
        self.axis = tuple(float(a) / norm for a in self.axis)

    @property
    def circulation(self) -> float:
        """gamma = pi omega0 a^2."""
        return float(np.pi * self.omega0 * self.core**2)


@dataclass
class VorticitySpec:
    """Either a list of rings (3D) or an analytic function points -> omega."""

    rings: List[VortexRing] = field(default_factory=list)
    function: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if not self.rings and self.function is None:
            raise ConfigError("A vorticity specification needs rings or a function")


def nu_from_circulation_reynolds(rings: Sequence[VortexRing], re_gamma: float) -> float:
    """nu = gamma / Re_gamma with the circulation of the first ring."""
    return rings[0].circulation / re_gamma


def ring_vorticity(
    points: np.ndarray,
    ring: VortexRing,
    length: Optional[np.ndarray] = None,
    periodic: Optional[Sequence[bool]] = None,
) -> np.ndarray:
    """Vorticity vectors (m, 3) of one ring, using the minimum image on periodic axes."""
    rel = points - np.asarray(ring.center, dtype=float)
    if length is not None and periodic is not None:
        for a, p in enumerate(periodic):
            if p:
                rel[:, a] -= length[a] * np.round(rel[:, a] / length[a])
    e = np.asarray(ring.axis, dtype=float)
    z = rel @ e
    in_plane = rel - np.outer(z, e)
    rho = np.linalg.norm(in_plane, axis=1)
    s2 = (rho - ring.radius) ** 2 + z**2
    magnitude = ring.omega0 * np.exp(-s2 / ring.core**2)
    safe = np.where(rho > 0.0, rho, 1.0)
    direction = np.cross(np.broadcast_to(e, in_plane.shape), in_plane / safe[:, None])
    direction[rho == 0.0] = 0.0
    return magnitude[:, None] * direction


def vorticity_function(spec: VorticitySpec, length: np.ndarray, periodic: Sequence[bool]) -> Callable:
    if spec.function is not None:
        return spec.function

    def omega(points: np.ndarray) -> np.ndarray:
        total = np.zeros((len(points), 3))
        for ring in spec.rings:
            total += ring_vorticity(points, ring, length, periodic)
        return total

    return omega


def broken_curl(potential: Sequence[np.ndarray], widths: np.ndarray, degree: int) -> List[np.ndarray]:
    """Element-wise curl: 2D takes [A_z] and returns (dA_z/dy, -dA_z/dx)."""

    def d(i: int, axis: int) -> np.ndarray:
        return broken_derivative(potential[i], widths, degree, axis)

    if len(potential) == 1:
        return [d(0, 1), -d(0, 0)]
    return [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]


def _check_solenoidal(omega: Sequence[np.ndarray], widths: np.ndarray, degree: int) -> float:
    div = sum(broken_derivative(w, widths, degree, k) for k, w in enumerate(omega))
    scale = max(float(np.max(np.abs(np.stack(omega)))), 1e-300)
    rel = float(np.max(np.abs(cell_means(div, degree)))) * float(np.min(widths)) / scale
    return rel


def velocity_from_vorticity(solver: NavierStokesSolver, spec: VorticitySpec) -> SolverState:
    """
    Solenoidal dual velocities whose curl is the prescribed vorticity.

    Raises:
        ConfigError: if the mesh is not periodic in every direction
    """
    mesh = solver.mesh
    if not mesh.fully_periodic():
        raise ConfigError("Velocity from vorticity needs a fully periodic domain")
    solver.ensure_operators()
    degree = solver.degree
    lo, widths = mesh.active_boxes()
    omega_fn = vorticity_function(spec, mesh.length, mesh.periodic)
    if mesh.dim == 2:
        components = [2]
    else:
        components = [0, 1, 2]

    def component(c: int) -> Callable[[np.ndarray], np.ndarray]:
        def fn(x: np.ndarray) -> np.ndarray:
            values = np.asarray(omega_fn(x))
            return values if values.ndim == 1 else values[:, c]

        return fn

    omega = [interpolate(component(c), lo, widths, degree) for c in components]
    if mesh.dim == 3:
        rel = _check_solenoidal(omega, widths, degree)
        if rel > SOLENOIDAL_WARN:
            logger.warning("Prescribed vorticity is not solenoidal (relative divergence %.2e)", rel)

    mass = solver.ops.cell_mass
    potential = []
    for c, w in zip(components, omega):
        w = w - float(np.sum(mass * w)) / float(np.sum(mass))
        a, report = cg_solve(
            solver.pressure_laplacian.apply,
            mass * w,
            tol=solver.tol_pressure,
            max_iter=solver.max_iter,
            nullspace=True,
            reorth_every=solver.reorth_every,
            kernel=solver.pressure_kernel,
        )
        require_converged(report, f"Vector potential (component {c})", solver.accept_max_iter)
        logger.debug("Vector potential %d: %s", c, report.summary())
        potential.append(a)

    collocated = broken_curl(potential, widths, degree)
    state = solver.new_state()
    state.velocity = solver.ops.to_dual(collocated)
    solver.project(state)
    logger.info("Velocity initialised from vorticity (%d rings)", len(spec.rings))
    return state
