"""
Semi-implicit staggered DG time step for the incompressible Navier-Stokes equations.

One step, from dual velocities v^n and pressure p^n:

1. collocate: U = pi(v^n) on the main mesh
2. convection: Fv = U + dt M^-1 (volume - surface) with the Rusanov flux
3. viscosity: (M + dt nu H_i) V_i = M Fv_i - dt nu D_i^T M*^-1 g_i for every component
4. back to the duals: v* = v^n + pi*(V - U)
5. pressure: H p^(n+theta) = -div(v*)/dt - D^T M*^-1 g_p, then
   v^(n+1) = v* - dt M*^-1 (D p^(n+theta) + g_p)

The pressure operator H = sum_k D_k^T M*_k^-1 D_k is the exact Schur
complement of the discrete continuity constraint, so v^(n+1) is discretely
solenoidal up to the CG tolerance.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError
from ..linsolve import DEFAULT_PRESSURE_TOL, DEFAULT_VISCOUS_TOL, REORTH_EVERY, CgReport, cg_solve, require_converged
from ..mesh.amr import AmrMesh, RemeshReport, adapt
from ..mesh.estimator import DEFAULT_EPSILON, chi_values, indicator_field
from ..mesh.fields import DofField, interpolate
from ..mesh.staggered import DualMesh, build_duals
from ..operators import Gradient, Laplacian, OperatorSet, divergence
from .boundary import PRESSURE, BoundarySpec, ResolvedBoundary, resolve_boundaries
from .convection import ConvectionOperator

logger = logging.getLogger(__name__)

IMPLICIT = "implicit"
EXPLICIT = "explicit"
INCREMENTAL = "incremental"
PROJECTION = "projection"


@dataclass
class SolverState:
    """Pressure on the main mesh, one velocity component per dual mesh, and the clock."""

    mesh: AmrMesh
    degree: int
    pressure: np.ndarray
    velocity: List[np.ndarray]
    t: float = 0.0
    dt: float = 0.0
    theta: float = 0.5
    nu: float = 0.0
    step: int = 0

    def __post_init__(self) -> None:
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigError(f"Implicitness factor theta must lie in [0.5, 1], got {self.theta}")
        if len(self.velocity) != self.mesh.dim:
            raise ValueError(f"Need {self.mesh.dim} velocity components, got {len(self.velocity)}")

    def copy(self) -> "SolverState":
        return SolverState(
            self.mesh,
            self.degree,
            self.pressure.copy(),
            [v.copy() for v in self.velocity],
            self.t,
            self.dt,
            self.theta,
            self.nu,
            self.step,
        )


@dataclass
class StepReport:
    """What one step did; the runner turns these into diagnostics rows."""

    step: int
    t: float
    dt: float
    kinetic_energy: float
    max_velocity: float
    continuity_residual: float
    pressure_cg: CgReport
    viscous_cg: List[CgReport] = field(default_factory=list)

    @property
    def viscous_iterations(self) -> int:
        return sum(r.iterations for r in self.viscous_cg)


class NavierStokesSolver:
    """
    Time integrator bound to one mesh and one boundary specification.

    Operators are rebuilt lazily whenever the mesh version changes (after
    adaptation or on restart).
    """

    def __init__(
        self,
        mesh: AmrMesh,
        degree: int,
        boundary: Optional[BoundarySpec] = None,
        nu: float = 0.0,
        theta: float = 0.5,
        cfl: float = 0.5,
        dt_max: float = 1e-1,
        viscosity: str = IMPLICIT,
        dual_update: str = INCREMENTAL,
        tol_pressure: float = DEFAULT_PRESSURE_TOL,
        tol_viscous: float = DEFAULT_VISCOUS_TOL,
        max_iter: int = 5000,
        reorth_every: int = REORTH_EVERY,
        accept_max_iter: bool = False,
    ):
        if viscosity not in (IMPLICIT, EXPLICIT):
            raise ConfigError(f"Viscosity mode must be {IMPLICIT!r} or {EXPLICIT!r}, got {viscosity!r}")
        if dual_update not in (INCREMENTAL, PROJECTION):
            raise ConfigError(f"Dual update must be {INCREMENTAL!r} or {PROJECTION!r}, got {dual_update!r}")
        if not all(mesh.periodic) and boundary is None:
            raise ConfigError("A boundary specification is required for a mesh that is not fully periodic")
        self.mesh = mesh
        self.degree = degree
        self.spec = boundary or BoundarySpec()
        self.nu = nu
        self.theta = theta
        self.cfl = cfl
        self.dt_max = dt_max
        self.viscosity = viscosity
        self.dual_update = dual_update
        self.tol_pressure = tol_pressure
        self.tol_viscous = tol_viscous
        self.max_iter = max_iter
        self.reorth_every = reorth_every
        self.accept_max_iter = accept_max_iter
        self._version = -1
        self.ensure_operators()

    # ------------------------------------------------------------------
    # Operator cache

    def ensure_operators(self) -> None:
        """(Re)build duals, operators, boundary lookups and face tables for the current mesh."""
        if self._version == self.mesh.version:
            return
        mesh = self.mesh
        self.duals: List[DualMesh] = build_duals(mesh)
        self.ops = OperatorSet(mesh, self.duals, self.degree)
        self.boundary: ResolvedBoundary = resolve_boundaries(mesh, self.spec)
        self.convection = ConvectionOperator(mesh, self.degree, self.boundary)

        self._bnd_elements: List[np.ndarray] = []
        self._bnd_patches: List[list] = []
        self._bnd_points: List[np.ndarray] = []
        for k, ops in enumerate(self.ops.axes):
            elems = ops.boundary_elements()
            patches = []
            for m in elems:
                e = self.duals[k].elements[int(m)]
                cell = e.right if e.boundary_side < 0 else e.left
                patches.append(self.boundary.patch(cell, k, e.boundary_side))
            self._bnd_elements.append(elems)
            self._bnd_patches.append(patches)
            self._bnd_points.append(ops.boundary_face_points(elems))

        self.pressure_gradients: List[Gradient] = [
            ops.gradient(self._mask(k, lambda p: p.kind == PRESSURE)) for k, ops in enumerate(self.ops.axes)
        ]
        self.pressure_laplacian = Laplacian(self.pressure_gradients)
        self.viscous_gradients: List[List[Gradient]] = []
        for i in range(mesh.dim):
            self.viscous_gradients.append(
                [ops.gradient(self._mask(k, lambda p, i=i: p.dirichlet_for(i))) for k, ops in enumerate(self.ops.axes)]
            )
        self.viscous_laplacians = [Laplacian(g) for g in self.viscous_gradients]
        self.pressure_nullspace = not self.boundary.has_pressure_outlet
        self.pressure_kernel: Optional[np.ndarray] = None
        if self.pressure_nullspace:
            self.pressure_kernel = self.pressure_laplacian.kernel_basis()
            logger.debug("Pressure kernel dimension %d", len(self.pressure_kernel))
        self._version = mesh.version
        logger.debug("Operators rebuilt for %s", mesh.describe())

    def _mask(self, k: int, predicate: Callable) -> np.ndarray:
        mask = np.zeros(self.ops.axes[k].n_duals, dtype=bool)
        for m, p in zip(self._bnd_elements[k], self._bnd_patches[k]):
            mask[m] = predicate(p)
        return mask

    def _select(self, k: int, predicate: Callable) -> np.ndarray:
        return np.array([predicate(p) for p in self._bnd_patches[k]], dtype=bool).reshape(-1)

    # ------------------------------------------------------------------
    # Boundary data

    def _boundary_values(
        self, k: int, predicate: Callable, evaluate: Callable[[object, np.ndarray], np.ndarray]
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Boundary elements of dual mesh k selected by ``predicate`` and ``evaluate(patch, points)`` on each."""
        sel = self._select(k, predicate)
        elems = self._bnd_elements[k][sel]
        points = self._bnd_points[k][sel]
        n_face = points.shape[1]
        values = np.zeros((len(elems), n_face))
        for row, (patch, x) in enumerate(zip((p for p, s in zip(self._bnd_patches[k], sel) if s), points)):
            values[row] = evaluate(patch, x)
        return elems, values

    def pressure_lift(self, t: float) -> List[np.ndarray]:
        """Known part of D p from prescribed outlet pressures, per dual mesh."""
        out = []
        for k, ops in enumerate(self.ops.axes):
            elems, values = self._boundary_values(k, lambda p: p.kind == PRESSURE, lambda p, x: p.pressure(x, t))
            out.append(ops.boundary_lift(elems, values))
        return out

    def velocity_lift(self, component: int, t: float) -> List[np.ndarray]:
        """Known part of D u_i from Dirichlet velocity values, per dual mesh."""
        out = []
        dim = self.mesh.dim
        for k, ops in enumerate(self.ops.axes):
            elems, values = self._boundary_values(
                k,
                lambda p: p.dirichlet_for(component),
                lambda p, x: p.velocity(x, t, dim)[:, component],
            )
            out.append(ops.boundary_lift(elems, values))
        return out

    def boundary_flux(self, t: float) -> np.ndarray:
        """Prescribed normal flux through walls and inflows, on the main mesh."""
        total = self.ops.axes[0].zeros_main()
        dim = self.mesh.dim
        for k, ops in enumerate(self.ops.axes):
            elems, values = self._boundary_values(
                k, lambda p: p.kind != PRESSURE, lambda p, x, k=k: p.velocity(x, t, dim)[:, k]
            )
            total += ops.boundary_flux(elems, values)
        return total

    # ------------------------------------------------------------------
    # State helpers

    def new_state(
        self,
        velocity: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        pressure: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        t: float = 0.0,
    ) -> SolverState:
        """
        State with nodal interpolants of analytic fields.

        ``velocity`` maps points (m, d) to (m, d); ``pressure`` maps points to (m,).
        """
        self.ensure_operators()
        lo, widths = self.mesh.active_boxes()
        if pressure is None:
            p = self.ops.axes[0].zeros_main()
        else:
            p = interpolate(pressure, lo, widths, self.degree)
        vel = []
        for k, dual in enumerate(self.duals):
            if velocity is None:
                vel.append(self.ops.axes[k].zeros_dual())
            else:
                vel.append(interpolate(lambda x, k=k: velocity(x)[:, k], dual.lo, dual.widths, self.degree))
        return SolverState(self.mesh, self.degree, p, vel, t=t, theta=self.theta, nu=self.nu)

    def collocated(self, state: SolverState) -> List[np.ndarray]:
        """pi of every dual velocity component onto the main mesh."""
        self.ensure_operators()
        return self.ops.to_main(state.velocity)

    def divergence(self, velocity: Sequence[np.ndarray], t: float) -> np.ndarray:
        return divergence(self.pressure_gradients, velocity, self.boundary_flux(t))

    def flux_scale(self, velocity: Sequence[np.ndarray], t: float) -> float:
        """Size of the individual contributions to the continuity functional."""
        scale = sum(g.transpose_magnitude(v) for g, v in zip(self.pressure_gradients, velocity))
        return scale + float(np.linalg.norm(self.boundary_flux(t)))

    def continuity_residual(self, velocity: Sequence[np.ndarray], t: float) -> float:
        """||div v|| relative to the size of the individual flux contributions."""
        div = self.divergence(velocity, t)
        scale = self.flux_scale(velocity, t)
        norm = float(np.linalg.norm(div))
        return norm / scale if scale > 0.0 else norm

    def kinetic_energy(self, state: SolverState) -> float:
        """Domain-averaged kinetic energy of the collocated velocity."""
        u = self.collocated(state)
        energy = 0.5 * sum(float(np.sum(self.ops.cell_mass * c * c)) for c in u)
        return energy / self.mesh.domain_volume()

    def max_velocity(self, state: SolverState) -> float:
        u = self.collocated(state)
        return float(np.sqrt(np.max(sum(c * c for c in u)))) if u[0].size else 0.0

    # ------------------------------------------------------------------
    # The step

    def compute_dt(self, state: SolverState, cfl: Optional[float] = None) -> float:
        """
        CFL time step.

        Implicit viscosity: dt = CFL / ((2N+1) sum_k |u_k|max / dx_k). Explicit
        viscosity adds (2N+1)^2 sum_k 2 nu / dx_k^2 to the denominator.
        """
        cfl = self.cfl if cfl is None else cfl
        n = 2 * self.degree + 1
        dx = self.mesh.min_width()
        denom = 0.0
        for k, v in enumerate(state.velocity):
            umax = float(np.max(np.abs(v))) if v.size else 0.0
            denom += n * umax / dx[k]
            if self.viscosity == EXPLICIT:
                denom += n * n * 2.0 * self.nu / dx[k] ** 2
        if denom <= 0.0:
            return self.dt_max
        return min(cfl / denom, self.dt_max)

    def convective_rhs(self, state: SolverState, collocated: Sequence[np.ndarray], dt: float) -> List[np.ndarray]:
        """Fv: the collocated velocity advanced by the explicit terms."""
        penalty = self.nu if self.viscosity == EXPLICIT else 0.0
        rhs = self.convection.rhs(collocated, state.t, penalty)
        out = []
        for i, (u, r) in enumerate(zip(collocated, rhs)):
            fv = u + dt * r / self.ops.cell_mass
            if self.viscosity == EXPLICIT and self.nu > 0.0:
                lift = self.velocity_lift(i, state.t)
                visc = self.viscous_laplacians[i].apply(u)
                for g, l in zip(self.viscous_gradients[i], lift):
                    visc += g.apply_transpose(l / g.ops.dual_mass)
                fv -= dt * self.nu * visc / self.ops.cell_mass
            out.append(fv)
        return out

    def viscous_solve(
        self, fv: Sequence[np.ndarray], dt: float, t_new: float, warm: Optional[Sequence[np.ndarray]] = None
    ) -> Tuple[List[np.ndarray], List[CgReport]]:
        """Solve (M + dt nu H_i) V_i = M Fv_i - dt nu D^T M*^-1 g_i per component."""
        if self.viscosity == EXPLICIT or self.nu == 0.0:
            return [f.copy() for f in fv], []
        mass = self.ops.cell_mass
        coef = dt * self.nu
        out, reports = [], []
        for i, f in enumerate(fv):
            lap = self.viscous_laplacians[i]
            b = mass * f
            for g, lift in zip(self.viscous_gradients[i], self.velocity_lift(i, t_new)):
                b -= coef * g.apply_transpose(lift / g.ops.dual_mass)

            def apply_a(x: np.ndarray, lap: Laplacian = lap) -> np.ndarray:
                return mass * x + coef * lap.apply(x)

            x0 = None if warm is None else warm[i]
            x, report = cg_solve(apply_a, b, x0, tol=self.tol_viscous, max_iter=self.max_iter)
            require_converged(report, f"Viscous (component {i})", self.accept_max_iter)
            out.append(x)
            reports.append(report)
        return out, reports

    def pressure_correct(
        self, v_star: Sequence[np.ndarray], p_old: np.ndarray, dt: float, t_new: float
    ) -> Tuple[np.ndarray, List[np.ndarray], CgReport]:
        """Solve for p^(n+theta) and make v* discretely divergence-free."""
        lifts = self.pressure_lift(t_new)
        b = -self.divergence(v_star, t_new) / dt
        for g, lift in zip(self.pressure_gradients, lifts):
            b -= g.apply_transpose(lift / g.ops.dual_mass)
        p, report = cg_solve(
            self.pressure_laplacian.apply,
            b,
            p_old,
            tol=self.tol_pressure,
            max_iter=self.max_iter,
            nullspace=self.pressure_nullspace,
            reorth_every=self.reorth_every,
            kernel=self.pressure_kernel,
            atol=self.tol_pressure * self.flux_scale(v_star, t_new) / dt,
        )
        require_converged(report, "Pressure", self.accept_max_iter)
        v_new = [
            v - dt * (g.apply(p) + lift) / g.ops.dual_mass for v, g, lift in zip(v_star, self.pressure_gradients, lifts)
        ]
        return p, v_new, report

    def step(self, state: SolverState, dt: Optional[float] = None) -> StepReport:
        """Advance ``state`` in place by one time step."""
        self.ensure_operators()
        dt = self.compute_dt(state) if dt is None else dt
        t_new = state.t + dt
        u = self.ops.to_main(state.velocity)
        fv = self.convective_rhs(state, u, dt)
        v_half, viscous_reports = self.viscous_solve(fv, dt, t_new, warm=u)
        if self.dual_update == INCREMENTAL:
            increments = self.ops.to_dual([a - b for a, b in zip(v_half, u)])
            v_star = [v + d for v, d in zip(state.velocity, increments)]
        else:
            v_star = self.ops.to_dual(v_half)

        p_theta, v_new, p_report = self.pressure_correct(v_star, state.pressure, dt, t_new)
        state.pressure = (p_theta - (1.0 - self.theta) * state.pressure) / self.theta
        state.velocity = v_new
        state.t = t_new
        state.dt = dt
        state.step += 1

        return StepReport(
            step=state.step,
            t=state.t,
            dt=dt,
            kinetic_energy=self.kinetic_energy(state),
            max_velocity=self.max_velocity(state),
            continuity_residual=self.continuity_residual(v_new, t_new),
            pressure_cg=p_report,
            viscous_cg=viscous_reports,
        )

    # ------------------------------------------------------------------
    # Projection and adaptation

    def project(self, state: SolverState) -> CgReport:
        """Remove the discrete divergence of the dual velocities (homogeneous pressure data)."""
        self.ensure_operators()
        b = -self.divergence(state.velocity, state.t)
        phi, report = cg_solve(
            self.pressure_laplacian.apply,
            b,
            tol=self.tol_pressure,
            max_iter=self.max_iter,
            nullspace=self.pressure_nullspace,
            reorth_every=self.reorth_every,
            kernel=self.pressure_kernel,
            atol=self.tol_pressure * self.flux_scale(state.velocity, state.t),
        )
        require_converged(report, "Projection", self.accept_max_iter)
        state.velocity = [v - g.apply(phi) / g.ops.dual_mass for v, g in zip(state.velocity, self.pressure_gradients)]
        return report

    def apply_boundaries(self, state: SolverState, spec: BoundarySpec) -> SolverState:
        """Install a new boundary specification; the state is re-projected onto it."""
        resolve_boundaries(self.mesh, spec)
        self.spec = spec
        self._version = -1
        self.ensure_operators()
        self.project(state)
        return state

    def adapt(
        self,
        state: SolverState,
        indicator: str,
        chi_refine: float,
        chi_coarsen: float,
        epsilon: float = DEFAULT_EPSILON,
    ) -> RemeshReport:
        """
        One refine/coarsen pass driven by the estimator on ``indicator``.

        Pressure and collocated velocity move to the new mesh by L2
        prolongation/averaging; the dual velocities are rebuilt with pi* and
        projected back to discrete incompressibility.
        """
        self.ensure_operators()
        u = self.ops.to_main(state.velocity)
        phi = indicator_field(indicator, self.mesh, self.degree, u, state.pressure)
        chi = chi_values(self.mesh, phi, epsilon)
        fields = [DofField("pressure", "main", self.degree, state.pressure)]
        fields += [DofField(f"u{i}", "main", self.degree, c) for i, c in enumerate(u)]
        moved, report = adapt(self.mesh, fields, chi, chi_refine, chi_coarsen)
        if not report.changed:
            return report
        self.ensure_operators()
        state.pressure = moved[0].blocks
        state.velocity = self.ops.to_dual([f.blocks for f in moved[1:]])
        self.project(state)
        return report
