"""
Tests for the semi-implicit Navier-Stokes step, boundary conditions and convection.
"""

import numpy as np
import pytest

from stagdg.basis import build_basis, lagrange_deriv_matrix, lagrange_matrix
from stagdg.errors import ConfigError
from stagdg.mesh import build_uniform
from stagdg.mesh.fields import interpolate
from stagdg.ns import (
    EXPLICIT,
    NO_SLIP,
    PRESSURE,
    SLIP,
    VELOCITY,
    BoundaryPatch,
    BoundarySpec,
    NavierStokesSolver,
    SolverState,
    ghost_velocity,
    resolve_boundaries,
)


# =============================================================================
# Fixtures
# =============================================================================

TWO_PI = 2.0 * np.pi


def taylor_green(x):
    return np.stack([np.sin(x[:, 0]) * np.cos(x[:, 1]), -np.cos(x[:, 0]) * np.sin(x[:, 1])], axis=1)


@pytest.fixture
def periodic_mesh():
    return build_uniform([(0.0, TWO_PI)] * 2, [4, 4], refine_factor=2, max_level=1, periodic=[True, True])


@pytest.fixture
def periodic_solver(periodic_mesh):
    return NavierStokesSolver(periodic_mesh, 3, nu=0.1, dt_max=1e-2, tol_pressure=1e-12)


@pytest.fixture
def box_mesh():
    return build_uniform([(0.0, 1.0)] * 2, [3, 3], refine_factor=2, max_level=1)


# =============================================================================
# Construction
# =============================================================================

class TestConstruction:
    """Argument validation."""

    def test_boundary_required_for_walls(self, box_mesh):
        with pytest.raises(ConfigError):
            NavierStokesSolver(box_mesh, 1)

    def test_modes_validated(self, periodic_mesh):
        with pytest.raises(ConfigError):
            NavierStokesSolver(periodic_mesh, 1, viscosity="semi")
        with pytest.raises(ConfigError):
            NavierStokesSolver(periodic_mesh, 1, dual_update="lazy")

    def test_theta_range(self, periodic_solver):
        """theta outside [0.5, 1] is a configuration error."""
        state = periodic_solver.new_state()
        with pytest.raises(ConfigError):
            SolverState(state.mesh, state.degree, state.pressure, state.velocity, theta=0.4)

    def test_pressure_nullspace(self, box_mesh):
        """Only closed domains have the constant pressure mode."""
        closed = NavierStokesSolver(box_mesh, 1, BoundarySpec.closed_box(2))
        assert closed.pressure_nullspace
        spec = BoundarySpec(
            [
                BoundaryPatch(VELOCITY, 0, -1, value=[1.0, 0.0]),
                BoundaryPatch(PRESSURE, 0, 1, value=0.0),
                BoundaryPatch(NO_SLIP, 1, -1),
                BoundaryPatch(NO_SLIP, 1, 1),
            ]
        )
        channel = NavierStokesSolver(box_mesh, 1, spec)
        assert not channel.pressure_nullspace
        assert channel.pressure_laplacian.has_dirichlet


# =============================================================================
# Boundaries
# =============================================================================

class TestBoundaries:
    """Patch resolution and ghost states."""

    def test_uncovered_face(self, box_mesh):
        spec = BoundarySpec([BoundaryPatch(NO_SLIP, 0, -1), BoundaryPatch(NO_SLIP, 0, 1), BoundaryPatch(NO_SLIP, 1, -1)])
        with pytest.raises(ConfigError, match="no condition"):
            resolve_boundaries(box_mesh, spec)

    def test_overlapping_patches(self, box_mesh):
        spec = BoundarySpec.closed_box(2).add(BoundaryPatch(SLIP, 1, 1, region=[(0.0, 0.5), (-np.inf, np.inf)]))
        with pytest.raises(ConfigError, match="several patches"):
            resolve_boundaries(box_mesh, spec)

    def test_regions_split_a_wall(self, box_mesh):
        """Region limits select the faces a patch covers."""
        spec = BoundarySpec(
            [
                BoundaryPatch(NO_SLIP, 0, -1),
                BoundaryPatch(NO_SLIP, 0, 1),
                BoundaryPatch(NO_SLIP, 1, 1),
                BoundaryPatch(SLIP, 1, -1, region=[(0.0, 0.34), (-np.inf, np.inf)], name="upstream"),
                BoundaryPatch(NO_SLIP, 1, -1, region=[(0.34, 1.0), (-np.inf, np.inf)], name="plate"),
            ]
        )
        resolved = resolve_boundaries(box_mesh, spec)
        names = [resolved.patch(box_mesh.active_index[box_mesh.lookup(0, (i, 0))], 1, -1).name for i in range(3)]
        assert names == ["upstream", "plate", "plate"]

    def test_solid_default(self):
        """Faces against solid blocks fall back to no-slip."""
        mesh = build_uniform([(0.0, 2.0), (0.0, 2.0)], [2, 2], solid_boxes=[[(0.0, 1.0), (0.0, 1.0)]])
        resolved = resolve_boundaries(mesh, BoundarySpec.closed_box(2))
        patch = resolved.patch(mesh.active_index[mesh.lookup(0, (1, 0))], 0, -1)
        assert patch.kind == NO_SLIP and patch.name == "solid"

    def test_patch_validation(self):
        with pytest.raises(ConfigError):
            BoundaryPatch("outflow", 0, 1)
        with pytest.raises(ConfigError):
            BoundaryPatch(NO_SLIP, 0, 0)

    def test_patch_values(self):
        """Dirichlet components and prescribed values."""
        pts = np.zeros((3, 2))
        inflow = BoundaryPatch(VELOCITY, 0, -1, value=[2.0, 0.0])
        np.testing.assert_array_equal(inflow.velocity(pts, 0.0, 2), [[2.0, 0.0]] * 3)
        outlet = BoundaryPatch(PRESSURE, 0, 1, value=lambda x, t: x[:, 1] + t)
        np.testing.assert_array_equal(outlet.pressure(pts, 1.5), [1.5] * 3)
        slip = BoundaryPatch(SLIP, 1, -1)
        assert slip.dirichlet_for(1) and not slip.dirichlet_for(0)
        assert not outlet.dirichlet_for(0)

    def test_apply_boundaries_switches_to_outlet(self, box_mesh):
        """Installing an outlet removes the constant pressure mode and keeps the state solenoidal."""
        solver = NavierStokesSolver(box_mesh, 1, BoundarySpec.closed_box(2), tol_pressure=1e-12)
        state = solver.new_state()
        channel = BoundarySpec(
            [
                BoundaryPatch(VELOCITY, 0, -1, value=[1.0, 0.0]),
                BoundaryPatch(PRESSURE, 0, 1, value=0.0),
                BoundaryPatch(SLIP, 1, -1),
                BoundaryPatch(SLIP, 1, 1),
            ]
        )
        assert solver.apply_boundaries(state, channel) is state
        assert not solver.pressure_nullspace
        assert solver.continuity_residual(state.velocity, 0.0) < 1e-8

    def test_ghost_states(self):
        """Slip mirrors the normal component, outlets copy the interior."""
        interior = np.array([[1.0, 2.0]])
        pts = np.zeros((1, 2))
        np.testing.assert_array_equal(ghost_velocity(BoundaryPatch(SLIP, 1, -1), interior, pts, 0.0), [[1.0, -2.0]])
        np.testing.assert_array_equal(ghost_velocity(BoundaryPatch(PRESSURE, 0, 1), interior, pts, 0.0), interior)
        np.testing.assert_array_equal(ghost_velocity(BoundaryPatch(NO_SLIP, 0, 1), interior, pts, 0.0), [[0.0, 0.0]])


# =============================================================================
# Time step
# =============================================================================

class TestStep:
    """Projection, one step and the CFL rule."""

    def test_projection_is_solenoidal(self, periodic_solver):
        """After projection the continuity residual is at the solver tolerance."""
        state = periodic_solver.new_state(lambda x: np.stack([np.sin(x[:, 0]), np.cos(x[:, 0] + x[:, 1])], axis=1))
        assert periodic_solver.continuity_residual(state.velocity, 0.0) > 1e-3
        report = periodic_solver.project(state)
        assert report.converged
        assert periodic_solver.continuity_residual(state.velocity, 0.0) < 1e-8

    def test_taylor_green_energy_decay(self, periodic_solver):
        """Kinetic energy follows exp(-4 nu t) over a few steps."""
        state = periodic_solver.new_state(taylor_green)
        periodic_solver.project(state)
        e0 = periodic_solver.kinetic_energy(state)
        assert e0 == pytest.approx(0.25, rel=1e-2)
        for _ in range(5):
            report = periodic_solver.step(state, 1e-2)
            assert report.pressure_cg.converged
            assert report.continuity_residual < 1e-8
        assert state.step == 5
        assert state.t == pytest.approx(0.05)
        assert periodic_solver.kinetic_energy(state) / e0 == pytest.approx(np.exp(-4 * 0.1 * 0.05), rel=1e-2)

    @pytest.mark.parametrize("refined", [False, True])
    def test_free_stream_preserved(self, periodic_mesh, refined):
        """A uniform flow stays uniform, also across level transitions."""
        if refined:
            periodic_mesh.refine(periodic_mesh.lookup(0, (1, 2)))
        solver = NavierStokesSolver(periodic_mesh, 2, nu=0.01, tol_pressure=1e-12)
        state = solver.new_state(lambda x: np.tile([1.0, 0.5], (len(x), 1)))
        for _ in range(3):
            solver.step(state, 0.05)
        np.testing.assert_allclose(state.velocity[0], 1.0, atol=1e-9)
        np.testing.assert_allclose(state.velocity[1], 0.5, atol=1e-9)

    def test_rest_state_in_closed_box(self, box_mesh):
        """Fluid at rest with walls stays at rest."""
        solver = NavierStokesSolver(box_mesh, 2, BoundarySpec.closed_box(2), nu=0.1)
        state = solver.new_state()
        report = solver.step(state, 0.1)
        assert report.max_velocity == 0.0
        assert report.kinetic_energy == 0.0

    def test_convection_of_constant_vanishes(self, periodic_solver):
        u = [np.full(periodic_solver.ops.cell_mass.shape, c) for c in (0.3, -1.2)]
        for r in periodic_solver.convection.rhs(u, 0.0):
            np.testing.assert_allclose(r, 0.0, atol=1e-12)

    def test_compute_dt(self, periodic_solver):
        """dt = CFL / ((2N+1) sum |u|/dx), capped by dt_max."""
        state = periodic_solver.new_state()
        assert periodic_solver.compute_dt(state) == periodic_solver.dt_max
        state = periodic_solver.new_state(lambda x: np.tile([1.0, 0.0], (len(x), 1)))
        dx = TWO_PI / 4
        expected = periodic_solver.cfl / (7 * 1.0 / dx)
        assert periodic_solver.compute_dt(state, cfl=periodic_solver.cfl) == pytest.approx(min(expected, 1e-2))
        periodic_solver.dt_max = 10.0
        assert periodic_solver.compute_dt(state) == pytest.approx(expected)

    def test_compute_dt_linear(self):
        """N = 1, |u| = 1, dx = 0.05, CFL 0.9: dt = 0.9 / (3 * 20)."""
        mesh = build_uniform([(0.0, 1.0)] * 2, [20, 20], periodic=[True, True])
        solver = NavierStokesSolver(mesh, 1, cfl=0.9)
        state = solver.new_state(lambda x: np.tile([1.0, 0.0], (len(x), 1)))
        assert solver.compute_dt(state) == pytest.approx(0.015)

    def test_explicit_viscosity_restricts_dt(self, periodic_mesh):
        implicit = NavierStokesSolver(periodic_mesh, 2, nu=1.0, dt_max=10.0)
        explicit = NavierStokesSolver(periodic_mesh, 2, nu=1.0, dt_max=10.0, viscosity=EXPLICIT)
        state = implicit.new_state(taylor_green)
        assert explicit.compute_dt(state) < implicit.compute_dt(state)

    def test_state_copy_is_independent(self, periodic_solver):
        state = periodic_solver.new_state(taylor_green)
        clone = state.copy()
        clone.velocity[0][:] = 0.0
        assert np.any(state.velocity[0] != 0.0)

    def test_adapt_keeps_velocity_solenoidal(self):
        """Remeshing rebuilds the duals and re-projects the velocity."""
        # 5 cells per period: the cell means of |omega| differ, so chi is not zero everywhere
        mesh = build_uniform([(0.0, TWO_PI)] * 2, [5, 5], refine_factor=2, max_level=1, periodic=[True, True])
        solver = NavierStokesSolver(mesh, 2, nu=0.1, tol_pressure=1e-12)
        state = solver.new_state(taylor_green)
        solver.project(state)
        n_before = mesh.n_active
        report = solver.adapt(state, "vorticity_magnitude", 1e-6, 0.0)
        assert report.changed
        assert mesh.n_active > n_before
        assert state.velocity[0].shape[0] == len(solver.duals[0])
        assert solver.continuity_residual(state.velocity, 0.0) < 1e-8


# =============================================================================
# Pressure kernel
# =============================================================================

def shear_wave(x):
    """(0, sin x): divergence-free, and discretely so on periodic meshes."""
    return np.stack([np.zeros(len(x)), np.sin(x[:, 0])], axis=1)


class TestPressureKernel:
    """Pressure solves on periodic meshes whose Laplacian has more than the constant mode."""

    @pytest.mark.parametrize("degree,dimension", [(1, 4), (2, 1), (3, 4)])
    def test_kernel_dimension(self, periodic_mesh, degree, dimension):
        solver = NavierStokesSolver(periodic_mesh, degree)
        assert solver.pressure_nullspace
        assert solver.pressure_kernel.shape[0] == dimension

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_divergence_free_field_is_unchanged(self, periodic_mesh, degree):
        """An already solenoidal field gives a zero right-hand side and a zero increment."""
        solver = NavierStokesSolver(periodic_mesh, degree, tol_pressure=1e-10)
        state = solver.new_state(shear_wave)
        p, v_new, report = solver.pressure_correct(state.velocity, state.pressure, 0.01, 0.01)
        assert report.converged
        np.testing.assert_allclose(p, 0.0, atol=1e-10)
        for new, old in zip(v_new, state.velocity):
            np.testing.assert_allclose(new, old, atol=1e-10)

    @pytest.mark.parametrize("degree", [1, 3])
    def test_projection_of_divergence_free_field(self, periodic_mesh, degree):
        solver = NavierStokesSolver(periodic_mesh, degree, tol_pressure=1e-10)
        state = solver.new_state(shear_wave)
        before = [v.copy() for v in state.velocity]
        report = solver.project(state)
        assert report.converged
        for new, old in zip(state.velocity, before):
            np.testing.assert_allclose(new, old, atol=1e-10)

    def test_flux_scale_does_not_cancel(self, periodic_mesh):
        """The flux scale stays of order one for a field whose divergence vanishes."""
        solver = NavierStokesSolver(periodic_mesh, 3)
        state = solver.new_state(shear_wave)
        assert solver.flux_scale(state.velocity, 0.0) > 1e-2
        assert solver.continuity_residual(state.velocity, 0.0) < 1e-12


# =============================================================================
# Reference solutions
# =============================================================================

def test_heat_mode_decays_at_viscous_rate():
    """Zero-advection sine: the amplitude follows exp(-nu t) over one diffusion time."""
    mesh = build_uniform([(0.0, TWO_PI), (0.0, TWO_PI / 16)], [16, 1], periodic=[True, True])
    nu = 0.1
    solver = NavierStokesSolver(mesh, 3, nu=nu, tol_pressure=1e-12)
    state = solver.new_state(shear_wave)
    assert solver.project(state).converged
    k0 = solver.kinetic_energy(state)
    for _ in range(200):
        report = solver.step(state, 0.05)
        assert report.pressure_cg.converged
    assert state.t == pytest.approx(1.0 / nu)
    amplitude = np.sqrt(solver.kinetic_energy(state) / k0)
    assert amplitude == pytest.approx(np.exp(-nu * state.t), rel=1e-2)


def _sine_advection_oracle(mesh, degree, u):
    """
    DG weak form of the x-flux of a scalar carried at unit speed, by dense Gauss quadrature.

    Face flux is Rusanov with s = 2 max|u_x| = 2. The y direction only
    contributes its quadrature weight.
    """
    basis = build_basis(degree)
    xi, wq = np.polynomial.legendre.leggauss(12)
    xi, wq = 0.5 * (xi + 1.0), 0.5 * wq
    phi = lagrange_matrix(basis.nodes, xi)
    dphi = lagrange_deriv_matrix(basis.nodes, xi)
    right = lagrange_matrix(basis.nodes, np.array([1.0]))[0]
    left = lagrange_matrix(basis.nodes, np.array([0.0]))[0]
    lo, widths = mesh.active_boxes()
    hx = widths[0, 0]
    column = np.rint((lo[:, 0] - mesh.origin[0]) / hx).astype(int)
    row = np.rint((lo[:, 1] - mesh.origin[1]) / widths[0, 1]).astype(int)
    where = {(c, r): i for i, (c, r) in enumerate(zip(column, row))}
    n_cols = column.max() + 1

    def flux(a, b):
        minus, plus = right @ u[a][:, 0], left @ u[b][:, 0]
        return 0.5 * (minus + plus) - (plus - minus)

    out = np.zeros_like(u)
    for c in range(len(u)):
        prev = where[((column[c] - 1) % n_cols, row[c])]
        nxt = where[((column[c] + 1) % n_cols, row[c])]
        line = u[c][:, 0]
        volume = dphi.T @ (wq * (phi @ line))
        surface = flux(c, nxt) * right - flux(prev, c) * left
        out[c] = np.multiply.outer(volume - surface, widths[c, 1] * basis.weights)
    return out


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_convection_matches_quadrature_oracle(degree):
    """Frozen unit speed along x carrying sin x: Fv equals the independently assembled DG operator."""
    mesh = build_uniform([(0.0, TWO_PI), (0.0, 1.0)], [8, 2], periodic=[True, True])
    solver = NavierStokesSolver(mesh, degree, nu=0.0)
    lo, widths = mesh.active_boxes()
    u = [np.ones_like(solver.ops.cell_mass), interpolate(lambda x: np.sin(x[:, 0]), lo, widths, degree)]
    rhs = solver.convection.rhs(u, 0.0)
    np.testing.assert_allclose(rhs[0], 0.0, atol=1e-10)
    expected = _sine_advection_oracle(mesh, degree, u[1])
    np.testing.assert_allclose(rhs[1], expected, atol=1e-10)

    state = solver.new_state()
    dt = 0.01
    fv = solver.convective_rhs(state, u, dt)
    np.testing.assert_allclose(fv[1], u[1] + dt * expected / solver.ops.cell_mass, atol=1e-10)
