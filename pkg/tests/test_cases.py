"""
Tests for the benchmark case registry and the case set-ups.
"""

import numpy as np
import pytest

from stagdg.cases import BaseCase, boundary_from_settings, get_registry, refine_uniformly
from stagdg.cases.cavity import lid_boundary
from stagdg.cases.shear_layer import shear_layer_velocity
from stagdg.cases.taylor_green import tgv2d_pressure, tgv2d_velocity, tgv3d_velocity
from stagdg.config import BoundaryPatchSettings, RingSettings
from stagdg.errors import ConfigError
from stagdg.mesh import build_uniform
from stagdg.ns import NO_SLIP, VELOCITY, resolve_boundaries


# =============================================================================
# Fixtures
# =============================================================================

@pytest.fixture
def registry():
    return get_registry()


def small(config, **overrides):
    """Shrink a default configuration to a few cells."""
    base = {"mesh.counts": [3] * config.dim, "mesh.max_level": 0, "mesh.initial_level": 0, "degree": 2}
    base.update(overrides)
    return config.with_overrides(**base)


# =============================================================================
# Registry
# =============================================================================

class TestRegistry:
    """Lookup of the built-in cases."""

    def test_builtin_cases(self, registry):
        assert set(registry.names()) == {
            "taylor_green_2d",
            "taylor_green_3d",
            "blasius_2d",
            "cavity_2d",
            "cavity_3d",
            "backward_step_2d",
            "double_shear_layer_2d",
            "vortex_ring_collision_3d",
            "vortex_ring_leapfrog_3d",
        }

    def test_unknown_case(self, registry):
        with pytest.raises(ConfigError, match="available"):
            registry.get("pipe_flow")

    @pytest.mark.parametrize("name", sorted(get_registry().names()))
    def test_default_configs_are_consistent(self, registry, name):
        """Every default config names its case and resolves its boundaries."""
        case = registry.get(name)
        assert isinstance(case, BaseCase)
        config = case.default_config()
        assert config.case == name
        assert case.description
        boundary = case.boundary(config)
        if all(config.mesh.periodic):
            assert boundary is None
        else:
            m = config.mesh
            mesh = build_uniform(m.extent, m.counts, m.refine_factor, m.max_level, m.periodic, m.solid or None)
            resolve_boundaries(mesh, boundary)


# =============================================================================
# Shared behaviour
# =============================================================================

class TestBaseCase:
    """Viscosity, boundaries and mesh construction."""

    def test_viscosity_from_reynolds(self, registry):
        case = registry.get("cavity_2d")
        config = case.default_config()
        assert case.viscosity(config) == pytest.approx(0.01)
        assert case.viscosity(config.with_overrides(params={})) == config.nu
        with pytest.raises(ConfigError):
            case.viscosity(config.with_overrides(params={"Re": -5.0}))

    def test_viscosity_from_circulation(self, registry):
        """Ring cases take nu = gamma / Re_gamma."""
        case = registry.get("vortex_ring_collision_3d")
        config = case.default_config()
        gamma = np.pi * 23.8 * 0.196**2
        assert case.viscosity(config) == pytest.approx(gamma / 577.0)
        leapfrog = registry.get("vortex_ring_leapfrog_3d")
        assert leapfrog.viscosity(leapfrog.default_config()) == pytest.approx(1e-3)

    def test_ring_case_needs_rings(self, registry):
        case = registry.get("vortex_ring_collision_3d")
        with pytest.raises(ConfigError):
            case.rings(case.default_config().with_overrides(rings=[]))

    def test_boundary_from_settings(self):
        spec = boundary_from_settings(
            [
                BoundaryPatchSettings(kind="velocity", axis=0, side=-1, value=[1.0, 0.0]),
                BoundaryPatchSettings(kind="no_slip", axis=1, side=1, region=[(0.0, 1.0), (0.0, 1.0)]),
            ]
        )
        assert [p.kind for p in spec.patches] == [VELOCITY, NO_SLIP]
        assert spec.patches[0].value == [1.0, 0.0]

    def test_case_file_boundary_wins(self, registry):
        case = registry.get("cavity_2d")
        patches = [BoundaryPatchSettings(kind="slip", axis=a, side=s) for a in (0, 1) for s in (-1, 1)]
        spec = case.boundary(case.default_config().with_overrides(boundary=[p.model_dump() for p in patches]))
        assert {p.kind for p in spec.patches} == {"slip"}

    def test_refine_uniformly(self):
        mesh = build_uniform([(0.0, 1.0)] * 2, [2, 2], refine_factor=3, max_level=1)
        refine_uniformly(mesh, 1)
        assert mesh.level_counts() == [0, 36]

    def test_build_mesh_applies_initial_level(self, registry):
        case = registry.get("taylor_green_2d")
        config = small(case.default_config(), **{"mesh.max_level": 1, "mesh.initial_level": 1})
        mesh = case.build_mesh(config)
        assert mesh.n_active == 9 * 9


# =============================================================================
# Individual cases
# =============================================================================

class TestTaylorGreen:
    """Exact solutions and the initial state."""

    def test_exact_solution_values(self):
        pts = np.array([[0.0, 0.3], [np.pi / 2, 0.0]])
        u = tgv2d_velocity(pts, 0.0, 0.1)
        np.testing.assert_allclose(u, [[0.0, -np.sin(0.3)], [np.cos(0.0), 0.0]], atol=1e-15)

    def test_decay(self):
        pts = np.array([[0.4, 1.1]])
        assert tgv2d_velocity(pts, 2.0, 0.1)[0, 0] == pytest.approx(
            tgv2d_velocity(pts, 0.0, 0.1)[0, 0] * np.exp(-0.4)
        )
        assert tgv2d_pressure(pts, 1.0, 0.1)[0] == pytest.approx(tgv2d_pressure(pts, 0.0, 0.1)[0] * np.exp(-0.4))

    def test_3d_field_has_no_w(self):
        pts = np.random.default_rng(0).uniform(0.0, 2 * np.pi, (5, 3))
        assert np.all(tgv3d_velocity(pts)[:, 2] == 0.0)

    def test_initial_state_and_norms(self, registry):
        """The projected initial state is solenoidal and close to the exact field."""
        case = registry.get("taylor_green_2d")
        config = small(case.default_config(), **{"mesh.counts": [6, 6], "degree": 3})
        solver = case.build_solver(config, case.build_mesh(config))
        state = case.initial_state(solver, config)
        assert solver.continuity_residual(state.velocity, 0.0) < 1e-8
        norms = case.error_norms(solver, state, config)
        assert set(norms) == {"u", "v", "velocity", "pressure"}
        assert norms["velocity"].l2 < 5e-2
        assert norms["pressure"].l2 < 5e-2


class TestCavity:
    """Lid-driven cavity set-up."""

    def test_lid_patch(self):
        spec = lid_boundary(3)
        lids = [p for p in spec.patches if p.name == "lid"]
        assert len(lids) == 1
        assert lids[0].axis == 1 and lids[0].side == 1
        assert lids[0].value == [1.0, 0.0, 0.0]
        assert len(spec.patches) == 6

    def test_config_for_reynolds(self, registry):
        case = registry.get("cavity_2d")
        assert case.config_for(3200).mesh.counts == [16, 16]
        assert case.config_for(400).params["Re"] == 400.0

    def test_starts_at_rest(self, registry):
        case = registry.get("cavity_2d")
        config = small(case.default_config())
        solver = case.build_solver(config, case.build_mesh(config))
        state = case.initial_state(solver, config)
        assert solver.max_velocity(state) == 0.0
        assert solver.pressure_nullspace


class TestShearLayer:
    """Double shear layer initial field."""

    def test_profile(self):
        pts = np.array([[0.25, 0.5], [0.25, -0.5], [0.0, 0.9], [0.0, -0.9]])
        u = shear_layer_velocity(pts, delta=0.01, u0=10.0, v0=0.5, sigma2=0.05)
        assert u[0, 0] == pytest.approx(0.0) and u[1, 0] == pytest.approx(0.0)
        assert u[0, 1] == pytest.approx(0.5)
        assert u[1, 1] == pytest.approx(-0.5)
        assert u[2, 0] == pytest.approx(10.0) and u[3, 0] == pytest.approx(10.0)

    def test_params_validated(self, registry):
        case = registry.get("double_shear_layer_2d")
        with pytest.raises(ConfigError):
            case.layer_params(case.default_config().with_overrides(params={"delta": 0.0}))


class TestBackwardStep:
    """Step geometry."""

    def test_solid_block(self, registry):
        case = registry.get("backward_step_2d")
        config = small(case.default_config(), **{"mesh.counts": [30, 2]})
        mesh = case.build_mesh(config)
        assert mesh.domain_volume() == pytest.approx(30.0 - 5.0)
        assert case.viscosity(config) == pytest.approx(0.01)


def test_ring_settings_become_rings(registry):
    case = registry.get("vortex_ring_leapfrog_3d")
    config = case.default_config().with_overrides(
        rings=[RingSettings(center=[0, 0, 0], radius=0.4, core=0.1, omega0=2.0).model_dump()]
    )
    (ring,) = case.rings(config)
    assert ring.radius == 0.4
    assert ring.circulation == pytest.approx(np.pi * 2.0 * 0.01)
