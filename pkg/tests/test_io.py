"""
Tests for VTK snapshots and HDF5 checkpoints.
"""

import h5py
import meshio
import numpy as np
import pytest

from stagdg.errors import CheckpointError
from stagdg.io import CHECKPOINT_FORMAT, read_checkpoint, snapshot_mesh, write_checkpoint, write_snapshot
from stagdg.mesh import build_uniform
from stagdg.ns import NavierStokesSolver


# =============================================================================
# Fixtures
# =============================================================================

@pytest.fixture
def solver():
    mesh = build_uniform([(0.0, 1.0), (0.0, 2.0)], [2, 2], refine_factor=2, max_level=1, periodic=[True, True])
    mesh.refine(mesh.lookup(0, (0, 1)))
    return NavierStokesSolver(mesh, 2, nu=0.01)


@pytest.fixture
def state(solver):
    s = solver.new_state(lambda x: np.stack([np.sin(2 * np.pi * x[:, 1]), np.zeros(len(x))], axis=1))
    s.t, s.dt, s.step = 0.25, 0.01, 25
    return s


# =============================================================================
# Snapshots
# =============================================================================

class TestSnapshot:
    """Discontinuous point sets with per-element sub-cells."""

    def test_layout(self, solver, state):
        mesh = solver.mesh
        u = solver.collocated(state)
        out = snapshot_mesh(mesh, 2, state.pressure, u)
        assert out.points.shape == (mesh.n_active * 9, 3)
        assert out.cells[0].type == "quad"
        assert out.cells[0].data.shape == (mesh.n_active * 4, 4)
        assert out.point_data["velocity"].shape[1] == 3
        np.testing.assert_array_equal(out.point_data["velocity"][:, 2], 0.0)
        assert set(out.point_data["level"]) == {0.0, 1.0}

    def test_degree_zero_uses_vertices(self):
        mesh = build_uniform([(0.0, 1.0)] * 3, [2, 1, 1])
        blocks = np.zeros((2, 1, 1, 1))
        out = snapshot_mesh(mesh, 0, blocks, [blocks] * 3)
        assert out.cells[0].type == "vertex"
        assert len(out.points) == 2

    def test_written_file_is_readable(self, solver, state, tmp_path):
        path = write_snapshot(tmp_path / "snap" / "s_0001.vtu", solver.mesh, 2, state.pressure, solver.collocated(state))
        back = meshio.read(path)
        assert "pressure" in back.point_data
        assert len(back.points) == solver.mesh.n_active * 9


# =============================================================================
# Checkpoints
# =============================================================================

class TestCheckpoint:
    """Write, read and reject."""

    def test_roundtrip_is_exact(self, state, tmp_path):
        path = write_checkpoint(tmp_path / "run.h5", state, {"case": "taylor_green"}, {"t": np.array([0.1, 0.2])})
        ck = read_checkpoint(path)
        assert ck.config == {"case": "taylor_green"}
        assert ck.degree == 2
        assert (ck.t, ck.dt, ck.step) == (0.25, 0.01, 25)
        assert ck.mesh.n_active == state.mesh.n_active
        assert ck.mesh.level_counts() == state.mesh.level_counts()
        np.testing.assert_array_equal(ck.pressure, state.pressure)
        for a, b in zip(ck.velocity, state.velocity):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ck.diagnostics["t"], [0.1, 0.2])
        restored = ck.to_state()
        assert restored.step == 25 and restored.nu == state.nu

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            read_checkpoint(tmp_path / "nope.h5")

    def test_foreign_file(self, tmp_path):
        path = tmp_path / "other.h5"
        with h5py.File(path, "w") as f:
            f.attrs["format"] = "something-else"
        with pytest.raises(CheckpointError, match="not a stagdg checkpoint"):
            read_checkpoint(path)

    def test_other_version(self, state, tmp_path):
        path = write_checkpoint(tmp_path / "run.h5", state, {})
        with h5py.File(path, "a") as f:
            f.attrs["version"] = 99
        with pytest.raises(CheckpointError, match="version"):
            read_checkpoint(path)

    def test_truncated_content(self, tmp_path):
        path = tmp_path / "broken.h5"
        with h5py.File(path, "w") as f:
            f.attrs["format"] = CHECKPOINT_FORMAT
            f.attrs["version"] = 1
        with pytest.raises(CheckpointError, match="Corrupt"):
            read_checkpoint(path)
