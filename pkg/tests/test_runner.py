"""
Tests for the case runner, restarts and convergence studies.
"""

import csv
from unittest.mock import patch

import numpy as np
import pytest

from stagdg.cases import get_registry
from stagdg.db import Database
from stagdg.errors import ConfigError, SolverError
from stagdg.io import read_checkpoint
from stagdg.runner import CaseRunner, ConvergenceRow, convergence_study, run_case, write_convergence_csv
from stagdg.diagnostics import ErrorNorms


# =============================================================================
# Fixtures
# =============================================================================

@pytest.fixture
def tgv_config(tmp_path):
    """Two fixed steps of the 2D Taylor-Green vortex on 3x3 cells."""
    base = get_registry().get("taylor_green_2d").default_config()
    return base.with_overrides(
        **{
            "degree": 2,
            "mesh.counts": [3, 3],
            "mesh.max_level": 0,
            "time.t_end": 0.02,
            "time.dt": 0.01,
            "output.out": str(tmp_path / "run"),
            "output.progress": False,
        }
    )


@pytest.fixture
def db(tmp_path):
    return Database(tmp_path / "runs.db")


def read_rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


# =============================================================================
# Runs
# =============================================================================

class TestRun:
    """Artifacts and registry entries of one run."""

    def test_artifacts(self, tgv_config, db):
        result = run_case(tgv_config, database=db)
        out = result.out_dir
        assert result.state.step == 2
        assert result.state.t == pytest.approx(0.02)
        assert (out / "config.yaml").exists()
        rows = read_rows(out / "diag.csv")
        assert [r["step"] for r in rows] == ["0", "1", "2"]
        assert float(rows[-1]["continuity_residual"]) < 1e-8
        summary = (out / "summary.txt").read_text()
        assert "status: completed" in summary
        assert "error_velocity_L2" in summary
        assert (out / "snapshots" / "snap_000000.vtu").exists()
        assert (out / "snapshots" / "snap_000002.vtu").exists()
        assert (out / "checkpoints" / "ckpt_000002.h5").exists()

        run = db.get_run(result.run_id)
        assert run.status == "completed"
        assert run.steps == 2
        assert db.latest_checkpoint(result.run_id).step == 2

    def test_energy_decays(self, tgv_config):
        result = run_case(tgv_config)
        energy = result.log.column("kinetic_energy")
        assert np.all(np.diff(energy) < 0.0)

    def test_max_steps(self, tgv_config):
        config = tgv_config.with_overrides(**{"time.max_steps": 1})
        assert run_case(config).state.step == 1

    def test_last_step_hits_t_end(self, tgv_config):
        """The final step is shortened to land on t_end."""
        config = tgv_config.with_overrides(**{"time.dt": 0.015})
        result = run_case(config)
        assert result.state.t == pytest.approx(0.02)
        assert result.state.dt == pytest.approx(0.005)

    def test_failure_is_recorded(self, tgv_config, db):
        """A solver failure writes the failure trailer and marks the run failed."""
        runner = CaseRunner(tgv_config, database=db)
        with patch("stagdg.ns.solver.NavierStokesSolver.step", side_effect=SolverError("Pressure breakdown")):
            with pytest.raises(SolverError):
                runner.run()
        summary = (runner.out_dir / "summary.txt").read_text()
        assert "status: failed" in summary
        assert "error: Pressure breakdown" in summary
        run = db.get_run(runner.run_id)
        assert run.status == "failed"
        assert run.error == "Pressure breakdown"


class TestResume:
    """Continuing from checkpoints."""

    def test_resume_matches_uninterrupted_run(self, tgv_config, tmp_path):
        """Stopping and resuming gives the same state as one long run."""
        first = run_case(tgv_config)
        checkpoint = first.out_dir / "checkpoints" / "ckpt_000002.h5"
        runner = CaseRunner.from_checkpoint(
            checkpoint, overrides={"time.t_end": 0.04, "output.out": str(tmp_path / "resumed")}
        )
        resumed = runner.run()

        straight = run_case(tgv_config.with_overrides(**{"time.t_end": 0.04, "output.out": str(tmp_path / "long")}))
        assert resumed.state.step == straight.state.step == 4
        np.testing.assert_array_equal(resumed.state.pressure, straight.state.pressure)
        for a, b in zip(resumed.state.velocity, straight.state.velocity):
            np.testing.assert_array_equal(a, b)
        assert len(resumed.log.rows) == 5

    def test_checkpoint_carries_config(self, tgv_config):
        result = run_case(tgv_config)
        checkpoint = read_checkpoint(result.out_dir / "checkpoints" / "ckpt_000002.h5")
        assert checkpoint.config["case"] == "taylor_green_2d"
        assert checkpoint.config["degree"] == 2
        assert len(checkpoint.diagnostics["t"]) == 3


# =============================================================================
# Convergence
# =============================================================================

class TestConvergence:
    """Error tables over meshes."""

    def test_needs_exact_solution(self, tmp_path):
        base = get_registry().get("cavity_2d").default_config()
        with pytest.raises(ConfigError, match="exact solution"):
            convergence_study(base, [1], [2, 4], tmp_path)

    def test_study_rows_and_csv(self, tgv_config, tmp_path):
        rows = convergence_study(tgv_config.with_overrides(**{"time.t_end": 0.01}), [2], [3, 6], tmp_path / "conv")
        assert [(r.degree, r.cells) for r in rows] == [(2, 3), (2, 6)]
        assert rows[1].norms.l2 < rows[0].norms.l2
        assert rows[1].orders["L2"] > 2.0
        table = read_rows(tmp_path / "conv" / "convergence.csv")
        assert table[0]["order_L2"] == ""
        assert float(table[1]["order_L2"]) == pytest.approx(rows[1].orders["L2"], abs=1e-3)

    def test_write_csv(self, tmp_path):
        rows = [ConvergenceRow(1, 4, 0.25, ErrorNorms(1e-2, 2e-2, 3e-2), {"L2": 1.9})]
        write_convergence_csv(tmp_path / "out" / "c.csv", rows)
        (row,) = read_rows(tmp_path / "out" / "c.csv")
        assert row["L2"] == "2.000000e-02"
        assert row["order_L2"] == "1.900"
        assert row["order_L1"] == ""


# =============================================================================
# Acceptance
# =============================================================================


@pytest.fixture
def tgv_study_base():
    """Default 2D Taylor-Green set-up: nu = 0.1, t_end = 0.1, max_level 1, refinement factor 3."""
    return get_registry().get("taylor_green_2d").default_config().with_overrides(
        **{"time.t_end": 0.1, "time.dt": 1e-3, "output.progress": False}
    )


@pytest.mark.slow
def test_taylor_green_convergence(tgv_study_base, tmp_path):
    """N = 3 on 3^2 / 6^2 matches the reference L1 errors within a factor 3; orders above N + 1/2."""
    assert tgv_study_base.mesh.max_level == 1
    assert tgv_study_base.mesh.refine_factor == 3
    cubic = convergence_study(tgv_study_base, [3], [3, 6], tmp_path / "n3", component="velocity")
    for row, reference in zip(cubic, (1.91e-1, 1.27e-2)):
        assert reference / 3.0 <= row.norms.l1 <= 3.0 * reference
    assert cubic[1].orders["L1"] >= 3.5
    quadratic = convergence_study(tgv_study_base, [2], [6, 12], tmp_path / "n2", component="velocity")
    assert quadratic[1].orders["L1"] >= 2.5


@pytest.mark.slow
def test_taylor_green_spectral_decay(tgv_study_base, tmp_path):
    """Fixed 3^2 mesh: the L2 error falls steadily from N = 3 to N = 5."""
    rows = convergence_study(tgv_study_base, [3, 4, 5], [3], tmp_path, component="velocity")
    l2 = [r.norms.l2 for r in rows]
    assert l2[0] > l2[1] > l2[2]
    assert l2[2] < l2[0] / 50.0
    assert 1.45e-3 / 5.0 <= l2[2] <= 5.0 * 1.45e-3


@pytest.mark.slow
def test_cavity_re100_matches_ghia(tmp_path):
    """Re = 100 centreline profiles within 0.02 of the tabulated values."""
    case = get_registry().get("cavity_2d")
    config = case.config_for(100).with_overrides(
        **{"time.t_end": 20.0, "output.out": str(tmp_path / "cavity"), "output.progress": False}
    )
    assert config.degree == 4 and config.mesh.counts == [6, 6] and config.mesh.max_level == 1
    result = CaseRunner(config, write_fields=False).run()
    assert result.case_result.records["ghia_u_max_deviation"] < 0.02
    assert result.case_result.records["ghia_v_max_deviation"] < 0.02


@pytest.mark.slow
def test_vortex_ring_leapfrog_moves_along_axis(tmp_path):
    """Two coaxial rings on 12x12x32 cells stay solenoidal and their vorticity centroid travels along z."""
    case = get_registry().get("vortex_ring_leapfrog_3d")
    config = case.default_config().with_overrides(
        **{
            "degree": 2,
            "mesh.counts": [12, 12, 32],
            "mesh.max_level": 0,
            "rings": [
                {"center": [0.0, 0.0, -0.5], "radius": 0.6, "core": 0.3, "omega0": 2.0},
                {"center": [0.0, 0.0, 0.5], "radius": 0.6, "core": 0.3, "omega0": 2.0},
            ],
            "time.t_end": 0.25,
            "time.dt": 0.05,
            "output.out": str(tmp_path / "rings"),
            "output.progress": False,
        }
    )
    result = CaseRunner(config, write_fields=False).run()
    assert result.state.step == 5
    assert np.all(result.log.column("continuity_residual") < 1e-7)
    records = result.case_result.records
    # the initial pair is symmetric about the origin, so the centroid starts there
    assert abs(records["vorticity_centroid_z"]) > 0.01
    assert abs(records["vorticity_centroid_x"]) < 1e-3
    assert abs(records["vorticity_centroid_y"]) < 1e-3


@pytest.mark.slow
def test_backward_step_reattachment_grows_with_reynolds(tmp_path):
    """The recirculation behind the step lengthens over Re = 100, 200, 400."""
    case = get_registry().get("backward_step_2d")
    lengths = []
    for re in (100.0, 200.0, 400.0):
        config = case.default_config().with_overrides(
            **{
                "degree": 3,
                "params": {"Re": re},
                "mesh.extent": [(-2.0, 15.0), (0.0, 1.0)],
                "mesh.counts": [34, 4],
                "mesh.max_level": 0,
                "mesh.solid": [[(-2.0, 0.0), (0.0, 0.5)]],
                "time.t_end": 30.0,
                "output.out": str(tmp_path / f"re{int(re)}"),
                "output.progress": False,
            }
        )
        records = CaseRunner(config, write_fields=False).run().case_result.records
        assert records["reattached"]
        lengths.append(records["reattachment_length"])
    assert lengths[0] < lengths[1] < lengths[2]


@pytest.mark.slow
def test_taylor_green_3d_dissipation(tmp_path):
    """Re = 100 on 8^3 cells, N = 3: eps(0) near 3 nu / 4, eps >= 0 with one peak, K decreasing."""
    case = get_registry().get("taylor_green_3d")
    config = case.default_config().with_overrides(
        **{
            "degree": 3,
            "mesh.counts": [8, 8, 8],
            "mesh.max_level": 0,
            "adapt.every": 0,
            "params": {"Re": 100.0},
            "time.t_end": 8.0,
            "time.dt": 0.025,
            "output.out": str(tmp_path / "tgv3d"),
            "output.progress": False,
        }
    )
    result = CaseRunner(config, write_fields=False).run()
    result.log.fill_dissipation()
    eps = result.log.column("dissipation")
    energy = result.log.column("kinetic_energy")
    assert eps[1] == pytest.approx(0.75 * 0.01, rel=0.1)
    assert np.all(np.diff(energy) < 0.0)
    slack = 1e-3 * eps.max()
    assert np.all(eps >= -slack)
    peak = int(np.argmax(eps))
    assert peak < len(eps) - 1
    assert np.all(np.diff(eps[: peak + 1]) >= -slack)
    assert np.all(np.diff(eps[peak:]) <= slack)
