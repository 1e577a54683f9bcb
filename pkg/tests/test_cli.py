"""
Tests for the command-line interface.
"""

import pytest
import yaml
from typer.testing import CliRunner

from stagdg import __version__
from stagdg.cases import get_registry
from stagdg.cli import EXIT_CONFIG, app, apply_overrides
from stagdg.config import CaseConfig


# =============================================================================
# Fixtures
# =============================================================================

@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    """Keep the run database and log file out of the real home directory."""
    home = tmp_path / "home"
    home.mkdir()
    monkeypatch.setenv("HOME", str(home))
    monkeypatch.setenv("COLUMNS", "200")
    monkeypatch.chdir(tmp_path)
    return home


@pytest.fixture
def tgv_file(tmp_path):
    config = get_registry().get("taylor_green_2d").default_config().with_overrides(
        **{
            "degree": 1,
            "mesh.counts": [3, 3],
            "mesh.max_level": 0,
            "time.t_end": 0.01,
            "time.dt": 0.005,
            "output.out": str(tmp_path / "out"),
            "output.progress": False,
        }
    )
    path = tmp_path / "tgv.yaml"
    config.save_to_yaml(path)
    return path


# =============================================================================
# Commands
# =============================================================================

def test_version(runner):
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_cases_lists_registry(runner):
    result = runner.invoke(app, ["cases"])
    assert result.exit_code == 0
    assert "taylor_green_2d" in result.output
    assert "backward_step_2d" in result.output


class TestInitConfig:
    """Writing default case files."""

    def test_writes_defaults(self, runner, tmp_path):
        out = tmp_path / "cavity.yaml"
        result = runner.invoke(app, ["init-config", "cavity_2d", "--output", str(out)])
        assert result.exit_code == 0
        data = yaml.safe_load(out.read_text())
        assert data["case"] == "cavity_2d"
        assert data["params"]["Re"] == 100.0

    def test_keeps_existing_file_when_declined(self, runner, tmp_path):
        out = tmp_path / "cavity.yaml"
        out.write_text("keep me\n")
        result = runner.invoke(app, ["init-config", "cavity_2d", "--output", str(out)], input="n\n")
        assert "Cancelled" in result.output
        assert out.read_text() == "keep me\n"

    def test_unknown_case(self, runner, tmp_path):
        result = runner.invoke(app, ["init-config", "pipe", "--output", str(tmp_path / "x.yaml")])
        assert result.exit_code == EXIT_CONFIG


class TestRun:
    """stagdg run and resume."""

    def test_run_and_record(self, runner, tgv_file, tmp_path, isolated_home):
        result = runner.invoke(app, ["run", str(tgv_file)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "diag.csv").exists()
        assert (isolated_home / ".stagdg/db/runs.db").exists()

        listing = runner.invoke(app, ["runs"])
        assert listing.exit_code == 0
        assert "taylor_green_2d" in listing.output

    def test_flags_override_file(self, runner, tgv_file, tmp_path):
        result = runner.invoke(app, ["run", str(tgv_file), "--N", "2", "--out", str(tmp_path / "n2"), "--no-record"])
        assert result.exit_code == 0, result.output
        written = CaseConfig.load_from_yaml(tmp_path / "n2" / "config.yaml")
        assert written.degree == 2

    def test_invalid_config_exit_code(self, runner, tgv_file):
        result = runner.invoke(app, ["run", str(tgv_file), "--theta", "2.0", "--no-record"])
        assert result.exit_code == EXIT_CONFIG
        assert "Error" in result.output

    def test_resume(self, runner, tgv_file, tmp_path):
        assert runner.invoke(app, ["run", str(tgv_file), "--no-record"]).exit_code == 0
        checkpoint = tmp_path / "out" / "checkpoints" / "ckpt_000002.h5"
        result = runner.invoke(
            app, ["resume", str(checkpoint), "--tend", "0.02", "--out", str(tmp_path / "more"), "--no-record"]
        )
        assert result.exit_code == 0, result.output
        assert "Resuming" in result.output
        assert (tmp_path / "more" / "checkpoints" / "ckpt_000004.h5").exists()


def test_runs_without_database(runner):
    result = runner.invoke(app, ["runs"])
    assert result.exit_code == 0
    assert "No run database" in result.output


def test_verify_small(runner):
    result = runner.invoke(app, ["verify", "--meshes", "2", "--max-degree", "1"])
    assert result.exit_code == 0, result.output
    assert "passed" in result.output


def test_convergence_rejects_bad_list(runner):
    result = runner.invoke(app, ["convergence", "taylor_green_2d", "--degrees", "two"])
    assert result.exit_code == EXIT_CONFIG


def test_nu_flag_drops_reynolds():
    """--nu replaces Re-based viscosity."""
    config = get_registry().get("cavity_2d").default_config()
    updated = apply_overrides(config, {"nu": 0.05, "degree": None})
    assert "Re" not in updated.params
    assert updated.nu == 0.05
    assert updated.degree == config.degree
