"""
stagdg CLI using Typer.

Command-line interface for running cases, resuming from checkpoints,
convergence studies and the operator property suite.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from .cases import get_registry
from .config import CaseConfig, StagdgSettings
from .db import Database
from .errors import ConfigError, SolverError
from .runner import CaseRunner, RunResult, convergence_study
from .verify import run_verification

app = typer.Typer(
    name="stagdg",
    help="stagdg: staggered semi-implicit DG solver for incompressible Navier-Stokes on AMR meshes",
    add_completion=False,
)

console = Console()

logger = logging.getLogger("stagdg")

EXIT_CONFIG = 2
EXIT_SOLVER = 3


def setup_logging(settings: StagdgSettings, verbose: bool = False) -> None:
    """Route the ``stagdg`` logger to the console and, if configured, a log file."""
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.INFO)
    logger.setLevel(level)
    logger.handlers.clear()
    logger.addHandler(RichHandler(console=console, show_path=False, rich_tracebacks=False))
    if settings.log_file:
        settings.log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(settings.log_file)
        file_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logger.addHandler(file_handler)
    logger.propagate = False


def _fail(e: Exception) -> NoReturn:
    """Print the error and exit with the code of its class."""
    console.print(f"[bold red]Error:[/] {e}")
    if isinstance(e, (ConfigError, ValidationError)):
        sys.exit(EXIT_CONFIG)
    if isinstance(e, SolverError):
        sys.exit(EXIT_SOLVER)
    sys.exit(1)


def _open_database(settings: StagdgSettings, enabled: bool) -> Optional[Database]:
    if not enabled:
        return None
    settings.runs_db.parent.mkdir(parents=True, exist_ok=True)
    return Database(settings.runs_db)


def _parse_ints(text: str, option: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{option} expects comma-separated integers, got {text!r}")
    if not values:
        raise ConfigError(f"{option} is empty")
    return values


def apply_overrides(config: CaseConfig, overrides: Dict[str, Any]) -> CaseConfig:
    """
    Apply CLI flag overrides to ``config``.

    An explicit ``nu`` wins over Reynolds-number parameters of the case, so
    those are dropped from ``params``.
    """
    if overrides.get("nu") is not None:
        params = {k: v for k, v in config.params.items() if k not in ("Re", "Re_gamma")}
        overrides = {**overrides, "params": params}
    return config.with_overrides(**overrides)


def _print_result(result: RunResult) -> None:
    table = Table(title=f"Run summary: {result.out_dir}", show_header=True, header_style="bold cyan")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="green")
    table.add_row("steps", str(result.state.step))
    table.add_row("t", f"{result.state.t:.6g}")
    table.add_row("active cells", str(result.state.mesh.n_active))
    table.add_row("wall time [s]", f"{result.wall_time:.1f}")
    for name, norms in result.case_result.norms.items():
        table.add_row(f"L2 error ({name})", f"{norms.l2:.4e}")
    for key, value in result.case_result.records.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print()
    console.print(table)
    console.print()


def version_callback(value: bool):
    """Show version and exit."""
    if value:
        console.print(f"stagdg version {__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-v",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    ),
    verbose: bool = typer.Option(False, "--verbose", help="Log per-solve statistics"),
):
    """stagdg: staggered DG incompressible flow solver"""
    setup_logging(StagdgSettings.load(), verbose)


@app.command()
def run(
    config_file: Path = typer.Argument(..., help="Case configuration (YAML)", exists=True, dir_okay=False),
    degree: Optional[int] = typer.Option(None, "--N", "--degree", help="Polynomial degree"),
    levels: Optional[int] = typer.Option(None, "--levels", help="Maximum refinement level"),
    refine_factor: Optional[int] = typer.Option(None, "--refine-factor", help="Refinement factor r (2 or 3)"),
    cfl: Optional[float] = typer.Option(None, "--cfl", help="CFL number"),
    t_end: Optional[float] = typer.Option(None, "--tend", help="Final time"),
    theta: Optional[float] = typer.Option(None, "--theta", help="Implicitness factor in [0.5, 1]"),
    nu: Optional[float] = typer.Option(None, "--nu", help="Kinematic viscosity (replaces Re parameters)"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    dump_every: Optional[int] = typer.Option(None, "--dump-every", help="Snapshot cadence in steps"),
    tol_pressure: Optional[float] = typer.Option(None, "--tol-pressure", help="Pressure CG tolerance"),
    tol_viscous: Optional[float] = typer.Option(None, "--tol-viscous", help="Viscous CG tolerance"),
    record: bool = typer.Option(True, "--record/--no-record", help="Register the run in the run database"),
):
    """
    Run one case configuration.
    """
    try:
        settings = StagdgSettings.load()
        config = CaseConfig.load_from_yaml(config_file)
        config = apply_overrides(
            config,
            {
                "degree": degree,
                "mesh.max_level": levels,
                "mesh.refine_factor": refine_factor,
                "time.cfl": cfl,
                "time.t_end": t_end,
                "time.theta": theta,
                "nu": nu,
                "output.out": str(out) if out else None,
                "output.dump_every": dump_every,
                "solver.tol_pressure": tol_pressure,
                "solver.tol_viscous": tol_viscous,
            },
        )
        console.print(f"\n[bold cyan]Case:[/] {config.case}")
        console.print(f"[bold cyan]Output:[/] {config.output.out}")
        result = CaseRunner(config, database=_open_database(settings, record), console=console).run()
        _print_result(result)
        console.print(f"[bold green]✓ Run complete[/]")

    except Exception as e:
        _fail(e)


@app.command()
def resume(
    checkpoint: Path = typer.Argument(..., help="Checkpoint file (.h5)", exists=True, dir_okay=False),
    t_end: Optional[float] = typer.Option(None, "--tend", help="New final time"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    dump_every: Optional[int] = typer.Option(None, "--dump-every", help="Snapshot cadence in steps"),
    record: bool = typer.Option(True, "--record/--no-record", help="Register the run in the run database"),
):
    """
    Continue a run from a checkpoint.
    """
    try:
        settings = StagdgSettings.load()
        overrides = {
            "time.t_end": t_end,
            "output.out": str(out) if out else None,
            "output.dump_every": dump_every,
        }
        runner = CaseRunner.from_checkpoint(
            checkpoint, database=_open_database(settings, record), console=console, overrides=overrides
        )
        assert runner.state is not None
        console.print(f"\n[bold cyan]Resuming:[/] {runner.config.case} at t={runner.state.t:.6g}")
        result = runner.run()
        _print_result(result)
        console.print(f"[bold green]✓ Run complete[/]")

    except Exception as e:
        _fail(e)


@app.command()
def convergence(
    case: str = typer.Argument(..., help="Case id with an exact solution"),
    degrees: str = typer.Option("3", "--degrees", help="Comma-separated polynomial degrees"),
    meshes: str = typer.Option("3,6", "--meshes", help="Comma-separated level-0 cells per axis"),
    config_file: Optional[Path] = typer.Option(
        None, "--config", "-c", help="Base configuration (default: the case defaults)"
    ),
    component: str = typer.Option("u", "--component", help="Error norm to report (u, v, w, velocity, pressure)"),
    t_end: Optional[float] = typer.Option(None, "--tend", help="Final time"),
    out: Path = typer.Option(Path("runs/convergence"), "--out", "-o", help="Output root"),
):
    """
    Measure error norms and observed orders over degrees and meshes.
    """
    try:
        base = CaseConfig.load_from_yaml(config_file) if config_file else get_registry().get(case).default_config()
        if base.case != case:
            raise ConfigError(f"Config is for case {base.case}, not {case}")
        base = base.with_overrides(**{"time.t_end": t_end})
        rows = convergence_study(
            base, _parse_ints(degrees, "--degrees"), _parse_ints(meshes, "--meshes"), out, component, console
        )

        table = Table(title=f"Convergence of {case} ({component})", show_header=True, header_style="bold cyan")
        for column in ("N", "cells", "L1", "L2", "Linf", "order L2"):
            table.add_column(column, justify="right")
        for row in rows:
            order = row.orders.get("L2")
            table.add_row(
                str(row.degree),
                str(row.cells),
                f"{row.norms.l1:.3e}",
                f"{row.norms.l2:.3e}",
                f"{row.norms.linf:.3e}",
                "" if order is None else f"{order:.2f}",
            )
        console.print()
        console.print(table)
        console.print(f"[dim]Written to {out / 'convergence.csv'}[/]")

    except Exception as e:
        _fail(e)


@app.command()
def verify(
    meshes: int = typer.Option(10, "--meshes", help="Number of random adapted meshes"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
    max_degree: int = typer.Option(3, "--max-degree", help="Largest polynomial degree to draw"),
):
    """
    Check the discrete pressure operator on random adapted meshes.
    """
    try:
        reports = run_verification(meshes, seed, max_degree)

        table = Table(title="Operator property suite", show_header=True, header_style="bold cyan")
        table.add_column("Mesh", style="cyan")
        table.add_column("N", justify="right")
        table.add_column("Cells", justify="right")
        table.add_column("Result")
        for report in reports:
            status = "[green]ok[/]" if report.passed else "[red]" + ", ".join(c.name for c in report.failures()) + "[/]"
            table.add_row(report.label, str(report.degree), str(report.n_cells), status)
        console.print()
        console.print(table)

        failed = [r for r in reports if not r.passed]
        if failed:
            for report in failed:
                for check in report.failures():
                    console.print(f"[red]{report.label}: {check.name} = {check.value:.3e} > {check.limit:.1e}[/]")
            sys.exit(1)
        console.print(f"[bold green]✓ All {len(reports)} meshes passed[/]")

    except Exception as e:
        _fail(e)


@app.command()
def cases():
    """
    List the registered cases.
    """
    table = Table(title="Cases", show_header=True, header_style="bold cyan")
    table.add_column("Case", style="cyan")
    table.add_column("Description")
    table.add_column("Exact solution", justify="center")
    for case in get_registry().get_all():
        config = case.default_config()
        table.add_row(case.name, case.description, "✓" if case.exact(config) is not None else "")
    console.print()
    console.print(table)


@app.command()
def init_config(
    case: str = typer.Argument(..., help="Case id"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Output config file path"),
):
    """
    Write a case's default configuration as YAML.
    """
    try:
        config = get_registry().get(case).default_config()
        output = output or Path.cwd() / f"{case}.yaml"

        if output.exists():
            overwrite = typer.confirm(f"Config file exists at {output}. Overwrite?")
            if not overwrite:
                console.print("[yellow]Cancelled[/]")
                raise typer.Exit()

        config.save_to_yaml(output)
        console.print(f"[bold green]✓ Config file created:[/] {output}")
        console.print(f"\n[cyan]Next step:[/] stagdg run {output}")

    except typer.Exit:
        raise
    except Exception as e:
        _fail(e)


@app.command()
def runs(
    case: Optional[str] = typer.Option(None, "--case", help="Only runs of this case"),
    limit: int = typer.Option(20, "--limit", "-n", help="Number of runs to list"),
):
    """
    Show the run registry.
    """
    try:
        settings = StagdgSettings.load()
        if not settings.runs_db.exists():
            console.print(f"[yellow]No run database at {settings.runs_db}[/]")
            return
        db = Database(settings.runs_db)
        stats = db.get_stats()

        table = Table(title="Run registry", show_header=True, header_style="bold cyan")
        table.add_column("Metric", style="cyan")
        table.add_column("Count", justify="right", style="green")
        table.add_row("Runs", f"{stats['total_runs']:,}")
        table.add_row("Failed", f"{stats['failed_runs']:,}")
        table.add_row("Running", f"{stats['running_runs']:,}")
        table.add_row("Checkpoints", f"{stats['total_checkpoints']:,}")
        console.print()
        console.print(table)

        recent = Table(show_header=True, header_style="bold cyan")
        for column in ("ID", "Case", "Status", "Steps", "t", "Output"):
            recent.add_column(column)
        for record in db.list_runs(case=case, limit=limit):
            recent.add_row(
                str(record.id),
                record.case,
                record.status,
                str(record.steps),
                "" if record.t_final is None else f"{record.t_final:.4g}",
                record.out_dir or "",
            )
        console.print(recent)

    except Exception as e:
        _fail(e)


def main_cli():
    """Main CLI entry point."""
    app()


if __name__ == "__main__":
    main_cli()
