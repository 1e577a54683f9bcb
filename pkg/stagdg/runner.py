"""
Case runner: initialise, adapt, time-step, write artifacts.

Output directory layout::

    <out>/config.yaml          the effective case configuration
    <out>/diag.csv             one row per step (plus t = 0)
    <out>/summary.txt          final records, or the failure trailer
    <out>/profiles/*.csv       sampled profiles of the case
    <out>/snapshots/*.vtu      field snapshots
    <out>/checkpoints/*.h5     restart files
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from .cases import BaseCase, CaseResult, get_registry
from .config import CaseConfig
from .db import Database
from .diagnostics import DiagnosticsLog, ErrorNorms, convergence_order
from .errors import ConfigError, SolverError
from .io import read_checkpoint, write_checkpoint, write_snapshot
from .ns.solver import NavierStokesSolver, SolverState, StepReport

logger = logging.getLogger(__name__)

# relative slack on t_end so round-off does not add a sliver step
T_END_SLACK = 1e-12


@dataclass
class RunResult:
    """Outcome of one run."""

    out_dir: Path
    state: SolverState
    log: DiagnosticsLog
    case_result: CaseResult
    wall_time: float
    run_id: Optional[int] = None
    status: str = "completed"
    error: Optional[str] = None


class CaseRunner:
    """Runs one case configuration, optionally registered in the run database."""

    def __init__(
        self,
        config: CaseConfig,
        database: Optional[Database] = None,
        console: Optional[Console] = None,
        write_fields: bool = True,
    ):
        self.config = config
        self.case: BaseCase = get_registry().get(config.case)
        self.database = database
        self.console = console or Console()
        self.write_fields = write_fields
        self.out_dir = Path(config.output.out)
        self.run_id: Optional[int] = None
        self.solver: Optional[NavierStokesSolver] = None
        self.state: Optional[SolverState] = None
        self.log = DiagnosticsLog(config.mesh.max_level)
        self._last_report: Optional[StepReport] = None
        self._warned_clipped = False

    # ------------------------------------------------------------------
    # Set-up

    def setup(self) -> SolverState:
        """Build mesh and solver, set the initial state and adapt to it."""
        config = self.config
        mesh = self.case.build_mesh(config)
        self.solver = self.case.build_solver(config, mesh)
        self.state = self.case.initial_state(self.solver, config)
        if config.adapt.initial and mesh.max_level > 0:
            for _ in range(mesh.max_level):
                report = self.solver.adapt(
                    self.state,
                    config.adapt.indicator,
                    config.adapt.chi_refine,
                    config.adapt.chi_coarsen,
                    config.adapt.epsilon,
                )
                logger.info("Initial adaptation: %s", report.summary())
                if not report.changed:
                    break
                self.state = self.case.initial_state(self.solver, config)
        self._record_row(None)
        logger.info("Initial state: %s, nu=%.6g", mesh.describe(), self.solver.nu)
        return self.state

    @classmethod
    def from_checkpoint(
        cls,
        path: Path,
        database: Optional[Database] = None,
        console: Optional[Console] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> "CaseRunner":
        """Runner that continues the run saved in ``path``."""
        checkpoint = read_checkpoint(path)
        config = CaseConfig(**checkpoint.config)
        if overrides:
            config = config.with_overrides(**overrides)
        runner = cls(config, database=database, console=console)
        runner.solver = runner.case.build_solver(config, checkpoint.mesh)
        runner.state = checkpoint.to_state()
        runner.log = DiagnosticsLog.from_arrays(config.mesh.max_level, checkpoint.diagnostics)
        logger.info("Resuming %s at step %d, t=%.6g", config.case, runner.state.step, runner.state.t)
        return runner

    # ------------------------------------------------------------------
    # Bookkeeping

    def _record_row(self, report: Optional[StepReport]) -> None:
        solver, state = self.solver, self.state
        assert solver is not None and state is not None
        row: Dict[str, float] = {
            "step": state.step,
            "t": state.t,
            "dt": state.dt,
            "active_cells": state.mesh.n_active,
        }
        if report is None:
            row["kinetic_energy"] = solver.kinetic_energy(state)
            row["max_velocity"] = solver.max_velocity(state)
            row["continuity_residual"] = solver.continuity_residual(state.velocity, state.t)
        else:
            row["kinetic_energy"] = report.kinetic_energy
            row["max_velocity"] = report.max_velocity
            row["continuity_residual"] = report.continuity_residual
            row["cg_pressure_iters"] = report.pressure_cg.iterations
            row["cg_viscous_iters"] = report.viscous_iterations
        for level, count in enumerate(state.mesh.level_counts()):
            row[f"level_{level}"] = count
        self.log.append(row)

    def _snapshot(self) -> None:
        if not self.write_fields:
            return
        assert self.solver is not None and self.state is not None
        path = self.out_dir / "snapshots" / f"snap_{self.state.step:06d}.vtu"
        write_snapshot(path, self.state.mesh, self.state.degree, self.state.pressure, self.solver.collocated(self.state))

    def _checkpoint(self) -> None:
        if not self.write_fields:
            return
        assert self.state is not None
        path = self.out_dir / "checkpoints" / f"ckpt_{self.state.step:06d}.h5"
        write_checkpoint(path, self.state, self.config.model_dump(mode="json"), self.log.as_arrays())
        if self.database is not None and self.run_id is not None:
            self.database.add_checkpoint(self.run_id, self.state.step, self.state.t, path)

    def _write_summary(self, result: Optional[CaseResult], error: Optional[str], wall_time: float) -> None:
        state = self.state
        lines = [
            f"case: {self.config.case}",
            f"status: {'failed' if error else 'completed'}",
            f"degree: {self.config.degree}",
            f"nu: {self.solver.nu if self.solver else self.config.nu:.10g}",
        ]
        if state is not None:
            lines += [
                f"steps: {state.step}",
                f"t_final: {state.t:.10g}",
                f"active_cells: {state.mesh.n_active}",
            ]
        lines.append(f"wall_time_s: {wall_time:.3f}")
        if result is not None:
            for name, norms in result.norms.items():
                for key, value in norms.as_dict().items():
                    lines.append(f"error_{name}_{key}: {value:.6e}")
            for key, value in result.records.items():
                lines.append(f"{key}: {_format_value(value)}")
        if error:
            lines.append("")
            lines.append(f"error: {error}")
            if self._last_report is not None:
                r = self._last_report
                lines.append(
                    f"last_step: {r.step} t={r.t:.10g} dt={r.dt:.4e} residual={r.continuity_residual:.3e} "
                    f"pressure_cg=({r.pressure_cg.summary()})"
                )
        (self.out_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    # ------------------------------------------------------------------
    # The run

    def _should_stop(self) -> bool:
        assert self.state is not None
        t_end = self.config.time.t_end
        if self.state.t >= t_end * (1.0 - T_END_SLACK):
            return True
        max_steps = self.config.time.max_steps
        return max_steps is not None and self.state.step >= max_steps

    def _next_dt(self) -> float:
        assert self.solver is not None and self.state is not None
        dt = self.config.time.dt or self.solver.compute_dt(self.state)
        return min(dt, self.config.time.t_end - self.state.t)

    def _advance(self, progress: Progress, task: Any) -> None:
        """Step until t_end, adapting and writing output at their cadences."""
        solver, state, config = self.solver, self.state, self.config
        assert solver is not None and state is not None
        adapt_every = config.adapt.every
        dump_every = config.output.dump_every
        checkpoint_every = config.output.checkpoint_every
        while not self._should_stop():
            report = solver.step(state, self._next_dt())
            self._last_report = report
            self._record_row(report)
            logger.debug(
                "step %d t=%.6g dt=%.3e K=%.6e residual=%.2e cg=%d/%d",
                report.step,
                report.t,
                report.dt,
                report.kinetic_energy,
                report.continuity_residual,
                report.pressure_cg.iterations,
                report.viscous_iterations,
            )
            if not math.isfinite(report.kinetic_energy):
                raise SolverError(f"Kinetic energy is not finite at step {report.step} (t={report.t:.6g})")
            if adapt_every and state.step % adapt_every == 0 and state.mesh.max_level > 0:
                remesh = solver.adapt(
                    state, config.adapt.indicator, config.adapt.chi_refine, config.adapt.chi_coarsen, config.adapt.epsilon
                )
                if remesh.changed:
                    logger.info("Step %d adaptation: %s (%d cells)", state.step, remesh.summary(), state.mesh.n_active)
                if remesh.clipped_max_level and not self._warned_clipped:
                    logger.warning(
                        "%d refinement requests clipped at max level %d", len(remesh.clipped_max_level), state.mesh.max_level
                    )
                    self._warned_clipped = True
            if dump_every and state.step % dump_every == 0:
                self._snapshot()
            if checkpoint_every and state.step % checkpoint_every == 0:
                self._checkpoint()
            progress.update(task, completed=state.t, t=state.t, step=state.step)

    def run(self) -> RunResult:
        """
        Run to ``t_end`` and write every artifact.

        Raises:
            SolverError: a linear solve failed or the solution blew up; the
                summary trailer and the run registry record the failure
        """
        start = time.time()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config.save_to_yaml(self.out_dir / "config.yaml")
        if self.database is not None:
            self.run_id = self.database.create_run(
                self.config.case, self.config.model_dump(mode="json"), self.out_dir
            )

        try:
            if self.state is None:
                self.setup()
                self._snapshot()
            assert self.state is not None and self.solver is not None
            with Progress(
                SpinnerColumn(),
                TextColumn("[bold cyan]{task.description}"),
                BarColumn(),
                TextColumn("t={task.fields[t]:.4g} step={task.fields[step]}"),
                TimeElapsedColumn(),
                console=self.console,
                disable=not self.config.output.progress,
                transient=True,
            ) as progress:
                task = progress.add_task(
                    self.config.case, total=self.config.time.t_end, completed=self.state.t, t=self.state.t,
                    step=self.state.step,
                )
                self._advance(progress, task)

            self.log.write_csv(self.out_dir / "diag.csv")
            result = self.case.postprocess(self.solver, self.state, self.config, self.log)
            if result.profiles:
                (self.out_dir / "profiles").mkdir(exist_ok=True)
                for name, profile in result.profiles.items():
                    profile.write_csv(self.out_dir / "profiles" / f"{name}.csv", name)
            self._snapshot()
            self._checkpoint()
        except Exception as e:
            wall = time.time() - start
            if self.state is not None and self.log.rows:
                self.log.write_csv(self.out_dir / "diag.csv")
            self._write_summary(None, str(e), wall)
            if self.database is not None and self.run_id is not None:
                self.database.complete_run(
                    self.run_id, error=str(e), steps=self.state.step if self.state else 0,
                    t_final=self.state.t if self.state else None,
                )
            logger.error("Run %s failed: %s", self.config.case, e)
            raise

        wall = time.time() - start
        self._write_summary(result, None, wall)
        if self.database is not None and self.run_id is not None:
            self.database.complete_run(self.run_id, steps=self.state.step, t_final=self.state.t)
        logger.info("Run %s finished: %d steps, t=%.6g, %.1fs", self.config.case, self.state.step, self.state.t, wall)
        return RunResult(self.out_dir, self.state, self.log, result, wall, self.run_id)


def run_case(config: CaseConfig, database: Optional[Database] = None, console: Optional[Console] = None) -> RunResult:
    """Convenience function: set up and run one configuration."""
    return CaseRunner(config, database=database, console=console).run()


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


# ============================================================================
# Convergence study
# ============================================================================


@dataclass
class ConvergenceRow:
    degree: int
    cells: int
    h: float
    norms: ErrorNorms
    orders: Dict[str, float] = field(default_factory=dict)


def convergence_study(
    base: CaseConfig,
    degrees: Sequence[int],
    meshes: Sequence[int],
    out_root: Path,
    component: str = "u",
    console: Optional[Console] = None,
) -> List[ConvergenceRow]:
    """
    Error norms of ``component`` for every (degree, level-0 cells per axis) pair and
    the observed orders between consecutive meshes of one degree.

    Raises:
        ConfigError: if the case has no exact solution
    """
    case = get_registry().get(base.case)
    if case.exact(base) is None:
        raise ConfigError(f"Case {base.case} has no exact solution to measure convergence against")
    out_root = Path(out_root)
    rows: List[ConvergenceRow] = []
    for degree in degrees:
        previous: Optional[ConvergenceRow] = None
        for cells in meshes:
            config = base.with_overrides(
                **{
                    "degree": degree,
                    "mesh.counts": [cells] * base.dim,
                    "output.out": str(out_root / f"N{degree}_{cells}"),
                    "output.progress": False,
                }
            )
            runner = CaseRunner(config, console=console, write_fields=False)
            result = runner.run()
            norms = result.case_result.norms[component]
            h = float(max(hi - lo for lo, hi in config.mesh.extent)) / cells
            row = ConvergenceRow(degree, cells, h, norms)
            if previous is not None:
                for key in ("L1", "L2", "Linf"):
                    order = convergence_order(previous.norms.as_dict()[key], norms.as_dict()[key], previous.h, h)
                    row.orders[key] = order.order
            logger.info("N=%d cells=%d: %s", degree, cells, norms.as_dict())
            rows.append(row)
            previous = row
    write_convergence_csv(out_root / "convergence.csv", rows)
    return rows


def write_convergence_csv(path: Path, rows: Sequence[ConvergenceRow]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["degree", "cells", "h", "L1", "L2", "Linf", "order_L1", "order_L2", "order_Linf"])
        for r in rows:
            n = r.norms
            orders = [r.orders.get(k) for k in ("L1", "L2", "Linf")]
            writer.writerow(
                [r.degree, r.cells, f"{r.h:.10g}", f"{n.l1:.6e}", f"{n.l2:.6e}", f"{n.linf:.6e}"]
                + ["" if o is None else f"{o:.3f}" for o in orders]
            )
