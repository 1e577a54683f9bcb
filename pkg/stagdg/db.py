"""
SQLite run registry for stagdg.

Records every run (case, configuration, output directory, outcome) and the
checkpoints it wrote, so that ``stagdg resume`` and ``stagdg runs`` can find
them.
"""

import json
import sqlite3
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Generator, List, Optional

from pydantic import BaseModel


class RunRecord(BaseModel):
    """Run history record model."""

    id: Optional[int] = None
    case: str
    config: Optional[Dict[str, Any]] = None
    out_dir: Optional[str] = None
    started_at: Optional[int] = None
    completed_at: Optional[int] = None
    status: str = "running"
    steps: int = 0
    t_final: Optional[float] = None
    error: Optional[str] = None


class CheckpointRecord(BaseModel):
    """Checkpoint written by a run."""

    id: Optional[int] = None
    run_id: int
    step: int
    time: float
    path: str
    created_at: Optional[int] = None


# Schema version for migrations
SCHEMA_VERSION = 1

SCHEMA_SQL = """
-- Schema version tracking
CREATE TABLE IF NOT EXISTS schema_version (
    version INTEGER PRIMARY KEY,
    applied_at INTEGER DEFAULT (strftime('%s', 'now'))
);

-- Simulation runs
CREATE TABLE IF NOT EXISTS runs (
    id INTEGER PRIMARY KEY,
    case_id TEXT NOT NULL,
    config TEXT,
    out_dir TEXT,
    started_at INTEGER DEFAULT (strftime('%s', 'now')),
    completed_at INTEGER,
    status TEXT DEFAULT 'running',
    steps INTEGER DEFAULT 0,
    t_final REAL,
    error TEXT
);

CREATE INDEX IF NOT EXISTS idx_runs_case ON runs(case_id);

-- Checkpoints per run
CREATE TABLE IF NOT EXISTS checkpoints (
    id INTEGER PRIMARY KEY,
    run_id INTEGER NOT NULL REFERENCES runs(id),
    step INTEGER NOT NULL,
    time REAL NOT NULL,
    path TEXT NOT NULL,
    created_at INTEGER DEFAULT (strftime('%s', 'now'))
);

CREATE INDEX IF NOT EXISTS idx_checkpoints_run_id ON checkpoints(run_id);
"""


class Database:
    """SQLite database manager for the run registry."""

    def __init__(self, db_path: Path):
        """Initialize database connection."""
        self.db_path = Path(db_path)
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._ensure_schema()

    @contextmanager
    def _get_connection(self) -> Generator[sqlite3.Connection, None, None]:
        """Context manager for database connections."""
        conn = sqlite3.connect(str(self.db_path), timeout=30.0)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA busy_timeout=30000")
        try:
            yield conn
            conn.commit()
        except Exception:
            conn.rollback()
            raise
        finally:
            conn.close()

    def _ensure_schema(self) -> None:
        """Ensure database schema is up to date."""
        with self._get_connection() as conn:
            conn.executescript(SCHEMA_SQL)
            cursor = conn.execute("SELECT version FROM schema_version ORDER BY version DESC LIMIT 1")
            row = cursor.fetchone()
            current_version = row[0] if row else 0
            if current_version < SCHEMA_VERSION:
                conn.execute("INSERT INTO schema_version (version) VALUES (?)", (SCHEMA_VERSION,))

    @staticmethod
    def _run_from_row(row: sqlite3.Row) -> RunRecord:
        data = dict(row)
        data["case"] = data.pop("case_id")
        if data["config"]:
            data["config"] = json.loads(data["config"])
        return RunRecord(**data)

    # Run management
    def create_run(self, case: str, config: Optional[Dict[str, Any]] = None, out_dir: Optional[Path] = None) -> int:
        """Create a new run record and return its ID."""
        with self._get_connection() as conn:
            cursor = conn.execute(
                "INSERT INTO runs (case_id, config, out_dir) VALUES (?, ?, ?)",
                (case, json.dumps(config) if config else None, str(out_dir) if out_dir else None),
            )
            return int(cursor.lastrowid)

    def complete_run(
        self, run_id: int, error: Optional[str] = None, steps: int = 0, t_final: Optional[float] = None
    ) -> None:
        """Mark a run as completed (or failed when ``error`` is given)."""
        status = "failed" if error else "completed"
        with self._get_connection() as conn:
            conn.execute(
                """
                UPDATE runs SET completed_at = strftime('%s', 'now'), status = ?, error = ?, steps = ?, t_final = ?
                WHERE id = ?
                """,
                (status, error, steps, t_final, run_id),
            )

    def get_run(self, run_id: int) -> Optional[RunRecord]:
        """Get run record by ID."""
        with self._get_connection() as conn:
            row = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
            return self._run_from_row(row) if row else None

    def list_runs(self, case: Optional[str] = None, limit: int = 20) -> List[RunRecord]:
        """Most recent runs first, optionally for one case."""
        with self._get_connection() as conn:
            if case:
                cursor = conn.execute(
                    "SELECT * FROM runs WHERE case_id = ? ORDER BY id DESC LIMIT ?", (case, limit)
                )
            else:
                cursor = conn.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,))
            return [self._run_from_row(row) for row in cursor.fetchall()]

    # Checkpoints
    def add_checkpoint(self, run_id: int, step: int, time: float, path: Path) -> int:
        """Record a checkpoint file. Returns checkpoint ID."""
        with self._get_connection() as conn:
            cursor = conn.execute(
                "INSERT INTO checkpoints (run_id, step, time, path) VALUES (?, ?, ?, ?)",
                (run_id, step, time, str(path)),
            )
            return int(cursor.lastrowid)

    def latest_checkpoint(self, run_id: int) -> Optional[CheckpointRecord]:
        """Checkpoint with the highest step of a run."""
        with self._get_connection() as conn:
            row = conn.execute(
                "SELECT * FROM checkpoints WHERE run_id = ? ORDER BY step DESC, id DESC LIMIT 1", (run_id,)
            ).fetchone()
            return CheckpointRecord(**dict(row)) if row else None

    def get_stats(self) -> Dict[str, Any]:
        """Get database statistics."""
        with self._get_connection() as conn:
            stats: Dict[str, Any] = {}
            stats["total_runs"] = conn.execute("SELECT COUNT(*) FROM runs").fetchone()[0]
            stats["failed_runs"] = conn.execute("SELECT COUNT(*) FROM runs WHERE status = 'failed'").fetchone()[0]
            stats["running_runs"] = conn.execute("SELECT COUNT(*) FROM runs WHERE status = 'running'").fetchone()[0]
            stats["total_checkpoints"] = conn.execute("SELECT COUNT(*) FROM checkpoints").fetchone()[0]

            cursor = conn.execute("""
                SELECT case_id, COUNT(*) as count
                FROM runs
                WHERE status = 'completed'
                GROUP BY case_id
            """)
            stats["runs_by_case"] = {row["case_id"]: row["count"] for row in cursor.fetchall()}

            return stats
