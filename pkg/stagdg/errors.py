"""
Exception hierarchy for stagdg.

Programming errors (bad indices, shape mismatches) raise the builtin
``ValueError``/``IndexError``; everything a user can trigger through a
configuration file or a run derives from :class:`StagdgError`.
"""

from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .linsolve import CgReport


class StagdgError(Exception):
    """Base class for all stagdg errors."""


class ConfigError(StagdgError):
    """Invalid or incomplete case configuration (unknown case, uncovered boundary patch, ...)."""


class MeshError(StagdgError):
    """Invalid mesh geometry or a mesh that violates the 2:1 level constraint."""


class SolverError(StagdgError):
    """A linear solve failed (breakdown, or iteration limit reached and not accepted)."""

    def __init__(self, message: str, report: Optional["CgReport"] = None):
        super().__init__(message)
        self.report = report


class CheckpointError(StagdgError):
    """Checkpoint file is corrupt or has an unsupported format version."""


__all__ = ["StagdgError", "ConfigError", "MeshError", "SolverError", "CheckpointError"]
