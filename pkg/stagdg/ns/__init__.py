"""
Incompressible Navier-Stokes time integration on the staggered DG operators.
"""

from .boundary import (
    KINDS,
    NO_SLIP,
    PRESSURE,
    SLIP,
    VELOCITY,
    BoundaryPatch,
    BoundarySpec,
    ResolvedBoundary,
    ghost_velocity,
    resolve_boundaries,
)
from .convection import ConvectionOperator
from .solver import EXPLICIT, IMPLICIT, INCREMENTAL, PROJECTION, NavierStokesSolver, SolverState, StepReport

__all__ = [
    "KINDS",
    "NO_SLIP",
    "PRESSURE",
    "SLIP",
    "VELOCITY",
    "EXPLICIT",
    "IMPLICIT",
    "INCREMENTAL",
    "PROJECTION",
    "BoundaryPatch",
    "BoundarySpec",
    "ConvectionOperator",
    "NavierStokesSolver",
    "ResolvedBoundary",
    "SolverState",
    "StepReport",
    "ghost_velocity",
    "resolve_boundaries",
]
