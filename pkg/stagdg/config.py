"""
Configuration management using Pydantic Settings.

Application settings load from (in order of precedence, highest to lowest):
1. ./stagdg.yaml (project-local config)
2. ~/.stagdg/config.yaml (user config)
3. Environment variables (STAGDG_ prefix)
4. Built-in defaults

Case configurations (one simulation run) are separate YAML documents
validated by :class:`CaseConfig`.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .mesh.estimator import INDICATORS


class MeshSettings(BaseModel):
    """Level-0 lattice and refinement limits."""

    extent: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(0.0, 1.0), (0.0, 1.0)], description="Domain box, one (lo, hi) pair per axis"
    )
    counts: List[int] = Field(default_factory=lambda: [8, 8], description="Level-0 cells per axis")
    refine_factor: int = Field(default=2, ge=2, le=8, description="Linear refinement ratio between levels")
    max_level: int = Field(default=0, ge=0, le=6, description="Finest refinement level")
    periodic: List[bool] = Field(default_factory=lambda: [False, False], description="Periodicity per axis")
    solid: List[List[Tuple[float, float]]] = Field(
        default_factory=list, description="Solid blocks on the level-0 lattice, one (lo, hi) pair per axis"
    )
    initial_level: int = Field(default=0, ge=0, description="Uniform refinement applied before the first step")

    @model_validator(mode="after")
    def _check_shape(self) -> "MeshSettings":
        dim = len(self.counts)
        if dim not in (2, 3):
            raise ValueError(f"Only 2D and 3D meshes are supported, got {dim} counts")
        if len(self.extent) != dim or len(self.periodic) != dim:
            raise ValueError("extent, counts and periodic must have one entry per axis")
        if any(c < 1 for c in self.counts):
            raise ValueError(f"Level-0 counts must be >= 1, got {self.counts}")
        if any(not hi > lo for lo, hi in self.extent):
            raise ValueError(f"Every extent needs lo < hi, got {self.extent}")
        if self.initial_level > self.max_level:
            raise ValueError("initial_level cannot exceed max_level")
        return self

    @property
    def dim(self) -> int:
        return len(self.counts)


class AdaptSettings(BaseModel):
    """Refinement estimator and remeshing cadence."""

    indicator: str = Field(default="velocity_magnitude", description=f"Indicator field, one of {INDICATORS}")
    chi_refine: float = Field(default=0.2, ge=0.0, le=1.0, description="Refine where chi exceeds this")
    chi_coarsen: float = Field(default=0.05, ge=0.0, le=1.0, description="Coarsen where chi is below this")
    epsilon: float = Field(default=0.01, ge=0.0, description="Noise floor weight of the estimator")
    every: int = Field(default=0, ge=0, description="Adapt every this many steps (0 disables adaptation)")
    initial: bool = Field(default=True, description="Adapt to the initial condition before the first step")

    @model_validator(mode="after")
    def _check_thresholds(self) -> "AdaptSettings":
        if self.indicator not in INDICATORS:
            raise ValueError(f"Unknown indicator {self.indicator!r}; expected one of {INDICATORS}")
        if not self.chi_coarsen < self.chi_refine:
            raise ValueError("chi_coarsen must be smaller than chi_refine")
        return self


class TimeSettings(BaseModel):
    """Time stepping."""

    cfl: float = Field(default=0.5, gt=0.0, le=2.0, description="CFL number")
    t_end: float = Field(default=1.0, gt=0.0, description="Final time")
    theta: float = Field(default=0.5, ge=0.5, le=1.0, description="Implicitness factor of the pressure")
    dt_max: float = Field(default=1e-1, gt=0.0, description="Upper bound for the time step")
    dt: Optional[float] = Field(default=None, gt=0.0, description="Fixed time step (overrides the CFL rule)")
    viscosity: str = Field(default="implicit", pattern="^(implicit|explicit)$", description="Viscous term treatment")
    dual_update: str = Field(
        default="incremental", pattern="^(incremental|projection)$", description="How main-grid updates reach the duals"
    )
    max_steps: Optional[int] = Field(default=None, ge=1, description="Stop after this many steps")


class SolverSettings(BaseModel):
    """Conjugate gradient settings."""

    tol_pressure: float = Field(default=1e-10, gt=0.0, lt=1.0, description="Relative residual for the pressure")
    tol_viscous: float = Field(default=1e-12, gt=0.0, lt=1.0, description="Relative residual for viscous solves")
    max_iter: int = Field(default=5000, ge=1, description="CG iteration limit")
    reorthogonalize_every: int = Field(default=50, ge=1, description="Mean removal cadence for singular systems")
    accept_max_iter: bool = Field(default=False, description="Continue when CG reaches max_iter")


class OutputSettings(BaseModel):
    """Output directory and cadence."""

    out: Path = Field(default=Path("runs/case"), description="Output directory")
    dump_every: int = Field(default=0, ge=0, description="Snapshot cadence in steps (0: first and last only)")
    checkpoint_every: int = Field(default=0, ge=0, description="Checkpoint cadence in steps (0: last only)")
    progress: bool = Field(default=True, description="Show a progress bar")


class BoundaryPatchSettings(BaseModel):
    """A boundary patch given in the case file (constant values only)."""

    kind: str = Field(description="no_slip, slip, velocity or pressure")
    axis: int = Field(ge=0, le=2, description="Normal axis")
    side: int = Field(description="-1 for the low wall, +1 for the high wall")
    region: Optional[List[Tuple[float, float]]] = Field(default=None, description="Per-axis limits on the face centre")
    value: Optional[Union[float, List[float]]] = Field(default=None, description="Velocity vector or pressure")
    solid: bool = Field(default=False, description="Applies to faces against solid blocks")


class RingSettings(BaseModel):
    """Gaussian-core vortex ring."""

    center: List[float]
    radius: float = Field(gt=0.0)
    core: float = Field(gt=0.0)
    omega0: float
    axis: List[float] = Field(default_factory=lambda: [0.0, 0.0, 1.0])


class CaseConfig(BaseModel):
    """One simulation run."""

    case: str = Field(description="Registered case id")
    degree: int = Field(default=3, ge=0, le=15, description="Polynomial degree N")
    nu: float = Field(default=0.01, ge=0.0, description="Kinematic viscosity")
    seed: int = Field(default=0, ge=0, description="Seed for randomised perturbations")
    mesh: MeshSettings = Field(default_factory=MeshSettings)
    adapt: AdaptSettings = Field(default_factory=AdaptSettings)
    time: TimeSettings = Field(default_factory=TimeSettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    boundary: Optional[List[BoundaryPatchSettings]] = Field(
        default=None, description="Boundary patches; the case default is used when omitted"
    )
    rings: Optional[List[RingSettings]] = Field(default=None, description="Vortex rings for vorticity-initialised cases")
    params: Dict[str, Any] = Field(default_factory=dict, description="Case-specific parameters")

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @classmethod
    def load_from_yaml(cls, yaml_path: Path) -> "CaseConfig":
        """Load a case configuration from a YAML file."""
        if not yaml_path.exists():
            raise FileNotFoundError(f"Config file not found: {yaml_path}")

        with open(yaml_path) as f:
            config_dict = yaml.safe_load(f) or {}

        return cls(**config_dict)

    def save_to_yaml(self, yaml_path: Path) -> None:
        """Save the case configuration to a YAML file."""
        yaml_path.parent.mkdir(parents=True, exist_ok=True)
        with open(yaml_path, "w") as f:
            yaml.dump(
                self.model_dump(mode="json", exclude_none=True),
                f,
                default_flow_style=False,
                sort_keys=False,
            )

    def with_overrides(self, **overrides: Any) -> "CaseConfig":
        """
        Apply dotted-key overrides (``time.cfl=0.3``) and re-validate.

        ``None`` values are ignored so unset CLI flags leave the file untouched.
        """
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            target = data
            parts = key.split(".")
            for part in parts[:-1]:
                target = target[part]
            target[parts[-1]] = value
        return CaseConfig(**data)


class StagdgSettings(BaseSettings):
    """Application-wide settings."""

    model_config = SettingsConfigDict(
        env_prefix="STAGDG_",
        env_nested_delimiter="__",
        case_sensitive=False,
    )

    runs_db: Path = Field(
        default_factory=lambda: Path.home() / ".stagdg/db/runs.db",
        description="SQLite run registry"
    )
    output_root: Path = Field(default=Path("runs"), description="Default parent of output directories")

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_file: Optional[Path] = Field(
        default_factory=lambda: Path.home() / ".stagdg/logs/stagdg.log",
        description="Log file path"
    )

    def ensure_directories(self) -> None:
        """Ensure all required directories exist."""
        self.runs_db.parent.mkdir(parents=True, exist_ok=True)
        self.output_root.mkdir(parents=True, exist_ok=True)
        if self.log_file:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)

    @classmethod
    def load_from_yaml(cls, yaml_path: Path) -> "StagdgSettings":
        """Load configuration from YAML file."""
        if not yaml_path.exists():
            raise FileNotFoundError(f"Config file not found: {yaml_path}")

        with open(yaml_path) as f:
            config_dict = yaml.safe_load(f) or {}

        return cls(**config_dict)

    @classmethod
    def load(cls) -> "StagdgSettings":
        """
        Load configuration with precedence (highest to lowest):
        1. Project-local ./stagdg.yaml
        2. User config ~/.stagdg/config.yaml
        3. Environment variables
        4. Defaults
        """
        config = cls()

        user_config = Path.home() / ".stagdg/config.yaml"
        if user_config.exists():
            with open(user_config) as f:
                user_dict = yaml.safe_load(f) or {}
            config = cls(**{**config.model_dump(), **user_dict})

        local_config = Path.cwd() / "stagdg.yaml"
        if local_config.exists():
            with open(local_config) as f:
                local_dict = yaml.safe_load(f) or {}
            config = cls(**{**config.model_dump(), **local_dict})

        return config

    def save_to_yaml(self, yaml_path: Path) -> None:
        """Save current configuration to YAML file."""
        yaml_path.parent.mkdir(parents=True, exist_ok=True)
        with open(yaml_path, "w") as f:
            yaml.dump(
                self.model_dump(mode="json", exclude_none=True),
                f,
                default_flow_style=False,
                sort_keys=False,
            )


def get_config() -> StagdgSettings:
    """Convenience function to get current configuration."""
    return StagdgSettings.load()
