"""
Reference solutions the benchmark cases are compared against.

- Ghia, Ghia & Shin (1982) lid-driven cavity centreline velocities, bundled
  as CSV under ``stagdg/data`` (Re = 100).
- The Blasius boundary layer, regenerated by shooting on
  f''' + f f'' / 2 = 0, f(0) = f'(0) = 0, f'(inf) = 1.
- User-supplied digitised curves (dissipation rates, reattachment lengths)
  read from two-column CSV files.
"""

import csv
import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ConfigError

logger = logging.getLogger(__name__)

# f''(0) of the Blasius profile
BLASIUS_WALL_SHEAR = 0.332057

GHIA_TABLES = {100: ("ghia_re100_u.csv", "ghia_re100_v.csv")}


@dataclass
class ReferenceCurve:
    """Sampled reference curve y(x) with its provenance."""

    x: np.ndarray
    y: np.ndarray
    source: str = ""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.x, self.y)

    def interior(self) -> "ReferenceCurve":
        """The curve without its two end points (wall values of centreline tables)."""
        return ReferenceCurve(self.x[1:-1], self.y[1:-1], self.source)

    def max_deviation(self, fn) -> float:
        """Largest |fn(x_i) - y_i| over the reference points."""
        return float(np.max(np.abs(np.asarray(fn(self.x), dtype=float) - self.y)))


def load_reference_csv(path: Path, source: str = "") -> ReferenceCurve:
    """
    Read a two-column CSV (header row, ``#`` comments allowed), sorted by x.

    Raises:
        ConfigError: if the file is missing or not two numeric columns
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Reference file not found: {path}")
    with open(path, newline="") as f:
        return _parse_curve(f.read().splitlines(), source or path.name)


def _parse_curve(lines, source: str) -> ReferenceCurve:
    rows = [r for r in csv.reader(line for line in lines if line.strip() and not line.lstrip().startswith("#"))]
    if len(rows) < 2:
        raise ConfigError(f"Reference {source} has no data rows")
    try:
        data = np.array([[float(v) for v in r[:2]] for r in rows[1:]], dtype=float)
    except (ValueError, IndexError) as e:
        raise ConfigError(f"Reference {source} is not two numeric columns: {e}") from e
    order = np.argsort(data[:, 0], kind="stable")
    return ReferenceCurve(data[order, 0], data[order, 1], source)


def ghia_centerlines(re: int) -> Dict[str, ReferenceCurve]:
    """
    Centreline velocities of the unit cavity [0, 1]^2 with the lid at y = 1.

    Returns ``{"u": u(y) on x = 0.5, "v": v(x) on y = 0.5}``.

    Raises:
        ConfigError: if no table is bundled for ``re``
    """
    if re not in GHIA_TABLES:
        raise ConfigError(f"No Ghia reference bundled for Re={re}; available: {sorted(GHIA_TABLES)}")
    u_file, v_file = GHIA_TABLES[re]
    data = resources.files("stagdg") / "data"
    out = {}
    for key, name in (("u", u_file), ("v", v_file)):
        text = (data / name).read_text()
        out[key] = _parse_curve(text.splitlines(), f"Ghia et al. 1982, Re={re}")
    return out


# ============================================================================
# Blasius boundary layer
# ============================================================================


def _blasius_rhs(_eta: float, f: np.ndarray) -> np.ndarray:
    return np.array([f[1], f[2], -0.5 * f[0] * f[2]])


def _shoot(wall_shear: float, eta_max: float) -> float:
    sol = solve_ivp(_blasius_rhs, (0.0, eta_max), [0.0, 0.0, wall_shear], rtol=1e-11, atol=1e-13)
    return float(sol.y[1, -1] - 1.0)


@lru_cache(maxsize=4)
def blasius_solution(eta_max: float = 12.0, samples: int = 1201) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Similarity profile of the Blasius boundary layer.

    Returns ``(eta, f_prime, wall_shear)`` with f'(eta) = u / U and
    wall_shear = f''(0), found by Brent's method on the far-field condition.
    """
    wall_shear = brentq(_shoot, 0.1, 1.0, args=(eta_max,), xtol=1e-13)
    eta = np.linspace(0.0, eta_max, samples)
    sol = solve_ivp(
        _blasius_rhs, (0.0, eta_max), [0.0, 0.0, wall_shear], t_eval=eta, rtol=1e-11, atol=1e-13
    )
    logger.debug("Blasius wall shear f''(0) = %.8f", wall_shear)
    return eta, sol.y[1].copy(), float(wall_shear)


def blasius_velocity(x: float, y: np.ndarray, nu: float, u_inf: float = 1.0, x_leading: float = 0.0) -> np.ndarray:
    """Streamwise velocity u(x, y) of the Blasius layer starting at ``x_leading``."""
    if x <= x_leading:
        raise ValueError(f"Blasius profile needs x > {x_leading}, got {x}")
    eta_table, fp, _ = blasius_solution()
    eta = np.asarray(y, dtype=float) * np.sqrt(u_inf / (nu * (x - x_leading)))
    return u_inf * np.interp(eta, eta_table, fp, right=1.0)
