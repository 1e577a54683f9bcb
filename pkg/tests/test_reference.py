"""
Tests for the bundled and generated reference solutions.
"""

import numpy as np
import pytest

from stagdg.errors import ConfigError
from stagdg.reference import (
    BLASIUS_WALL_SHEAR,
    ReferenceCurve,
    blasius_solution,
    blasius_velocity,
    ghia_centerlines,
    load_reference_csv,
)


class TestGhia:
    """Bundled cavity centreline tables."""

    def test_re100_tables(self):
        ref = ghia_centerlines(100)
        assert set(ref) == {"u", "v"}
        u = ref["u"]
        assert np.all(np.diff(u.x) > 0)
        assert u.x[0] == 0.0 and u.x[-1] == 1.0
        assert u.y[-1] == pytest.approx(1.0)
        assert u.y[0] == pytest.approx(0.0)
        assert u.y.min() < -0.2

    def test_interior_drops_walls(self):
        u = ghia_centerlines(100)["u"]
        inner = u.interior()
        assert len(inner.x) == len(u.x) - 2
        assert inner.x[0] > 0.0 and inner.x[-1] < 1.0

    def test_missing_reynolds(self):
        with pytest.raises(ConfigError, match="available"):
            ghia_centerlines(123)


class TestCurves:
    """Two-column CSV curves."""

    def test_load_sorts_and_skips_comments(self, tmp_path):
        path = tmp_path / "curve.csv"
        path.write_text("# digitised\nRe,length\n300,7.0\n100,3.0\n\n200,5.0\n")
        curve = load_reference_csv(path)
        np.testing.assert_array_equal(curve.x, [100.0, 200.0, 300.0])
        assert curve(np.array([150.0]))[0] == pytest.approx(4.0)
        assert curve.source == "curve.csv"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_reference_csv(tmp_path / "none.csv")

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1,abc\n")
        with pytest.raises(ConfigError):
            load_reference_csv(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("x,y\n")
        with pytest.raises(ConfigError, match="no data"):
            load_reference_csv(path)

    def test_max_deviation(self):
        curve = ReferenceCurve(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
        assert curve.max_deviation(lambda x: x + 1.25) == pytest.approx(0.25)


class TestBlasius:
    """Shooting solution of the similarity equation."""

    def test_wall_shear(self):
        _, fp, wall_shear = blasius_solution()
        assert wall_shear == pytest.approx(BLASIUS_WALL_SHEAR, abs=1e-5)
        assert fp[0] == 0.0
        assert fp[-1] == pytest.approx(1.0, abs=1e-6)

    def test_displacement_point(self):
        """u/U = 0.99 is reached near eta = 4.91."""
        eta, fp, _ = blasius_solution()
        assert np.interp(0.99, fp, eta) == pytest.approx(4.91, abs=0.02)

    def test_velocity(self):
        y = np.array([0.0, 1.0])
        u = blasius_velocity(1.0, y, nu=1e-4, u_inf=2.0)
        assert u[0] == 0.0
        assert u[1] == pytest.approx(2.0)

    def test_upstream_of_leading_edge(self):
        with pytest.raises(ValueError):
            blasius_velocity(0.0, np.array([0.1]), nu=1e-3)
