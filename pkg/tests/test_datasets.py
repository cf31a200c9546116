import numpy as np
import pandas as pd
import pytest

from nestedkrig.datasets import (
    coordinate_columns,
    five_point_setup,
    load_dataset,
    make_design,
    regular_grid,
    synthetic_values,
    write_dataset,
    write_frame,
)
from nestedkrig.errors import ArgumentError, DatasetError
from nestedkrig.kernels import make_kernel


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadDataset:
    """Test CSV ingestion and its error lines."""

    def test_one_dimensional(self, tmp_path):
        """Test row order and values are preserved."""
        X, y = load_dataset(write(tmp_path, "x,y\n0.1,1.0\n0.3,2.5\n0.2,-1\n"))
        np.testing.assert_allclose(X, [[0.1], [0.3], [0.2]], rtol=1e-15)
        np.testing.assert_array_equal(y, [1.0, 2.5, -1.0])

    def test_two_dimensional(self, tmp_path):
        X, y = load_dataset(write(tmp_path, "x1,x2,value\n0.1,0.2,3\n0.4,0.5,6\n"))
        assert X.shape == (2, 2)
        np.testing.assert_array_equal(y, [3.0, 6.0])

    def test_nan_reports_its_line(self, tmp_path):
        """Test a NaN value is rejected with its 1-based file line."""
        with pytest.raises(DatasetError, match="line 3") as info:
            load_dataset(write(tmp_path, "x,y\n0.1,1.0\n0.3,nan\n"))
        assert info.value.line == 3

    def test_text_value(self, tmp_path):
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(write(tmp_path, "x,y\nabc,1.0\n"))

    def test_blank_line(self, tmp_path):
        """Test a blank line inside the data is an error, not skipped."""
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(write(tmp_path, "x,y\n0.1,1.0\n\n0.3,2.0\n"))

    def test_header_only(self, tmp_path):
        with pytest.raises(DatasetError, match="no data rows"):
            load_dataset(write(tmp_path, "x,y\n"))

    def test_missing_header(self, tmp_path):
        """Test numeric first row is read as a missing header."""
        with pytest.raises(DatasetError, match="line 1: missing header row"):
            load_dataset(write(tmp_path, "0.1,1.0\n0.3,2.0\n"))

    def test_single_column(self, tmp_path):
        with pytest.raises(DatasetError, match="line 1"):
            load_dataset(write(tmp_path, "y\n1.0\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DatasetError, match="line 1"):
            load_dataset(write(tmp_path, ""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="no such dataset file"):
            load_dataset(tmp_path / "absent.csv")


class TestWriting:
    """Test deterministic CSV emission."""

    def test_dataset_survives_a_write(self, tmp_path):
        X = np.array([[0.1], [1.0 / 3.0], [0.7]])
        y = np.array([np.pi, -1e-17, 2.0])
        X2, y2 = load_dataset(write_dataset(X, y, tmp_path / "d.csv"))
        np.testing.assert_allclose(X2, X, rtol=1e-15, atol=0)
        np.testing.assert_allclose(y2, y, rtol=1e-15, atol=0)

    def test_identical_bytes_and_newlines(self, tmp_path):
        """Test two writes produce the same bytes with \\n line endings."""
        frame = pd.DataFrame({"x": [0.1, 0.2], "mean": [1.0 / 3.0, 2.0]})
        first = write_frame(frame, tmp_path / "a" / "out.csv").read_bytes()
        second = write_frame(frame, tmp_path / "b" / "out.csv").read_bytes()
        assert first == second
        assert b"\r\n" not in first
        assert first.startswith(b"x,mean\n")

    def test_coordinate_columns(self):
        assert coordinate_columns(1) == ["x"]
        assert coordinate_columns(3) == ["x1", "x2", "x3"]


class TestGridsAndDesigns:
    """Test grids, designs and synthetic responses."""

    def test_regular_grid(self):
        grid = regular_grid(0.0, 1.0, 101)
        assert grid.shape == (101, 1)
        assert grid[0, 0] == 0.0 and grid[-1, 0] == 1.0

    def test_regular_grid_2d(self):
        """Test the 2-d grid is the product grid, last axis fastest."""
        grid = regular_grid(0.0, 1.0, 3, dim=2)
        assert grid.shape == (9, 2)
        np.testing.assert_array_equal(grid[:3], [[0.0, 0.0], [0.0, 0.5], [0.0, 1.0]])

    def test_regular_grid_validation(self):
        with pytest.raises(ArgumentError):
            regular_grid(0.0, 1.0, 0)
        with pytest.raises(ArgumentError):
            regular_grid(1.0, 0.0, 5)

    def test_equispaced_design(self):
        np.testing.assert_allclose(make_design(5)[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_halton_design_skips_origin(self):
        """Test the unscrambled sequence starts after its zero point."""
        np.testing.assert_allclose(make_design(3, design="halton")[:, 0], [0.5, 0.25, 0.75])
        np.testing.assert_allclose(make_design(1, dim=2, design="halton")[0], [0.5, 1.0 / 3.0])

    def test_uniform_design_is_seeded(self):
        """Test uniform designs repeat for a seed and respect bounds."""
        a = make_design(6, dim=2, design="uniform", seed=5, lower=-1.0, upper=1.0)
        np.testing.assert_array_equal(a, make_design(6, dim=2, design="uniform", seed=5, lower=-1.0, upper=1.0))
        assert np.all((a >= -1.0) & (a <= 1.0))

    def test_unknown_design(self):
        with pytest.raises(ArgumentError):
            make_design(4, design="sobol")

    def test_synthetic_values(self):
        spec = make_kernel("matern32", lengthscale=0.2)
        X = regular_grid(0.0, 1.0, 5)
        np.testing.assert_allclose(
            synthetic_values("sin2pi_plus_x", X, spec), np.sin(2 * np.pi * X[:, 0]) + X[:, 0]
        )
        np.testing.assert_array_equal(synthetic_values("zero", X, spec), np.zeros(5))
        np.testing.assert_array_equal(
            synthetic_values("gp_sample", X, spec, seed=2), synthetic_values("gp_sample", X, spec, seed=2)
        )
        with pytest.raises(ArgumentError):
            synthetic_values("runge", X, spec)


def test_five_point_setup():
    """Test the five-point illustration data."""
    setup = five_point_setup()
    np.testing.assert_array_equal(setup.X[:, 0], [0.1, 0.3, 0.5, 0.7, 0.9])
    assert setup.y[0] == pytest.approx(np.sin(0.2 * np.pi) + 0.1)
    assert setup.partition.groups == ((0, 1, 2), (3, 4))
    assert setup.spec.lengthscale == (0.2,)
