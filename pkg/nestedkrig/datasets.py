"""
Dataset ingestion and emission, grids and synthetic designs.

Datasets are CSV files with a header row, d coordinate columns and a last
value column. Output tables are written with a fixed float format and ``\\n``
line endings so that identical runs produce identical bytes.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, NamedTuple, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import qmc

from nestedkrig.errors import ArgumentError, DatasetError
from nestedkrig.kernels import KernelSpec, PointSet, as_points, kernel_matrix, make_kernel
from nestedkrig.linalg import jittered_cholesky
from nestedkrig.submodels import Partition

LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.17g"


# ===== CSV =====


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_dataset(path: PathLike) -> Tuple[PointSet, np.ndarray]:
    """
    Read ``path`` into (X, y), preserving row order.

    Raises DatasetError with the 1-based file line of the first bad row.
    """
    try:
        raw = pd.read_csv(
            path, dtype=str, keep_default_na=False, skip_blank_lines=False
        )
    except FileNotFoundError as exc:
        raise DatasetError(f"no such dataset file: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DatasetError("file is empty, a header row is required", line=1) from exc
    except pd.errors.ParserError as exc:
        raise DatasetError(f"malformed CSV: {exc}") from exc

    columns = [str(c) for c in raw.columns]
    if all(_is_number(c) for c in columns):
        raise DatasetError("missing header row", line=1)
    if len(columns) < 2:
        raise DatasetError("need at least one coordinate column and a value column", line=1)
    if raw.shape[0] == 0:
        raise DatasetError("dataset has no data rows")

    values = np.empty(raw.shape, dtype=float)
    for j, name in enumerate(raw.columns):
        numeric = pd.to_numeric(raw[name], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(numeric))
        if bad.size:
            row = int(bad[0])
            raise DatasetError(
                f"column {name!r}: {raw[name].iloc[row]!r} is not a finite number",
                line=row + 2,
            )
        values[:, j] = numeric
    LOGGER.debug(
        "loaded %d rows, %d coordinates from %s", values.shape[0], values.shape[1] - 1, path
    )
    return values[:, :-1], values[:, -1]


def coordinate_columns(dim: int) -> list:
    """Column names of d coordinates: ``x`` in 1-d, ``x1..xd`` otherwise."""
    return ["x"] if dim == 1 else [f"x{i + 1}" for i in range(dim)]


def points_frame(points: Any, dim: int) -> pd.DataFrame:
    """Coordinates of ``points`` as a frame with coordinate_columns."""
    return pd.DataFrame(as_points(points, dim), columns=coordinate_columns(dim))


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write ``frame`` as CSV with the fixed float format; parents are created."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    LOGGER.debug("wrote %d rows to %s", len(frame), target)
    return target


def write_dataset(X: Any, y: Any, path: PathLike, dim: int = 1) -> Path:
    """Write (X, y) in the layout load_dataset reads back."""
    frame = points_frame(X, dim)
    frame["y"] = np.asarray(y, dtype=float).ravel()
    return write_frame(frame, path)


# ===== GRIDS AND DESIGNS =====


def regular_grid(lower: float, upper: float, count: int, dim: int = 1) -> PointSet:
    """``count`` equispaced values per axis, as a cartesian product for dim > 1."""
    if count < 1:
        raise ArgumentError(f"grid count must be >= 1, got {count}")
    if not lower <= upper:
        raise ArgumentError(f"grid needs lower <= upper, got [{lower}, {upper}]")
    axis = np.linspace(lower, upper, count)
    if dim == 1:
        return axis.reshape(-1, 1)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def make_design(
    n: int,
    dim: int = 1,
    design: str = "equispaced",
    seed: int = 0,
    lower: float = 0.0,
    upper: float = 1.0,
) -> PointSet:
    """
    n design points in [lower, upper]^dim.

    - equispaced: linspace in 1-d, unscrambled Halton points otherwise
    - halton: unscrambled Halton points, skipping the origin
    - uniform: seeded uniform draws
    """
    if n < 1:
        raise ArgumentError(f"design size must be >= 1, got {n}")
    if design == "equispaced" and dim == 1:
        unit = np.linspace(0.0, 1.0, n).reshape(-1, 1)
    elif design in ("equispaced", "halton"):
        sampler = qmc.Halton(d=dim, scramble=False)
        sampler.fast_forward(1)
        unit = sampler.random(n)
    elif design == "uniform":
        unit = np.random.default_rng(seed).random((n, dim))
    else:
        raise ArgumentError(f"unknown design {design!r}")
    return lower + (upper - lower) * unit


# ===== SYNTHETIC RESPONSES =====


def _sin2pi_plus_x(X: PointSet) -> np.ndarray:
    return np.sum(np.sin(2.0 * np.pi * X) + X, axis=1)


SYNTHETIC_FUNCTIONS: Dict[str, Callable[[PointSet], np.ndarray]] = {
    "sin2pi_plus_x": _sin2pi_plus_x,
    "zero": lambda X: np.zeros(X.shape[0]),
}


def gp_sample(spec: KernelSpec, X: PointSet, seed: int) -> np.ndarray:
    """One draw of Y(X) from the centered prior."""
    factor = jittered_cholesky(kernel_matrix(spec, X, X), label="prior sample")
    return factor.chol @ np.random.default_rng(seed).standard_normal(X.shape[0])


def synthetic_values(function: str, X: PointSet, spec: KernelSpec, seed: int = 0) -> np.ndarray:
    """
    Observations of a named synthetic function at X.

    ``gp_sample`` draws one prior path of ``spec`` with ``seed``; the other
    names are deterministic functions of X.

    Raises:
        ArgumentError: for an unknown function name
    """
    if function == "gp_sample":
        return gp_sample(spec, X, seed)
    try:
        return SYNTHETIC_FUNCTIONS[function](X)
    except KeyError:
        known = sorted(SYNTHETIC_FUNCTIONS) + ["gp_sample"]
        raise ArgumentError(f"unknown synthetic function {function!r}; known: {known}") from None


# ===== FIVE-POINT ILLUSTRATION =====


class FivePointSetup(NamedTuple):
    """Kernel, design, observations and partition of the five-point illustration."""

    spec: KernelSpec
    X: PointSet
    y: np.ndarray
    partition: Partition


FIVE_POINT_X = (0.1, 0.3, 0.5, 0.7, 0.9)


def five_point_setup() -> FivePointSetup:
    """
    The small illustration used by the demo: f(x) = sin(2 pi x) + x observed
    at 0.1, 0.3, ..., 0.9, kernel exp(-12.5 (x - x')^2), groups {0.1, 0.3, 0.5}
    and {0.7, 0.9}.
    """
    X = np.asarray(FIVE_POINT_X).reshape(-1, 1)
    spec = make_kernel("squared_exponential", variance=1.0, lengthscale=0.2)
    partition = Partition(groups=((0, 1, 2), (3, 4)), n=5)
    return FivePointSetup(spec=spec, X=X, y=_sin2pi_plus_x(X), partition=partition)
