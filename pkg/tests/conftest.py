import numpy as np
import pytest

from nestedkrig.aggregated_process import AggregatedProcessModel, fit_aggregated_process
from nestedkrig.datasets import FivePointSetup, five_point_setup, regular_grid
from nestedkrig.submodels import SubmodelBank, fit_submodels


def random_design(rng: np.random.Generator, n: int, dim: int, min_sep: float) -> np.ndarray:
    """Uniform points in the unit cube, rejecting any closer than ``min_sep``."""
    points = []
    while len(points) < n:
        candidate = rng.random(dim)
        if all(np.linalg.norm(candidate - p) >= min_sep for p in points):
            points.append(candidate)
    return np.asarray(points)


@pytest.fixture
def five() -> FivePointSetup:
    return five_point_setup()


@pytest.fixture
def five_bank(five: FivePointSetup) -> SubmodelBank:
    return fit_submodels(five.spec, five.X, five.y, five.partition)


@pytest.fixture
def five_model(five_bank: SubmodelBank) -> AggregatedProcessModel:
    return fit_aggregated_process(five_bank)


@pytest.fixture
def grid101() -> np.ndarray:
    return regular_grid(0.0, 1.0, 101)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
