"""
The aggregated process Y_A = M_A + e', where e' is an independent copy of the
residual Y - M_A.

Writing w(x) = Lambda(x)^T K_M(x)^{-1} k_M(x) for the effective nested
weights, the prior covariance of Y_A is

    k_A(x,x') = k(x,x') + 2 k_M(x)^T K_M^{-1}(x) K_M(x,x') K_M^{-1}(x') k_M(x')
                - k_M(x)^T K_M^{-1}(x) k_M(x,x') - k_M(x')^T K_M^{-1}(x') k_M(x',x)

with K_M(x,x') = Lambda(x) k(X,X) Lambda(x')^T and k_M(x,x') = Lambda(x) k(X,x').
When M_A interpolates the data, the conditional law of Y_A given Y_A(X) has
mean M_A and variance v_A; its conditional covariance is

    c_A(x,x') = k_A(x,x') - k_A(x,X) k_A(X,X)^{-1} k_A(X,x').
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Optional

import numpy as np

from nestedkrig.errors import ArgumentError, SamplingError, SingularMatrixError
from nestedkrig.kernels import KernelSpec, PointSet, as_point, as_points, kernel_matrix
from nestedkrig.linalg import (
    Factorization,
    FactorizationFailed,
    jittered_cholesky,
    symmetric_part,
)
from nestedkrig.nested_aggregator import nested_weight_rows
from nestedkrig.submodels import SubmodelBank

LOGGER = logging.getLogger(__name__)

SAMPLING_METHODS = ("chol", "eigh")


@dataclass(frozen=True)
class AggregatedProcessModel:
    """
    The aggregated process Y_A built on a fitted bank.

    k_A(X,X), the design weight rows and their factorization are cached on
    first use; the model itself holds nothing but the bank.
    """

    bank: SubmodelBank

    @property
    def spec(self) -> KernelSpec:
        """Covariance function of the underlying process."""
        return self.bank.spec

    @cached_property
    def design_weights(self) -> np.ndarray:
        """Rows w(x_i) for every design point (the identity when M_A interpolates)."""
        return nested_weight_rows(self.bank, self.bank.X)

    @cached_property
    def design_cov(self) -> np.ndarray:
        """k_A(X,X)."""
        return self._k_agg(self.bank.X, self.design_weights, self.bank.X, self.design_weights)

    @cached_property
    def design_factor(self) -> Factorization:
        """Jittered Cholesky factor of k_A(X,X), used by conditioning."""
        try:
            return jittered_cholesky(self.design_cov, label="k_A(X,X)")
        except FactorizationFailed as exc:
            raise SingularMatrixError(
                f"k_A(X,X) singular up to jitter {exc.last_jitter:.3e}"
            ) from exc

    def _k_agg(self, A: PointSet, WA: np.ndarray, B: PointSet, WB: np.ndarray) -> np.ndarray:
        spec = self.bank.spec
        K = self.bank.kXX
        kAB = kernel_matrix(spec, A, B)
        kXB = kernel_matrix(spec, self.bank.X, B)
        kXA = kernel_matrix(spec, self.bank.X, A)
        return kAB + 2.0 * (WA @ K @ WB.T) - WA @ kXB - (WB @ kXA).T


def fit_aggregated_process(bank: SubmodelBank) -> AggregatedProcessModel:
    """
    Wrap a fitted bank as an aggregated process.

    Args:
        bank: Fitted submodels; nothing is recomputed

    Returns:
        AggregatedProcessModel whose caches fill on first use

    Examples:
        >>> setup = five_point_setup()
        >>> bank = fit_submodels(setup.spec, setup.X, setup.y, setup.partition)
        >>> model = fit_aggregated_process(bank)
        >>> k_agg(model, 0.3, 0.3)  # equals k(0.3, 0.3) = 1 at a design point
    """
    return AggregatedProcessModel(bank=bank)


def k_agg_matrix(model: AggregatedProcessModel, A: Any, B: Any) -> np.ndarray:
    """k_A over A x B."""
    spec = model.bank.spec
    a = as_points(A, spec.dim)
    b = as_points(B, spec.dim)
    WA = nested_weight_rows(model.bank, a)
    WB = WA if b is a else nested_weight_rows(model.bank, b)
    return model._k_agg(a, WA, b, WB)


def k_agg(model: AggregatedProcessModel, x: Any, x_prime: Any) -> float:
    """
    Prior covariance k_A(x, x') of the aggregated process.

    k_A agrees with k whenever one argument is a design point and differs
    from it in between, so Y_A is not stationary.

    Args:
        model: Aggregated process
        x: First point
        x_prime: Second point

    Returns:
        k_A(x, x') as a float

    Examples:
        >>> k_agg(model, 0.12, 0.85) == k_agg(model, 0.85, 0.12)  # True
        >>> k_agg(model, 0.64, 0.5)  # k(0.64, 0.5): 0.5 is in the design
    """
    dim = model.bank.spec.dim
    return float(k_agg_matrix(model, as_point(x, dim), as_point(x_prime, dim))[0, 0])


def c_agg_matrix(model: AggregatedProcessModel, A: Any, B: Any) -> np.ndarray:
    """c_A over A x B."""
    spec = model.bank.spec
    a = as_points(A, spec.dim)
    b = as_points(B, spec.dim)
    X = model.bank.X
    WX = model.design_weights
    WA = nested_weight_rows(model.bank, a)
    WB = WA if b is a else nested_weight_rows(model.bank, b)
    kAB = model._k_agg(a, WA, b, WB)
    kAX = model._k_agg(a, WA, X, WX)
    kXB = kAX.T if b is a else model._k_agg(X, WX, b, WB)
    factor = model.design_factor
    return kAB - factor.half_solve(kAX.T).T @ factor.half_solve(kXB)


def c_agg(model: AggregatedProcessModel, x: Any, x_prime: Any) -> float:
    """
    Conditional covariance c_A(x, x') of Y_A given Y_A(X).

    Args:
        model: Aggregated process
        x: First point
        x_prime: Second point

    Returns:
        c_A(x, x'); c_A(x, x) is the nested variance v_A(x) when M_A interpolates
    """
    dim = model.bank.spec.dim
    return float(c_agg_matrix(model, as_point(x, dim), as_point(x_prime, dim))[0, 0])


def conditional_mean(model: AggregatedProcessModel, points: Any, fX: Any) -> np.ndarray:
    """m_A = k_A(x,X) k_A(X,X)^{-1} fX for every row of ``points``."""
    spec = model.bank.spec
    pts = as_points(points, spec.dim)
    values = np.asarray(fX, dtype=float).ravel()
    if values.size != model.bank.n:
        raise ArgumentError(f"fX has {values.size} values, design has {model.bank.n}")
    W = nested_weight_rows(model.bank, pts)
    kPX = model._k_agg(pts, W, model.bank.X, model.design_weights)
    return kPX @ model.design_factor.solve(values)


def covariance_gap(model: AggregatedProcessModel, A: Any, B: Any) -> float:
    """max |k_A - k| over A x B."""
    spec = model.bank.spec
    return float(np.max(np.abs(k_agg_matrix(model, A, B) - kernel_matrix(spec, A, B))))


def _square_root(cov: np.ndarray, method: str) -> np.ndarray:
    if method == "eigh":
        vals, vecs = np.linalg.eigh(cov)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))
    try:
        return jittered_cholesky(cov, label="sampling covariance").chol
    except FactorizationFailed as exc:
        raise SamplingError(
            f"sampling covariance not factorizable up to jitter {exc.last_jitter:.3e}"
        ) from exc


def sample_paths(
    model: AggregatedProcessModel,
    grid: Any,
    count: int,
    seed: int,
    conditional: bool = False,
    fX: Optional[Any] = None,
    method: str = "chol",
) -> np.ndarray:
    """
    Draw ``count`` paths of Y_A on ``grid``; returns a count x |grid| matrix.

    Unconditional paths are N(0, k_A(grid,grid)); conditional ones are
    N(m_A(grid), c_A(grid,grid)) given Y_A(X) = fX.
    """
    if count < 1:
        raise ArgumentError(f"count must be >= 1, got {count}")
    if method not in SAMPLING_METHODS:
        raise ArgumentError(f"sampling method must be one of {SAMPLING_METHODS}")
    pts = as_points(grid, model.bank.spec.dim)
    if conditional:
        if fX is None:
            raise ArgumentError("conditional sampling needs fX")
        mean = conditional_mean(model, pts, fX)
        cov = c_agg_matrix(model, pts, pts)
    else:
        mean = np.zeros(pts.shape[0])
        cov = k_agg_matrix(model, pts, pts)
    root = _square_root(symmetric_part(cov), method)
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((root.shape[1], count))
    kind = "conditional" if conditional else "prior"
    LOGGER.debug("drew %d %s paths on %d points", count, kind, pts.shape[0])
    return mean[None, :] + (root @ draws).T
