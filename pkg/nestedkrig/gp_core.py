"""
Exact (full) Kriging for a centered Gaussian process.

Given observations y = Y(X), the conditional law of Y(x) is Gaussian with

- mean      M_full(x)    = k(x,X) k(X,X)^{-1} y
- covariance c_full(x,x') = k(x,x') - k(x,X) k(X,X)^{-1} k(X,x')
- variance  v_full(x)    = c_full(x,x)

k(X,X) is factorized once at fit time (with jitter escalation) and every
solve goes through that factor.
"""

import logging
from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np

from nestedkrig.errors import (
    ArgumentError,
    EmptyPointSetError,
    NegativeVarianceError,
    SingularMatrixError,
)
from nestedkrig.kernels import (
    KernelSpec,
    PointSet,
    as_point,
    as_points,
    kernel_matrix,
    kernel_vector,
)
from nestedkrig.linalg import (
    Factorization,
    FactorizationFailed,
    closest_pair,
    jittered_cholesky,
)

LOGGER = logging.getLogger(__name__)

# Variances in [-VARIANCE_TOL * k(x,x), 0) are rounding noise and clamped to 0.
VARIANCE_TOL = 1e-10


@dataclass(frozen=True)
class FullModel:
    """
    Exact Kriging on the whole design.

    ``factor`` holds the lower Cholesky factor of k(X,X) + jitter I;
    ``alpha`` is k(X,X)^{-1} y.

    Examples:
        >>> model = fit_full(make_kernel("matern32", lengthscale=0.2), [[0.1], [0.5]], [1.0, 2.0])
        >>> model.jitter_used  # 0.0
        >>> predict_full(model, 0.5)  # (2.0, 0.0) up to rounding
    """

    spec: KernelSpec
    X: PointSet
    y: np.ndarray
    factor: Factorization
    alpha: np.ndarray  # k(X,X)^{-1} y

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor L with L L^T = k(X,X) + jitter I."""
        return self.factor.chol

    @property
    def jitter_used(self) -> float:
        """Diagonal jitter added to k(X,X), 0.0 when none was needed."""
        return self.factor.jitter


def clamp_variance(value: float, prior: float, what: str = "variance") -> float:
    """Clamp tiny negative variances to 0; larger negativity is an error."""
    if value < 0.0:
        if value < -VARIANCE_TOL * max(prior, 1.0):
            raise NegativeVarianceError(
                f"{what} {value:.3e} below tolerance; factorization is broken"
            )
        return 0.0
    return float(value)


def factorize_design(spec: KernelSpec, X: PointSet, label: str = "k(X,X)") -> Factorization:
    """Factorize k(X,X); on failure name the closest pair of rows."""
    K = kernel_matrix(spec, X, X)
    try:
        return jittered_cholesky(K, label=label)
    except FactorizationFailed as exc:
        pair = closest_pair(X)
        detail = ""
        if pair is not None:
            i, j = pair
            dist = float(np.linalg.norm(X[i] - X[j]))
            detail = f"; closest rows {i} and {j} (distance {dist:.3e})"
        raise SingularMatrixError(
            f"{label} is singular up to jitter {exc.last_jitter:.3e}{detail}",
            pair=pair,
        ) from exc


def fit_full(spec: KernelSpec, X: Any, y: Any) -> FullModel:
    """Factorize k(X,X) and precompute k(X,X)^{-1} y."""
    pts = as_points(X, spec.dim)
    values = np.asarray(y, dtype=float).ravel()
    if pts.shape[0] == 0:
        raise EmptyPointSetError("fit_full needs at least one observation")
    if values.size != pts.shape[0]:
        raise ArgumentError(
            f"{values.size} observations given for {pts.shape[0]} design points"
        )
    factor = factorize_design(spec, pts)
    LOGGER.debug("fitted full model n=%d jitter=%.3e", pts.shape[0], factor.jitter)
    return FullModel(
        spec=spec, X=pts, y=values, factor=factor, alpha=factor.solve(values)
    )


def kriging_weights(model: FullModel, x: Any) -> np.ndarray:
    """Return k(X,X)^{-1} k(X,x), the weights of M_full(x) over y."""
    return model.factor.solve(kernel_vector(model.spec, model.X, x))


def predict_full(model: FullModel, x: Any) -> Tuple[float, float]:
    """Return (M_full(x), v_full(x))."""
    point = as_point(x, model.spec.dim)
    kx = kernel_vector(model.spec, model.X, point)
    mean = float(kx @ model.alpha)
    prior = model.spec.variance
    var = prior - float(kx @ model.factor.solve(kx))
    return mean, clamp_variance(var, prior)


def predict_full_cov(model: FullModel, x: Any, x_prime: Any) -> float:
    """Return c_full(x, x')."""
    spec = model.spec
    kx = kernel_vector(spec, model.X, x)
    kxp = kernel_vector(spec, model.X, x_prime)
    kxx = float(kernel_matrix(spec, as_point(x, spec.dim), as_point(x_prime, spec.dim))[0, 0])
    # solve against the half factor so the result is symmetric in (x, x')
    return kxx - float(model.factor.half_solve(kx) @ model.factor.half_solve(kxp))


def predict_full_batch(model: FullModel, points: Any) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized predict_full over the rows of ``points``."""
    pts = as_points(points, model.spec.dim)
    kx = kernel_matrix(model.spec, model.X, pts)
    means = kx.T @ model.alpha
    half = model.factor.half_solve(kx)
    prior = model.spec.variance
    raw = prior - np.sum(half * half, axis=0)
    variances = np.array([clamp_variance(float(v), prior) for v in raw])
    return means, variances
