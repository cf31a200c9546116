"""
Nested Kriging: the best linear combination of the submodel predictors.

With M(x) = Lambda(x) Y(X) every second moment is available in closed form:

    k_M(x) = Cov(M(x), Y(x))  = Lambda(x) k(X,x)
    K_M(x) = Cov(M(x), M(x))  = Lambda(x) k(X,X) Lambda(x)^T

and the aggregate is

    M_A(x) = k_M(x)^T K_M(x)^{-1} M(x)
    v_A(x) = k(x,x) - k_M(x)^T K_M(x)^{-1} k_M(x)

K_M(x) is exactly singular when submodels share the point x (they all return
the same observation), so its factorization uses a small escalating ridge.
"""

import logging
from dataclasses import dataclass
from typing import Any, Optional, Tuple

import numpy as np

from nestedkrig.errors import SingularAggregationError
from nestedkrig.gp_core import clamp_variance
from nestedkrig.kernels import as_point, as_points
from nestedkrig.linalg import (
    Factorization,
    FactorizationFailed,
    jittered_cholesky,
    most_correlated_pair,
    symmetric_part,
)
from nestedkrig.parallel import parallel_map
from nestedkrig.submodels import SubmodelBank, submodel_half_weights, weight_matrix

LOGGER = logging.getLogger(__name__)

# ridge on K_M(x), relative to trace(K_M)/p
RIDGE_START = 1e-12
RIDGE_MAX = 1e-6
# at or below this trace no submodel sees x: return the prior
BLIND_TRACE = 1e-300


@dataclass(frozen=True)
class NestedPrediction:
    """Nested Kriging output at one point together with its second moments."""

    mean: float
    variance: float
    kM: np.ndarray  # (p,)
    KM: np.ndarray  # (p, p)
    means: np.ndarray  # M(x), (p,)
    weights: np.ndarray  # K_M^{-1} k_M, (p,)
    effective_weights: np.ndarray  # (n,), mean = effective_weights . y
    ridge: float = 0.0


def cross_covariances(bank: SubmodelBank, x: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Return (k_M(x), K_M(x), Lambda(x)).

    With a_i = L_i^{-1} k(X_i,x) and W the whitened group covariance of the
    bank, k_M[i] = K_M[i,i] = a_i^T a_i and K_M[i,j] = a_i^T W_ij a_j. The
    diagonal then matches k(x,x) - v_i(x) to rounding, and K_M stays positive
    semi-definite up to the rounding of W instead of that of the triple
    product Lambda k(X,X) Lambda^T.

    Args:
        bank: Fitted submodels
        x: Prediction point

    Returns:
        k_M(x) of shape (p,), K_M(x) of shape (p, p) and Lambda(x) of shape (p, n)
    """
    point = as_point(x, bank.spec.dim)
    halves = submodel_half_weights(bank, point)
    white = bank.whitened_cov
    bounds = bank.group_bounds
    kM = np.array([float(a @ a) for a in halves])
    projected = np.empty((white.shape[0], bank.p))
    for k, ((start, stop), a) in enumerate(zip(bounds, halves)):
        projected[:, k] = white[:, start:stop] @ a
    KM = np.empty((bank.p, bank.p))
    for k, ((start, stop), a) in enumerate(zip(bounds, halves)):
        KM[k] = a @ projected[start:stop]
    KM = symmetric_part(KM)
    np.fill_diagonal(KM, kM)
    return kM, KM, weight_matrix(bank, halves)


def factorize_submodel_cov(KM: np.ndarray) -> Optional[Factorization]:
    """
    Factorize K_M(x) under the ridge policy.

    Returns None when K_M is identically zero (no submodel carries any
    information at x).
    """
    p = KM.shape[0]
    if float(np.trace(KM)) <= BLIND_TRACE:
        return None
    try:
        return jittered_cholesky(KM, start=RIDGE_START, maximum=RIDGE_MAX, label="K_M(x)")
    except FactorizationFailed as exc:
        pair = most_correlated_pair(KM)
        detail = f"; submodels {pair[0]} and {pair[1]} are redundant" if pair else ""
        raise SingularAggregationError(
            f"K_M(x) ({p}x{p}) singular up to ridge {exc.last_jitter:.3e}{detail}",
            pair=pair,
        ) from exc


def nested_predict(bank: SubmodelBank, x: Any) -> NestedPrediction:
    """
    Aggregate the submodels at ``x`` into M_A(x) and v_A(x).

    K_M(x) is factorized under the ridge policy. When no submodel sees ``x``
    the prior is returned: mean 0 and variance k(x,x).

    Args:
        bank: Fitted submodels (groups may overlap)
        x: Prediction point

    Returns:
        NestedPrediction with v_full(x) <= v_A(x) <= min_i v_i(x)

    Raises:
        SingularAggregationError: when K_M(x) stays singular at the largest ridge

    Examples:
        >>> setup = five_point_setup()
        >>> bank = fit_submodels(setup.spec, setup.X, setup.y, setup.partition)
        >>> nested_predict(bank, 0.7).mean  # y(0.7): M_A interpolates
        >>> nested_predict(bank, 0.7).variance  # 0.0
    """
    point = as_point(x, bank.spec.dim)
    kM, KM, lam = cross_covariances(bank, point)
    prior = bank.spec.variance
    factor = factorize_submodel_cov(KM)
    if factor is None:
        LOGGER.debug("no submodel informative at %s; returning the prior", point)
        z = np.zeros(bank.p)
        variance = prior
        ridge = 0.0
    else:
        z = factor.solve(kM)
        variance = clamp_variance(prior - float(kM @ z), prior, what="v_A(x)")
        ridge = factor.jitter
    means = lam @ bank.y
    effective = lam.T @ z
    return NestedPrediction(
        mean=float(z @ means),
        variance=variance,
        kM=kM,
        KM=KM,
        means=means,
        weights=z,
        effective_weights=effective,
        ridge=ridge,
    )


def nested_predict_batch(bank: SubmodelBank, points: Any) -> Tuple[np.ndarray, np.ndarray]:
    """Means and variances of nested_predict over the rows of ``points``."""
    pts = as_points(points, bank.spec.dim)
    preds = parallel_map(lambda row: nested_predict(bank, row), list(pts))
    return (
        np.array([p.mean for p in preds]),
        np.array([p.variance for p in preds]),
    )


def nested_weight_rows(bank: SubmodelBank, points: Any) -> np.ndarray:
    """Stack the effective weight vectors w(x) of the rows of ``points``."""
    pts = as_points(points, bank.spec.dim)
    preds = parallel_map(lambda row: nested_predict(bank, row), list(pts))
    return np.vstack([p.effective_weights for p in preds])
