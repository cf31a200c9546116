"""
Error identities and bounds comparing the nested aggregate to full Kriging.

With M(x) = Lambda(x) Y(X), K = k(X,X) and

    Delta(x) = K^{-1} - Lambda(x)^T (Lambda(x) K Lambda(x)^T)^{-1} Lambda(x)

the gaps are quadratic forms in Delta(x):

    M_A(x) - M_full(x) = -k(x,X) Delta(x) Y(X)
    v_A(x) - v_full(x) =  k(x,X) Delta(x) k(X,x)

This module evaluates both sides of those identities, the max-error bounds,
the variance sandwich and the covariance-difference form of the errors, plus
``exact_mse``: the closed-form mean square error of any linear predictor.
"""

import logging
from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np
import pandas as pd

from nestedkrig.aggregated_process import AggregatedProcessModel, k_agg_matrix
from nestedkrig.datasets import points_frame
from nestedkrig.errors import ArgumentError, NegativeVarianceError, PartitionError
from nestedkrig.gp_core import VARIANCE_TOL
from nestedkrig.kernels import KernelSpec, as_point, as_points, kernel_matrix, kernel_vector
from nestedkrig.linalg import symmetric_part
from nestedkrig.nested_aggregator import (
    NestedPrediction,
    cross_covariances,
    factorize_submodel_cov,
    nested_predict,
)
from nestedkrig.parallel import parallel_map
from nestedkrig.submodels import SubmodelBank

LOGGER = logging.getLogger(__name__)

# the ||.||_K <= ||.|| / lambda_min check is skipped below this relative level
ILL_CONDITIONED = 1e-12


@dataclass(frozen=True)
class ErrorReport:
    """Gaps between the nested aggregate and full Kriging at one point."""

    x: np.ndarray
    mean_gap_rms: float  # sqrt(E[(M_A - M_full)^2])
    var_gap: float  # v_A - v_full
    sandwich_hi: float  # min_k E[(Y - M_k)^2] - v_full
    mean_identity_residual: float
    var_identity_residual: float
    lambda_min: float


@dataclass(frozen=True)
class BoundCheck:
    """Max-error bounds at one point with lambda = mu = ||Delta(x)||_op."""

    mean_gap: float
    var_gap: float
    op_norm: float
    kx_norm: float
    y_norm: float
    mean_bound: float
    var_bound: float
    sandwich_hi: float
    mean_ok: bool
    var_ok: bool
    sandwich_ok: bool

    @property
    def holds(self) -> bool:
        """Whether both bounds and the sandwich hold."""
        return self.mean_ok and self.var_ok and self.sandwich_ok


# ===== CLOSED-FORM MSE =====


def exact_mse(weights: Any, x0: Any, spec: KernelSpec, X: Any) -> float:
    """E[(Y(x0) - w^T Y(X))^2] = k(x0,x0) - 2 w^T k(X,x0) + w^T k(X,X) w."""
    pts = as_points(X, spec.dim)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != pts.shape[0]:
        raise ArgumentError(f"{w.size} weights for {pts.shape[0]} design points")
    point = as_point(x0, spec.dim)
    prior = spec.variance
    kx = kernel_vector(spec, pts, point)
    value = prior - 2.0 * float(w @ kx) + float(w @ kernel_matrix(spec, pts, pts) @ w)
    if value < 0.0:
        if value < -VARIANCE_TOL * max(prior, 1.0):
            raise NegativeVarianceError(f"mean square error {value:.3e} is negative")
        return 0.0
    return value


def nearest_neighbor_mse(spec: KernelSpec, X: Any, x: Any) -> float:
    """MSE of predicting Y(x) from its nearest design point alone."""
    pts = as_points(X, spec.dim)
    point = as_point(x, spec.dim)
    nearest = pts[int(np.argmin(np.sum((pts - point) ** 2, axis=1)))]
    prior = spec.variance
    k_nn = float(kernel_vector(spec, nearest[None, :], nearest)[0])
    if k_nn <= 0.0:
        return prior
    cross = float(kernel_vector(spec, nearest[None, :], point)[0])
    return max(prior - cross**2 / k_nn, 0.0)


def submodel_mse(pred: NestedPrediction, prior: float) -> np.ndarray:
    """E[(Y(x) - M_k(x))^2] = k(x,x) - 2 k_M,k + K_M,kk for every submodel."""
    return prior - 2.0 * pred.kM + np.diag(pred.KM)


# ===== DELTA AND IDENTITIES =====


def _full_inverse(bank: SubmodelBank) -> np.ndarray:
    return symmetric_part(bank.full_factor.solve(np.eye(bank.n)))


def delta_matrix(bank: SubmodelBank, x: Any) -> np.ndarray:
    """Delta(x) = K^{-1} - Lambda^T (Lambda K Lambda^T)^{-1} Lambda."""
    point = as_point(x, bank.spec.dim)
    _, KM, lam = cross_covariances(bank, point)
    factor = factorize_submodel_cov(KM)
    k_inv = _full_inverse(bank)
    if factor is None:
        return k_inv
    half = factor.half_solve(lam)
    return symmetric_part(k_inv - half.T @ half)


def _norm_k(bank: SubmodelBank, u: np.ndarray) -> float:
    half = bank.full_factor.half_solve(u)
    return float(half @ half)


def covariance_gap_identities(bank: SubmodelBank, x: Any) -> Tuple[float, float, float, float]:
    """
    Both sides of the errors-as-covariance-differences identities.

    Returns (lhs_mean, rhs_mean, lhs_var, rhs_var) with

        lhs_mean = E[(M_A - M_full)^2],  rhs_mean = ||k(X,x) - k_A(X,x)||_K^2
        lhs_var  = v_A - v_full,         rhs_var  = ||k(X,x)||_K^2 - ||k_A(X,x)||_K^2

    The identities need M_A to interpolate at X, i.e. every design row in
    some group.
    """
    if not bank.partition.covers():
        raise PartitionError(
            "covariance-difference identities need every design row in some group"
        )
    spec = bank.spec
    point = as_point(x, spec.dim)
    nested = nested_predict(bank, point)
    kx = kernel_vector(spec, bank.X, point)
    w_full = bank.full_factor.solve(kx)
    v_full = max(spec.variance - float(kx @ w_full), 0.0)

    gap = nested.effective_weights - w_full
    lhs_mean = max(float(gap @ bank.kXX @ gap), 0.0)
    lhs_var = nested.variance - v_full

    kA = k_agg_matrix(AggregatedProcessModel(bank=bank), bank.X, point)[:, 0]
    rhs_mean = _norm_k(bank, kx - kA)
    rhs_var = _norm_k(bank, kx) - _norm_k(bank, kA)
    return lhs_mean, rhs_mean, lhs_var, rhs_var


def smallest_eigenvalue(bank: SubmodelBank) -> float:
    """Smallest eigenvalue of k(X,X)."""
    return float(np.linalg.eigvalsh(bank.kXX)[0])


def norm_k_bound_applies(bank: SubmodelBank, lambda_min: float) -> bool:
    """Whether ||u||_K^2 <= ||u||^2 / lambda_min is meaningful for this design."""
    trace = float(np.trace(bank.kXX))
    return lambda_min >= ILL_CONDITIONED * trace / bank.n


def error_report(bank: SubmodelBank, x: Any) -> ErrorReport:
    """
    Gaps, identity residuals and the variance sandwich at ``x``.

    Args:
        bank: Fitted submodels whose groups cover the design
        x: Prediction point

    Returns:
        ErrorReport; both identity residuals are rounding noise on a healthy
        design and var_gap lies in [0, sandwich_hi]

    Examples:
        >>> report = error_report(bank, 0.85)
        >>> report.mean_identity_residual < 1e-8  # True
        >>> 0.0 <= report.var_gap <= report.sandwich_hi  # True
    """
    point = as_point(x, bank.spec.dim)
    lhs_mean, rhs_mean, lhs_var, rhs_var = covariance_gap_identities(bank, point)
    nested = nested_predict(bank, point)
    kx = kernel_vector(bank.spec, bank.X, point)
    v_full = max(bank.spec.variance - float(kx @ bank.full_factor.solve(kx)), 0.0)
    sandwich_hi = float(np.min(submodel_mse(nested, bank.spec.variance))) - v_full
    return ErrorReport(
        x=point,
        mean_gap_rms=float(np.sqrt(lhs_mean)),
        var_gap=lhs_var,
        sandwich_hi=sandwich_hi,
        mean_identity_residual=abs(lhs_mean - rhs_mean),
        var_identity_residual=abs(lhs_var - rhs_var),
        lambda_min=smallest_eigenvalue(bank),
    )


# ===== BOUNDS =====


def max_error_bound_check(bank: SubmodelBank, x: Any, y: Any, slack: float = 1e-10) -> BoundCheck:
    """
    Check the max-error bounds and the variance sandwich at ``x``.

    The admissible constants are fixed to lambda = mu = ||Delta(x)||_op, for
    which both bounds follow from Cauchy-Schwarz.
    """
    spec = bank.spec
    point = as_point(x, spec.dim)
    values = np.asarray(y, dtype=float).ravel()
    if values.size != bank.n:
        raise ArgumentError(f"{values.size} observations for {bank.n} design points")
    nested = nested_predict(bank, point)
    kx = kernel_vector(spec, bank.X, point)
    w_full = bank.full_factor.solve(kx)
    v_full = max(spec.variance - float(kx @ w_full), 0.0)

    delta = delta_matrix(bank, point)
    op_norm = float(np.max(np.abs(np.linalg.eigvalsh(delta))))
    kx_norm = float(np.linalg.norm(kx))
    y_norm = float(np.linalg.norm(values))

    mean_gap = float(nested.effective_weights @ values - w_full @ values)
    var_gap = nested.variance - v_full
    mean_bound = op_norm * kx_norm * y_norm
    var_bound = op_norm * kx_norm**2
    sandwich_hi = float(np.min(submodel_mse(nested, spec.variance))) - v_full
    return BoundCheck(
        mean_gap=mean_gap,
        var_gap=var_gap,
        op_norm=op_norm,
        kx_norm=kx_norm,
        y_norm=y_norm,
        mean_bound=mean_bound,
        var_bound=var_bound,
        sandwich_hi=sandwich_hi,
        mean_ok=abs(mean_gap) <= mean_bound * (1.0 + 1e-8) + slack,
        var_ok=abs(var_gap) <= var_bound * (1.0 + 1e-8) + slack,
        sandwich_ok=-1e-8 <= var_gap <= sandwich_hi + 1e-8,
    )


def bounds_report(bank: SubmodelBank, grid: Any) -> pd.DataFrame:
    """
    Per-point table of the aggregation error panels.

    Columns: coordinates, mean_gap (M_A - M_full with the bank's data),
    mean_gap_bound (lambda_min^{-1/2} ||k(X,x) - k_A(X,x)||), var_gap and
    var_gap_upper (min_k E[(Y - M_k)^2] - v_full).
    """
    spec = bank.spec
    pts = as_points(grid, spec.dim)
    model = AggregatedProcessModel(bank=bank)
    lambda_min = smallest_eigenvalue(bank)
    if norm_k_bound_applies(bank, lambda_min):
        inv_sqrt = 1.0 / np.sqrt(lambda_min)
    else:
        LOGGER.warning(
            "lambda_min = %.3e is ill-conditioned; mean_gap_bound left empty", lambda_min
        )
        inv_sqrt = np.nan
    kA = k_agg_matrix(model, bank.X, pts)
    kX = kernel_matrix(spec, bank.X, pts)

    def row(j: int) -> Tuple[float, float, float, float]:
        nested = nested_predict(bank, pts[j])
        w_full = bank.full_factor.solve(kX[:, j])
        v_full = max(spec.variance - float(kX[:, j] @ w_full), 0.0)
        upper = float(np.min(submodel_mse(nested, spec.variance))) - v_full
        return (
            nested.mean - float(w_full @ bank.y),
            inv_sqrt * float(np.linalg.norm(kX[:, j] - kA[:, j])),
            nested.variance - v_full,
            upper,
        )

    rows = parallel_map(row, range(pts.shape[0]))
    frame = points_frame(pts, spec.dim)
    values = np.array(rows).reshape(-1, 4)
    for col, name in enumerate(["mean_gap", "mean_gap_bound", "var_gap", "var_gap_upper"]):
        frame[name] = values[:, col]
    return frame
