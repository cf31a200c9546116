"""
Aggregation rules that weight submodels by their variances only.

All four rules produce M_A(x) = sum_k alpha_k M_k(x) with

    alpha_k = beta_k / v_k / D

- PoE:   beta = 1,                              D = sum beta_i / v_i
- gPoE:  beta_i = (log v_prior - log v_i) / 2,  D = sum beta_i / v_i
- BCM:   beta = 1,                              D = sum beta_i / v_i + (1 - sum beta_i) / v_prior
- rBCM:  beta_i = (log v_prior - log v_i) / 2,  D as for BCM

Since M(x) = Lambda(x) Y(X), the aggregate is the linear predictor
(Lambda(x)^T alpha) . Y(X); the effective weights feed exact MSE analysis.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Union

import numpy as np

from nestedkrig.errors import ArgumentError, DegenerateWeightsError
from nestedkrig.submodels import SubmodelBank, predict_submodels

# v_k is floored at VARIANCE_FLOOR * v_prior before any log or division
VARIANCE_FLOOR = 1e-12


class AggregationMethod(str, Enum):
    """Aggregation rules; every member but NESTED is variance-based."""

    POE = "poe"
    GPOE = "gpoe"
    BCM = "bcm"
    RBCM = "rbcm"
    NESTED = "nested"

    @classmethod
    def parse(cls, name: Union[str, "AggregationMethod"]) -> "AggregationMethod":
        """Accept enum members and lower-case values."""
        if isinstance(name, AggregationMethod):
            return name
        key = str(name).strip().lower()
        for member in cls:
            if key == member.value:
                return member
        raise ArgumentError(f"unknown aggregation method {name!r}")

    @property
    def variance_based(self) -> bool:
        """Whether the weights depend on the submodel variances only."""
        return self is not AggregationMethod.NESTED

    @property
    def log_weighted(self) -> bool:
        """gPoE and rBCM weight each expert by beta_i = 1/2 log(k(x,x) / v_i)."""
        return self in (AggregationMethod.GPOE, AggregationMethod.RBCM)

    @property
    def prior_corrected(self) -> bool:
        """BCM and rBCM add (1 - sum beta_i) / k(x,x) to the precision sum."""
        return self in (AggregationMethod.BCM, AggregationMethod.RBCM)


VARIANCE_METHODS = tuple(m for m in AggregationMethod if m.variance_based)


@dataclass(frozen=True)
class VarianceAggregate:
    """Result of a variance-based rule at one point."""

    method: AggregationMethod
    mean: float
    alphas: np.ndarray  # (p,)
    effective_weights: np.ndarray  # (n,), mean = effective_weights . y


def _require_variance_method(method: Union[str, AggregationMethod]) -> AggregationMethod:
    parsed = AggregationMethod.parse(method)
    if not parsed.variance_based:
        raise ArgumentError(f"{parsed.value} is not a variance-based rule")
    return parsed


def variance_weights(
    method: Union[str, AggregationMethod], vars: Any, v_prior: float
) -> np.ndarray:
    """Return the aggregation weights alpha_1..alpha_p for one prediction point."""
    rule = _require_variance_method(method)
    if not v_prior > 0:
        raise ArgumentError(f"v_prior must be > 0, got {v_prior}")
    v = np.asarray(vars, dtype=float).ravel()
    if v.size == 0:
        raise ArgumentError("need at least one submodel variance")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ArgumentError("submodel variances must be finite and >= 0")
    v = np.maximum(v, VARIANCE_FLOOR * v_prior)

    if rule.log_weighted:
        # v_i <= v_prior analytically; negative beta is rounding noise
        beta = np.maximum(0.5 * (np.log(v_prior) - np.log(v)), 0.0)
    else:
        beta = np.ones_like(v)

    precision = beta / v
    denom = float(np.sum(precision))
    if rule.prior_corrected:
        denom += (1.0 - float(np.sum(beta))) / v_prior
    if not np.isfinite(denom) or denom <= 0.0:
        raise DegenerateWeightsError(
            f"{rule.value} weight denominator is {denom:.3e}; weights undefined"
        )
    return precision / denom


def aggregate_variance_based(
    bank: SubmodelBank, method: Union[str, AggregationMethod], x: Any
) -> VarianceAggregate:
    """
    Combine the submodel means with weights depending on their variances only.

    Args:
        bank: Fitted submodels on disjoint groups
        method: One of poe, gpoe, bcm, rbcm
        x: Prediction point

    Returns:
        VarianceAggregate with the weights alpha_i and the effective weights
        Lambda(x)^T alpha over Y(X)

    Raises:
        PartitionError: when groups overlap
        DegenerateWeightsError: when a BCM denominator is not positive

    Examples:
        >>> agg = aggregate_variance_based(bank, "poe", 0.42)
        >>> agg.alphas.sum()  # 1.0 for poe, any value for bcm
    """
    rule = _require_variance_method(method)
    bank.partition.require_disjoint()
    pred = predict_submodels(bank, x)
    alphas = variance_weights(rule, pred.vars, bank.spec.variance)
    return VarianceAggregate(
        method=rule,
        mean=float(alphas @ pred.means),
        alphas=alphas,
        effective_weights=pred.lam.T @ alphas,
    )
