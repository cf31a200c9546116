"""
Finite-n studies of consistency for the nested aggregate and of
non-consistency for variance-based aggregation.

Every predictor involved is linear in Y(X) with deterministic weights, so
all mean square errors are evaluated in closed form with ``exact_mse``.

Adversarial design for a point x0 and a ball B(xbar, r) away from it:

- p_n = ceil(n^0.8) groups, k_n = ceil(n^0.2) of which hold space-filling
  points u_j kept at distance >= delta_n from x0
- C_n = the largest m with m (p_n - 1) < n
- groups 1..k_n: consecutive blocks of C_n u's
- groups k_n+1..p_n: consecutive blocks of C_n points w_j = xbar - r/(1+j) e1,
  the last block taking the remainder

Variance-based rules see p_n - k_n groups that all report the same moderate
variance at x0 and give them most of the weight, so their error at x0 stays
bounded away from zero while the nested aggregate keeps improving.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import qmc

from nestedkrig.datasets import make_design, regular_grid
from nestedkrig.diagnostics import exact_mse, nearest_neighbor_mse
from nestedkrig.errors import ArgumentError, KernelNotQualifiedError, NumericalError
from nestedkrig.gp_core import factorize_design
from nestedkrig.kernels import (
    KernelSpec,
    PointSet,
    as_point,
    as_points,
    eval_kernel,
    kernel_vector,
    neb_qualified,
)
from nestedkrig.nested_aggregator import nested_predict, nested_predict_batch
from nestedkrig.parallel import parallel_map
from nestedkrig.submodels import (
    Partition,
    PartitionStrategy,
    SubmodelBank,
    fit_submodels,
    make_partition,
    predict_submodels,
)
from nestedkrig.variance_aggregators import AggregationMethod, aggregate_variance_based

LOGGER = logging.getLogger(__name__)

# relative slack for the full <= nested <= method ordering (jitter on clustered designs)
ORDER_TOL = 1e-8
# u-points closer than this to a w-point are dropped
COINCIDENCE_TOL = 1e-12
MAX_SEQUENCE_DRAWS = 1_000_000


def _ceil_power(n: int, exponent: float) -> int:
    # n^0.8 for n = 32 is 16.000000000000004 in floating point
    return int(math.ceil(n**exponent - 1e-9))


# ===== ADVERSARIAL DESIGN =====


@dataclass(frozen=True)
class NonConsistencyConfig:
    """Adversarial setup on the unit cube [0, 1]^d."""

    spec: KernelSpec
    x0: np.ndarray
    xbar: np.ndarray
    r: float
    n_values: Tuple[int, ...]
    method: AggregationMethod = AggregationMethod.POE
    delta_exponent: float = 0.25
    gap_factor: float = 2.0
    retention: float = 0.5
    ratio: float = 10.0
    grid_count: int = 101

    def __post_init__(self) -> None:
        spec = self.spec
        if not neb_qualified(spec):
            raise KernelNotQualifiedError(
                f"kernel not neb-qualified: {spec.family.value} has no empty-ball property"
            )
        x0 = as_point(self.x0, spec.dim)
        xbar = as_point(self.xbar, spec.dim)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xbar", xbar)
        method = AggregationMethod.parse(self.method)
        if not method.variance_based:
            raise ArgumentError("the non-consistency study targets poe, gpoe, bcm or rbcm")
        object.__setattr__(self, "method", method)

        if eval_kernel(spec, x0, xbar) <= 0.0:
            raise ArgumentError("need k(x0, xbar) > 0")
        distance = float(np.linalg.norm(x0 - xbar))
        if not 0.0 < self.r < distance / 4.0:
            raise ArgumentError(
                f"need 0 < r < |x0 - xbar| / 4 = {distance / 4.0:.6g}, got r={self.r}"
            )
        if np.any(x0 < 0.0) or np.any(x0 > 1.0):
            raise ArgumentError("x0 must lie in the unit cube")
        if np.any(xbar > 1.0) or np.any(xbar < 0.0) or xbar[0] - self.r < 0.0:
            raise ArgumentError("the ball B(xbar, r) must lie in the unit cube along e1")

        sizes = tuple(int(n) for n in self.n_values)
        if not sizes:
            raise ArgumentError("n_values is empty")
        if min(sizes) < 4:
            raise ArgumentError("every design size must be >= 4")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ArgumentError(f"n_values must be increasing, got {sizes}")
        object.__setattr__(self, "n_values", sizes)
        if self.grid_count < 2:
            raise ArgumentError("grid_count must be >= 2")


def adversarial_sizes(n: int) -> Tuple[int, int, int]:
    """Return (p_n, k_n, C_n)."""
    if n < 4:
        raise ArgumentError(f"adversarial design needs n >= 4, got {n}")
    p = _ceil_power(n, 0.8)
    k = _ceil_power(n, 0.2)
    block = (n - 1) // (p - 1)
    return p, k, block


def exclusion_radius(cfg: NonConsistencyConfig, n: int) -> float:
    """delta_n = max(n^-delta_exponent, gap_factor * n^(-1/d))."""
    dim = cfg.spec.dim
    return max(n ** (-cfg.delta_exponent), cfg.gap_factor * n ** (-1.0 / dim))


def cluster_points(cfg: NonConsistencyConfig, count: int) -> PointSet:
    """w_j = xbar - r / (1 + j) e1 for j = 1..count."""
    j = np.arange(1, count + 1, dtype=float)
    pts = np.tile(cfg.xbar, (count, 1))
    pts[:, 0] -= cfg.r / (1.0 + j)
    return pts


def space_filling_points(
    count: int, x0: np.ndarray, delta: float, avoid: PointSet
) -> PointSet:
    """
    First ``count`` points of the unscrambled Halton sequence (van der Corput
    in 1-d) at distance >= delta from x0 and not coinciding with ``avoid``.
    """
    dim = x0.size
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    kept: List[np.ndarray] = []
    drawn = 0
    while len(kept) < count:
        if drawn >= MAX_SEQUENCE_DRAWS:
            raise ArgumentError(
                f"only {len(kept)} of {count} sequence points lie outside B(x0, {delta:.4g})"
            )
        batch = sampler.random(max(2 * count, 64))
        drawn += batch.shape[0]
        far = np.linalg.norm(batch - x0, axis=1) >= delta
        if avoid.shape[0]:
            gaps = np.min(np.abs(batch[:, None, :] - avoid[None, :, :]).max(axis=2), axis=1)
            far &= gaps > COINCIDENCE_TOL
        kept.extend(batch[far])
    return np.asarray(kept[:count])


def build_adversarial_design(cfg: NonConsistencyConfig, n: int) -> Tuple[PointSet, Partition]:
    """Rows 0..k_n C_n - 1 are u-points, the rest are w-points."""
    p, k, block = adversarial_sizes(n)
    n_u = k * block
    n_w = n - n_u
    w = cluster_points(cfg, n_w)
    u = space_filling_points(n_u, cfg.x0, exclusion_radius(cfg, n), avoid=w)
    X = np.vstack([u, w])

    groups: List[Tuple[int, ...]] = []
    for i in range(k):
        groups.append(tuple(range(i * block, (i + 1) * block)))
    for i in range(p - k - 1):
        start = n_u + i * block
        groups.append(tuple(range(start, start + block)))
    groups.append(tuple(range(n_u + (p - k - 1) * block, n)))
    LOGGER.debug("adversarial design n=%d: p=%d k=%d C=%d, %d u-points", n, p, k, block, n_u)
    return X, Partition(groups=tuple(groups), n=n)


# ===== REPORTS =====


@dataclass(frozen=True)
class NonConsistencyRecord:
    """One design size of the adversarial study; ``error`` is empty on success."""

    n: int
    p_n: int
    k_n: int
    C_n: int
    delta_n: float
    mse_method_at_x0: float
    mse_nested_at_x0: float
    mse_full_at_x0: float
    sup_grid_mse_nested: float
    eps1: float
    eps2: float
    error: str = ""


@dataclass(frozen=True)
class ConsistencyRecord:
    """One design size of the shrinking-error study."""

    n: int
    p: int
    sup_grid_mse_nested: float
    sup_grid_mse_full: float
    nn_bound: float


Record = Union[NonConsistencyRecord, ConsistencyRecord]


@dataclass(frozen=True)
class ExperimentReport:
    """Records of a study plus its verdicts."""

    kind: str
    records: Tuple[Record, ...]
    verdicts: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        """One row per record, columns in field order."""
        return pd.DataFrame([asdict(rec) for rec in self.records])

    def verdicts_json(self) -> str:
        """Verdicts as sorted, indented JSON with a trailing newline."""
        payload = {"kind": self.kind, **self.verdicts}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# ===== NON-CONSISTENCY =====


def _nonconsistency_record(cfg: NonConsistencyConfig, n: int) -> NonConsistencyRecord:
    spec = cfg.spec
    X, partition = build_adversarial_design(cfg, n)
    p, k, block = adversarial_sizes(n)
    bank = fit_submodels(spec, X, np.zeros(n), partition)

    full_factor = factorize_design(spec, X)
    w_full = full_factor.solve(kernel_vector(spec, X, cfg.x0))
    mse_full = exact_mse(w_full, cfg.x0, spec, X)
    cluster_vars = predict_submodels(bank, cfg.x0).vars[k:]
    eps1 = float(np.min(cluster_vars))
    eps2 = spec.variance - float(np.max(cluster_vars))

    errors: List[str] = []
    try:
        nested = nested_predict(bank, cfg.x0)
        mse_nested = exact_mse(nested.effective_weights, cfg.x0, spec, X)
        _, grid_vars = nested_predict_batch(
            bank, regular_grid(0.0, 1.0, cfg.grid_count, spec.dim)
        )
        sup_nested = float(np.max(grid_vars))
    except NumericalError as exc:
        LOGGER.warning("n=%d: nested aggregation failed: %s", n, exc)
        errors.append(f"nested: {exc}")
        mse_nested = sup_nested = float("nan")
    try:
        agg = aggregate_variance_based(bank, cfg.method, cfg.x0)
        mse_method = exact_mse(agg.effective_weights, cfg.x0, spec, X)
    except NumericalError as exc:
        LOGGER.warning("n=%d: %s", n, exc)
        errors.append(f"{cfg.method.value}: {exc}")
        mse_method = float("nan")

    LOGGER.debug(
        "n=%d: mse %s=%.4g nested=%.4g full=%.4g",
        n,
        cfg.method.value,
        mse_method,
        mse_nested,
        mse_full,
    )
    return NonConsistencyRecord(
        n=n,
        p_n=p,
        k_n=k,
        C_n=block,
        delta_n=exclusion_radius(cfg, n),
        mse_method_at_x0=mse_method,
        mse_nested_at_x0=mse_nested,
        mse_full_at_x0=mse_full,
        sup_grid_mse_nested=sup_nested,
        eps1=eps1,
        eps2=eps2,
        error="; ".join(errors),
    )


def nonconsistency_verdicts(
    records: Sequence[NonConsistencyRecord], prior: float, retention: float, ratio: float
) -> Dict[str, bool]:
    """
    Finite-n proxy for an error bounded away from zero.

    The method's error at the largest n must keep at least ``retention`` of
    its value at the smallest n and exceed ``ratio`` times the nested error,
    while the nested error does not increase.
    """
    tol = ORDER_TOL * prior
    valid = [rec for rec in records if not rec.error]
    ordering_ok = all(
        rec.mse_full_at_x0 <= rec.mse_nested_at_x0 + tol
        and rec.mse_nested_at_x0 <= rec.mse_method_at_x0 + tol
        for rec in valid
    )
    nested = [rec.mse_nested_at_x0 for rec in valid]
    nested_nonincreasing = all(b <= a + tol for a, b in zip(nested, nested[1:]))
    first, last = records[0], records[-1]
    complete = not first.error and not last.error
    retained = complete and last.mse_method_at_x0 >= retention * first.mse_method_at_x0
    dominates = complete and last.mse_method_at_x0 >= ratio * last.mse_nested_at_x0
    design_valid = all(rec.eps1 > 0.0 and rec.eps2 > 0.0 for rec in records)
    return {
        "ordering_ok": ordering_ok,
        "nested_nonincreasing": nested_nonincreasing,
        "method_retained": retained,
        "method_dominates_nested": dominates,
        "adversarial_design_valid": design_valid,
        "nonconsistent_trend": retained and dominates and nested_nonincreasing,
    }


def run_nonconsistency(cfg: NonConsistencyConfig) -> ExperimentReport:
    """
    Run the adversarial study for every size in ``cfg.n_values``.

    Each size builds its own design and bank; the records are independent and
    run through the worker pool. A numerical failure at one size is kept in
    that record's ``error`` column and does not stop the others.

    Args:
        cfg: Validated study configuration

    Returns:
        ExperimentReport of kind ``nonconsistency`` with one record per size and
        the verdicts of nonconsistency_verdicts plus the method name

    Examples:
        >>> cfg = NonConsistencyConfig(make_kernel("matern32", lengthscale=0.15), [0.2], [0.8], 0.1, (50, 100))
        >>> report = run_nonconsistency(cfg)
        >>> report.verdicts["ordering_ok"]  # True
    """
    records = parallel_map(lambda n: _nonconsistency_record(cfg, n), cfg.n_values)
    verdicts: Dict[str, Any] = dict(
        nonconsistency_verdicts(records, cfg.spec.variance, cfg.retention, cfg.ratio)
    )
    verdicts["method"] = cfg.method.value
    LOGGER.info("non-consistency verdicts: %s", verdicts)
    return ExperimentReport(kind="nonconsistency", records=tuple(records), verdicts=verdicts)


# ===== CONSISTENCY =====


def _consistency_design(n: int, grid: PointSet) -> PointSet:
    lower = grid.min(axis=0)
    upper = grid.max(axis=0)
    unit = make_design(n, dim=grid.shape[1], design="equispaced")
    return lower + (upper - lower) * unit


def _consistency_record(
    spec: KernelSpec,
    grid: PointSet,
    n: int,
    strategy: PartitionStrategy,
    seed: int,
    p: Optional[int],
) -> ConsistencyRecord:
    X = _consistency_design(n, grid)
    groups = p if p is not None else int(math.ceil(math.sqrt(n)))
    partition = make_partition(n, groups, strategy, seed=seed, X=X)
    bank: SubmodelBank = fit_submodels(spec, X, np.zeros(n), partition)
    _, nested_vars = nested_predict_batch(bank, grid)

    cross = np.column_stack([kernel_vector(spec, X, x) for x in grid])
    reduction = np.sum(bank.full_factor.half_solve(cross) ** 2, axis=0)
    full_vars = np.maximum(spec.variance - reduction, 0.0)
    nn = [nearest_neighbor_mse(spec, X, x) for x in grid]
    LOGGER.debug("n=%d p=%d: sup nested mse %.4g", n, groups, float(np.max(nested_vars)))
    return ConsistencyRecord(
        n=n,
        p=groups,
        sup_grid_mse_nested=float(np.max(nested_vars)),
        sup_grid_mse_full=float(np.max(full_vars)),
        nn_bound=float(np.max(nn)),
    )


def run_consistency(
    spec: KernelSpec,
    domain_grid: Any,
    n_values: Sequence[int],
    partition_rule: Union[str, PartitionStrategy] = PartitionStrategy.RANDOM_BALANCED,
    seed: int = 0,
    p: Optional[int] = None,
) -> ExperimentReport:
    """
    Sup-grid nested MSE on increasingly dense designs.

    Designs are equispaced over the grid's bounding box in 1-d (Halton
    points otherwise) with ceil(sqrt(n)) groups unless ``p`` is given.
    """
    grid = as_points(domain_grid, spec.dim)
    sizes = [int(n) for n in n_values]
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ArgumentError(f"n_values must be nonempty and increasing, got {sizes}")
    strategy = PartitionStrategy.parse(partition_rule)
    records = parallel_map(
        lambda n: _consistency_record(spec, grid, n, strategy, seed, p), sizes
    )
    sups = [rec.sup_grid_mse_nested for rec in records]
    verdicts = {
        "sup_mse_decreasing": all(b < a for a, b in zip(sups, sups[1:])),
        "below_nn_bound": all(
            rec.sup_grid_mse_nested <= rec.nn_bound + 1e-8 for rec in records
        ),
        "tenfold_reduction": sups[-1] < 0.1 * sups[0],
    }
    LOGGER.info("consistency verdicts: %s", verdicts)
    return ExperimentReport(kind="consistency", records=tuple(records), verdicts=verdicts)
