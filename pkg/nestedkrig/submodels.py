"""
Partitions of the design and the Kriging submodels built on each group.

Submodel i predicts with the rows X_i of the design only:

    M_i(x) = k(x,X_i) k(X_i,X_i)^{-1} Y(X_i)
    v_i(x) = k(x,x) - k(x,X_i) k(X_i,X_i)^{-1} k(X_i,x)

Stacking the weight rows gives the p x n matrix Lambda(x) with
M(x) = Lambda(x) Y(X).
"""

import json
import logging
import numbers
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, List, Optional, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from nestedkrig.errors import ArgumentError, PartitionError
from nestedkrig.gp_core import clamp_variance, factorize_design
from nestedkrig.kernels import (
    KernelSpec,
    PointSet,
    as_point,
    as_points,
    kernel_matrix,
    kernel_vector,
)
from nestedkrig.linalg import Factorization, symmetric_part
from nestedkrig.parallel import parallel_map

LOGGER = logging.getLogger(__name__)


class PartitionStrategy(str, Enum):
    """How make_partition assigns rows to groups."""

    CONTIGUOUS_BLOCKS = "contiguous"
    RANDOM_BALANCED = "random"
    NEAREST_CENTERS = "nearest"

    @classmethod
    def parse(cls, name: Union[str, "PartitionStrategy"]) -> "PartitionStrategy":
        """Accept enum members, values and member names, case-insensitively."""
        if isinstance(name, PartitionStrategy):
            return name
        key = str(name).strip().lower().replace("-", "_")
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise ArgumentError(f"unknown partition strategy {name!r}")


# ===== PARTITION =====


def _row_index(value: Any, group: int) -> int:
    """Accept integers and integral floats; anything else is a PartitionError."""
    if isinstance(value, (bool, np.bool_)):
        raise PartitionError(f"group {group}: {value!r} is not a row index")
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real) and float(value).is_integer():
        return int(value)
    raise PartitionError(f"group {group}: {value!r} is not an integer row index")


@dataclass(frozen=True)
class Partition:
    """
    Groups of 0-based row indices into the design.

    Groups may overlap (nested aggregation allows any covering family of
    subsets); variance-based rules require a true partition, see
    ``require_disjoint``.
    """

    groups: Tuple[Tuple[int, ...], ...]
    n: int

    def __post_init__(self) -> None:
        groups = tuple(
            tuple(_row_index(i, k) for i in g) for k, g in enumerate(self.groups)
        )
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise PartitionError("a partition needs at least one group")
        for k, g in enumerate(groups):
            if not g:
                raise PartitionError(f"group {k} is empty")
            if len(set(g)) != len(g):
                raise PartitionError(f"group {k} repeats an index")
            if min(g) < 0 or max(g) >= self.n:
                raise PartitionError(f"group {k} has indices outside [0, {self.n})")
        if not self.covers():
            missing = sorted(set(range(self.n)) - set(i for g in groups for i in g))
            raise PartitionError(f"rows {missing[:10]} belong to no group")

    @property
    def p(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> List[int]:
        return [len(g) for g in self.groups]

    def covers(self) -> bool:
        """Whether every row 0..n-1 belongs to some group."""
        return set(i for g in self.groups for i in g) == set(range(self.n))

    def is_disjoint(self) -> bool:
        """Whether no row belongs to two groups."""
        return sum(self.sizes) == len(set(i for g in self.groups for i in g))

    def require_disjoint(self) -> None:
        """Raise PartitionError unless the groups are disjoint."""
        if not self.is_disjoint():
            raise PartitionError(
                "variance-based aggregation is defined on disjoint groups only"
            )

    def to_json(self) -> str:
        return json.dumps({"groups": [list(g) for g in self.groups]})

    @classmethod
    def from_json(cls, text: str, n: Optional[int] = None) -> "Partition":
        """
        Parse ``{"groups": [[indices]...]}``.

        ``n`` defaults to one past the largest index. Every entry must be an
        integer (1.0 is accepted, 1.5 and "1" are not).

        Raises:
            PartitionError: for malformed JSON, non-integral entries or a partition
                that fails validation
        """
        try:
            payload = json.loads(text)
            groups = payload["groups"]
        except (ValueError, KeyError, TypeError) as exc:
            raise PartitionError(f"invalid partition JSON: {exc}") from exc
        if not isinstance(groups, list) or not all(isinstance(g, list) for g in groups):
            raise PartitionError('partition JSON must be {"groups": [[indices]...]}')
        rows = tuple(tuple(_row_index(i, k) for i in g) for k, g in enumerate(groups))
        if n is None:
            n = 1 + max((max(g) for g in rows if g), default=-1)
        return cls(groups=rows, n=n)

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        """One group per row."""
        return cls(groups=tuple((i,) for i in range(n)), n=n)


def _blocks(order: np.ndarray, p: int) -> Tuple[Tuple[int, ...], ...]:
    return tuple(tuple(int(i) for i in chunk) for chunk in np.array_split(order, p))


def _nearest_centers(X: np.ndarray, p: int, rng: np.random.Generator) -> Tuple[Tuple[int, ...], ...]:
    n = X.shape[0]
    centers = rng.choice(n, size=p, replace=False)
    dists = cdist(X, X[centers])
    labels = np.argmin(dists, axis=1)  # first minimum -> lowest center index
    members = [list(np.flatnonzero(labels == k)) for k in range(p)]
    while any(not m for m in members):
        empty = next(k for k, m in enumerate(members) if not m)
        sizes = [len(m) for m in members]
        donor = int(np.argmax(sizes))
        far = max(members[donor], key=lambda i: (dists[i, donor], -i))
        members[donor].remove(far)
        members[empty].append(far)
        LOGGER.debug("moved row %d from group %d to empty group %d", far, donor, empty)
    return tuple(tuple(sorted(int(i) for i in m)) for m in members)


def make_partition(
    n: int,
    p: int,
    strategy: Union[str, PartitionStrategy] = PartitionStrategy.CONTIGUOUS_BLOCKS,
    seed: int = 0,
    X: Optional[Any] = None,
) -> Partition:
    """
    Split rows 0..n-1 into p groups.

    - contiguous: index-ordered blocks whose sizes differ by at most one
    - random: seeded shuffle, then blocks (indices sorted within a group)
    - nearest: p seeded rows as centers, each row to its nearest center
    """
    strategy = PartitionStrategy.parse(strategy)
    if not 1 <= p <= n:
        raise ArgumentError(f"need 1 <= p <= n, got p={p}, n={n}")
    rng = np.random.default_rng(seed)
    if strategy is PartitionStrategy.CONTIGUOUS_BLOCKS:
        groups = _blocks(np.arange(n), p)
    elif strategy is PartitionStrategy.RANDOM_BALANCED:
        groups = tuple(tuple(sorted(g)) for g in _blocks(rng.permutation(n), p))
    else:
        if X is None:
            raise ArgumentError("nearest-centers partitioning needs the design X")
        pts = np.asarray(X, dtype=float)
        pts = pts.reshape(-1, 1) if pts.ndim == 1 else pts
        if pts.shape[0] != n:
            raise ArgumentError(f"X has {pts.shape[0]} rows, expected {n}")
        groups = _nearest_centers(pts, p, rng)
    return Partition(groups=groups, n=n)


# ===== SUBMODEL BANK =====


@dataclass(frozen=True)
class SubmodelPrediction:
    """Submodel means M_i(x), variances v_i(x) and the weight matrix Lambda(x)."""

    means: np.ndarray  # (p,)
    vars: np.ndarray  # (p,)
    lam: np.ndarray  # (p, n)


@dataclass(frozen=True)
class SubmodelBank:
    """
    Design, observations, partition and one Cholesky factor per group.

    Quantities that do not depend on the prediction point (k(X,X), the full
    factor and the whitened cross-covariances between groups) are computed on
    first use and cached.
    """

    spec: KernelSpec
    X: PointSet
    y: np.ndarray
    partition: Partition
    factors: Tuple[Factorization, ...] = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def p(self) -> int:
        return self.partition.p

    @cached_property
    def kXX(self) -> np.ndarray:
        """k(X,X) on the whole design, shared by the cross-covariance algebra."""
        return kernel_matrix(self.spec, self.X, self.X)

    @cached_property
    def full_factor(self) -> Factorization:
        """Cholesky factor of k(X,X) on the whole design, for the diagnostics."""
        return factorize_design(self.spec, self.X)

    @cached_property
    def group_bounds(self) -> Tuple[Tuple[int, int], ...]:
        """[start, stop) of every group in the stacked row order."""
        stops = np.cumsum(self.partition.sizes)
        starts = stops - np.asarray(self.partition.sizes)
        return tuple((int(a), int(b)) for a, b in zip(starts, stops))

    @cached_property
    def whitened_cov(self) -> np.ndarray:
        """
        L^{-1} k(X_s,X_s) L^{-T} over the stacked groups X_s = (X_1, ..., X_p).

        L = blockdiag(L_1, ..., L_p) holds the group factors. Diagonal blocks
        are set to the identity so that K_M(x)[i,i] equals k(x,x) - v_i(x)
        with the same (possibly jittered) factor that defines v_i.
        """
        idx = np.concatenate([np.asarray(g) for g in self.partition.groups])
        K = self.kXX[np.ix_(idx, idx)]
        left = np.empty_like(K)
        for (start, stop), factor in zip(self.group_bounds, self.factors):
            left[start:stop] = factor.half_solve(K[start:stop])
        white = np.empty_like(K)
        for (start, stop), factor in zip(self.group_bounds, self.factors):
            white[:, start:stop] = factor.half_solve(left[:, start:stop].T).T
        for start, stop in self.group_bounds:
            white[start:stop, start:stop] = np.eye(stop - start)
        return symmetric_part(white)


def fit_submodels(spec: KernelSpec, X: Any, y: Any, partition: Partition) -> SubmodelBank:
    """
    Factorize k(X_i,X_i) for every group.

    Args:
        spec: Covariance function shared by all submodels
        X: n x d design
        y: n observations Y(X)
        partition: Groups of row indices into X

    Returns:
        A SubmodelBank ready for prediction and aggregation

    Raises:
        PartitionError: when the partition indexes a different number of rows
        SingularMatrixError: when a group's covariance cannot be factorized
    """
    pts = as_points(X, spec.dim)
    values = np.asarray(y, dtype=float).ravel()
    if values.size != pts.shape[0]:
        raise ArgumentError(
            f"{values.size} observations given for {pts.shape[0]} design points"
        )
    if partition.n != pts.shape[0]:
        raise PartitionError(
            f"partition indexes {partition.n} rows, design has {pts.shape[0]}"
        )

    def fit_group(k: int) -> Factorization:
        idx = list(partition.groups[k])
        return factorize_design(spec, pts[idx], label=f"k(X_{k},X_{k})")

    factors = parallel_map(fit_group, range(partition.p))
    LOGGER.debug("fitted %d submodels, sizes %s", partition.p, partition.sizes)
    return SubmodelBank(
        spec=spec, X=pts, y=values, partition=partition, factors=tuple(factors)
    )


def submodel_half_weights(bank: SubmodelBank, x: Any) -> List[np.ndarray]:
    """Return a_i = L_i^{-1} k(X_i,x) for every group; v_i(x) = k(x,x) - |a_i|^2."""
    point = as_point(x, bank.spec.dim)
    return [
        factor.half_solve(kernel_vector(bank.spec, bank.X[list(group)], point))
        for group, factor in zip(bank.partition.groups, bank.factors)
    ]


def weight_matrix(bank: SubmodelBank, halves: List[np.ndarray]) -> np.ndarray:
    """Lambda(x) from the half weights of submodel_half_weights."""
    lam = np.zeros((bank.p, bank.n))
    for k, (group, factor, a) in enumerate(zip(bank.partition.groups, bank.factors, halves)):
        lam[k, list(group)] = factor.back_solve(a)
    return lam


def submodel_weights(bank: SubmodelBank, x: Any) -> np.ndarray:
    """Return Lambda(x): row i holds k(x,X_i)k(X_i,X_i)^{-1} in the columns of group i."""
    return weight_matrix(bank, submodel_half_weights(bank, x))


def predict_submodels(bank: SubmodelBank, x: Any) -> SubmodelPrediction:
    """
    Evaluate every submodel at ``x``.

    Args:
        bank: Fitted submodels
        x: Prediction point of dimension ``bank.spec.dim``

    Returns:
        SubmodelPrediction with M(x) = Lambda(x) y, the variances v_i(x)
        clamped to [0, k(x,x)], and Lambda(x)

    Examples:
        >>> from nestedkrig.datasets import five_point_setup
        >>> setup = five_point_setup()
        >>> bank = fit_submodels(setup.spec, setup.X, setup.y, setup.partition)
        >>> pred = predict_submodels(bank, 0.5)  # 0.5 is a point of group 0
        >>> round(float(pred.means[0]), 6), round(float(pred.vars[0]), 6)
        (0.5, 0.0)
    """
    halves = submodel_half_weights(bank, x)
    lam = weight_matrix(bank, halves)
    prior = bank.spec.variance
    variances = np.empty(bank.p)
    for k, a in enumerate(halves):
        raw = prior - float(a @ a)
        variances[k] = min(clamp_variance(raw, prior, what=f"v_{k}(x)"), prior)
    return SubmodelPrediction(means=lam @ bank.y, vars=variances, lam=lam)
