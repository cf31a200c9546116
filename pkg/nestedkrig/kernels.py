"""
Stationary covariance functions and kernel-matrix evaluation.

Supported families:

- squared exponential: v * exp(-r^2 / 2)
- Matern 1/2:          v * exp(-r)
- Matern 3/2:          v * (1 + sqrt(3) r) * exp(-sqrt(3) r)
- Matern 5/2:          v * (1 + sqrt(5) r + 5 r^2 / 3) * exp(-sqrt(5) r)

where ``r`` is the Euclidean distance after dividing every coordinate by its
lengthscale. With lengthscale 0.2 the squared exponential is
``exp(-12.5 (x - x')^2)``.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist
from typing_extensions import TypeAlias

from nestedkrig.errors import ArgumentError, DimensionMismatchError, EmptyPointSetError

# n x d matrix, one point per row
PointSet: TypeAlias = np.ndarray
Point: TypeAlias = np.ndarray

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


class KernelFamily(str, Enum):
    """Supported stationary families; Matern smoothness is fixed per member."""

    SQUARED_EXPONENTIAL = "squared_exponential"
    MATERN12 = "matern12"
    MATERN32 = "matern32"
    MATERN52 = "matern52"

    @classmethod
    def parse(cls, name: Union[str, "KernelFamily"]) -> "KernelFamily":
        """Accept enum values, member names and a few common spellings."""
        if isinstance(name, KernelFamily):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "se": cls.SQUARED_EXPONENTIAL,
            "rbf": cls.SQUARED_EXPONENTIAL,
            "gaussian": cls.SQUARED_EXPONENTIAL,
            "squaredexponential": cls.SQUARED_EXPONENTIAL,
            "exponential": cls.MATERN12,
        }
        if key in aliases:
            return aliases[key]
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise ArgumentError(f"unknown kernel family {name!r}")


@dataclass(frozen=True)
class KernelSpec:
    """
    Covariance family with its parameters.

    A scalar lengthscale is broadcast to every input dimension. Instances are
    immutable and hashable.
    """

    family: KernelFamily
    variance: float = 1.0
    lengthscale: Tuple[float, ...] = (1.0,)
    dim: int = 1

    def __post_init__(self) -> None:
        family = KernelFamily.parse(self.family)
        object.__setattr__(self, "family", family)
        if int(self.dim) != self.dim or self.dim < 1:
            raise ArgumentError(f"dim must be a positive integer, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if not np.isfinite(self.variance) or self.variance <= 0:
            raise ArgumentError(f"variance must be > 0, got {self.variance}")
        object.__setattr__(self, "variance", float(self.variance))

        scales = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if scales.ndim != 1:
            raise ArgumentError("lengthscale must be a scalar or a 1-d sequence")
        if scales.size == 1:
            scales = np.repeat(scales, self.dim)
        if scales.size != self.dim:
            raise DimensionMismatchError(
                f"{scales.size} lengthscales given for dim={self.dim}"
            )
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise ArgumentError(f"every lengthscale must be > 0, got {scales}")
        object.__setattr__(self, "lengthscale", tuple(float(s) for s in scales))

    @property
    def scales(self) -> np.ndarray:
        return np.asarray(self.lengthscale)

    def to_record(self) -> Dict[str, Any]:
        """Structured config record; isotropic lengthscales collapse to a number."""
        scales = self.lengthscale
        ls: Union[float, list] = (
            scales[0] if all(s == scales[0] for s in scales) else list(scales)
        )
        return {
            "family": self.family.value,
            "variance": self.variance,
            "lengthscale": ls,
            "dim": self.dim,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "KernelSpec":
        """Validate a config-style record and build the spec from it."""
        from nestedkrig.config import KernelRecord

        return KernelRecord.model_validate(record).to_spec()


# ===== POINT HANDLING =====


def as_points(points: Any, dim: int) -> PointSet:
    """
    Coerce ``points`` to an n x dim float matrix.

    A 1-d array is read as n points when ``dim == 1`` and as a single point
    otherwise.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"point set must be 2-d, got shape {arr.shape}")
    if arr.shape[1] != dim:
        raise DimensionMismatchError(
            f"points have dimension {arr.shape[1]}, kernel expects {dim}"
        )
    return arr


def as_point(x: Any, dim: int) -> Point:
    """Coerce ``x`` to a flat point of length ``dim``."""
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if arr.size != dim:
        raise DimensionMismatchError(
            f"point has dimension {arr.size}, kernel expects {dim}"
        )
    return arr


# ===== EVALUATION =====


def _profile(spec: KernelSpec, sqdist: np.ndarray) -> np.ndarray:
    family = spec.family
    if family is KernelFamily.SQUARED_EXPONENTIAL:
        return spec.variance * np.exp(-0.5 * sqdist)
    r = np.sqrt(sqdist)
    if family is KernelFamily.MATERN12:
        return spec.variance * np.exp(-r)
    if family is KernelFamily.MATERN32:
        s = _SQRT3 * r
        return spec.variance * (1.0 + s) * np.exp(-s)
    s = _SQRT5 * r
    return spec.variance * (1.0 + s + s * s / 3.0) * np.exp(-s)


def kernel_matrix(spec: KernelSpec, A: Any, B: Any) -> np.ndarray:
    """Return the |A| x |B| matrix with entries k(a_i, b_j)."""
    a = as_points(A, spec.dim)
    b = as_points(B, spec.dim)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyPointSetError("kernel_matrix needs nonempty point sets")
    scales = spec.scales
    # (a - b)^2 == (b - a)^2 bit for bit, so the result is exactly symmetric
    sqdist = cdist(a / scales, b / scales, metric="sqeuclidean")
    return _profile(spec, sqdist)


def kernel_vector(spec: KernelSpec, A: Any, x: Any) -> np.ndarray:
    """Return k(A, x) as a 1-d array."""
    return kernel_matrix(spec, A, as_point(x, spec.dim).reshape(1, -1))[:, 0]


def kernel_diag(spec: KernelSpec, A: Any) -> np.ndarray:
    """k(a_i, a_i) for every row; constant for stationary families."""
    a = as_points(A, spec.dim)
    return np.full(a.shape[0], spec.variance)


def eval_kernel(spec: KernelSpec, x: Any, x_prime: Any) -> float:
    """Return k(x, x')."""
    xa = as_point(x, spec.dim).reshape(1, -1)
    xb = as_point(x_prime, spec.dim).reshape(1, -1)
    return float(kernel_matrix(spec, xa, xb)[0, 0])


def neb_qualified(spec: KernelSpec) -> bool:
    """
    True when the family has the no-empty-ball property.

    Matern covariances have a positive spectral density with polynomial
    decay; the squared exponential's decays too fast.
    """
    return spec.family is not KernelFamily.SQUARED_EXPONENTIAL


def make_kernel(
    family: Union[str, KernelFamily],
    variance: float = 1.0,
    lengthscale: Union[float, Sequence[float]] = 1.0,
    dim: int = 1,
) -> KernelSpec:
    """
    Build a KernelSpec from loose arguments.

    Args:
        family: Family name or alias ("matern32", "rbf", "exponential", ...)
        variance: k(x,x), must be > 0
        lengthscale: One value (isotropic) or one per dimension
        dim: Input dimension

    Returns:
        Validated KernelSpec

    Raises:
        ArgumentError: for an unknown family or a non-positive parameter

    Examples:
        >>> make_kernel("matern32", lengthscale=0.15)
        >>> make_kernel("rbf", lengthscale=[0.2, 0.4], dim=2)  # squared exponential, anisotropic
    """
    return KernelSpec(
        family=KernelFamily.parse(family),
        variance=variance,
        lengthscale=tuple(np.atleast_1d(np.asarray(lengthscale, dtype=float))),
        dim=dim,
    )
