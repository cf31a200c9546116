"""
Cholesky factorization with a jitter escalation schedule.

All solves in the package go through a Factorization; explicit inverses are
only formed where a quantity is defined as one (see diagnostics).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg as sla
from scipy.spatial.distance import cdist

LOGGER = logging.getLogger(__name__)

# Jitter is expressed relative to trace(A) / n.
JITTER_START = 1e-12
JITTER_MAX = 1e-4


class FactorizationFailed(Exception):
    """Internal signal: no jitter level produced an acceptable factor."""

    def __init__(self, last_jitter: float) -> None:
        self.last_jitter = last_jitter
        super().__init__(f"factorization failed up to jitter {last_jitter:.3e}")


@dataclass(frozen=True)
class Factorization:
    """Lower Cholesky factor of ``A + jitter * I``."""

    chol: np.ndarray
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return int(self.chol.shape[0])

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return A^{-1} b for the jittered A."""
        return sla.cho_solve((self.chol, True), b, check_finite=False)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """Return L^{-1} b."""
        return sla.solve_triangular(self.chol, b, lower=True, check_finite=False)

    def back_solve(self, b: np.ndarray) -> np.ndarray:
        """Return L^{-T} b, so that solve(b) == back_solve(half_solve(b))."""
        return sla.solve_triangular(self.chol, b, lower=True, trans="T", check_finite=False)

    def reconstruct(self) -> np.ndarray:
        """Return L L^T, i.e. the factorized matrix plus its jitter."""
        return self.chol @ self.chol.T


def _try_cholesky(a: np.ndarray) -> Optional[np.ndarray]:
    try:
        chol = sla.cholesky(a, lower=True, check_finite=False)
    except sla.LinAlgError:
        return None
    # pivots at rounding-noise level relative to their diagonal entry count as zero
    pivots = np.diag(chol) ** 2
    diag = np.diag(a)
    floor = a.shape[0] * np.finfo(float).eps
    if not np.all(np.isfinite(chol)) or np.any(pivots <= floor * diag):
        return None
    return chol


def jittered_cholesky(
    a: np.ndarray,
    start: float = JITTER_START,
    maximum: float = JITTER_MAX,
    label: str = "matrix",
) -> Factorization:
    """
    Factorize a symmetric matrix, escalating a diagonal jitter on failure.

    Tries jitter 0 first, then ``start * trace/n`` multiplied by 10 until
    ``maximum * trace/n``. Raises FactorizationFailed when every level fails;
    callers translate that into their own domain error.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{label} must be square, got shape {a.shape}")
    n = a.shape[0]
    chol = _try_cholesky(a)
    if chol is not None:
        return Factorization(chol=chol, jitter=0.0)

    scale = float(np.trace(a)) / n
    if not np.isfinite(scale) or scale <= 0.0:
        raise FactorizationFailed(0.0)

    jitter = start * scale
    ceiling = maximum * scale * (1.0 + 1e-9)
    eye = np.eye(n)
    while jitter <= ceiling:
        LOGGER.debug("retrying %s factorization with jitter %.3e", label, jitter)
        chol = _try_cholesky(a + jitter * eye)
        if chol is not None:
            LOGGER.warning("added jitter of %.3e to %s (n=%d)", jitter, label, n)
            return Factorization(chol=chol, jitter=jitter)
        jitter *= 10.0
    raise FactorizationFailed(jitter / 10.0)


def closest_pair(points: np.ndarray) -> Optional[Tuple[int, int]]:
    """Indices (i, j), i < j, of the two closest rows, or None for < 2 rows."""
    n = points.shape[0]
    if n < 2:
        return None
    dists = cdist(points, points)
    np.fill_diagonal(dists, np.inf)
    i, j = divmod(int(np.argmin(dists)), n)
    return (min(i, j), max(i, j))


def most_correlated_pair(cov: np.ndarray) -> Optional[Tuple[int, int]]:
    """Indices of the off-diagonal pair with the largest absolute correlation."""
    p = cov.shape[0]
    if p < 2:
        return None
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cov / np.outer(sd, sd)
    corr = np.abs(np.nan_to_num(corr, nan=1.0))
    np.fill_diagonal(corr, -1.0)
    flat = int(np.argmax(corr))
    i, j = divmod(flat, p)
    return (min(i, j), max(i, j))


def symmetric_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)
