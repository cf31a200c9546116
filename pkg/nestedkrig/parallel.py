"""Order-preserving thread-pool map capped by NESTED_KRIG_THREADS."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

LOGGER = logging.getLogger(__name__)

THREADS_ENV = "NESTED_KRIG_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: Optional[int] = None) -> int:
    """
    Resolve the number of worker threads.

    ``requested`` overrides the environment; 0 or an unset/invalid variable
    means one worker per CPU.
    """
    if requested is None:
        raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
        try:
            requested = int(raw)
        except ValueError:
            LOGGER.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
            requested = 0
    if requested <= 0:
        return os.cpu_count() or 1
    return requested


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None
) -> List[R]:
    """Map ``func`` over ``items``; results keep the input order."""
    seq = list(items)
    n_workers = min(worker_count(workers), max(len(seq), 1))
    if n_workers <= 1:
        return [func(item) for item in seq]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(func, seq))
