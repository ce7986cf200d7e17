"""Deterministic thread-pool helpers."""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

from .config import get_config

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Map fn over items, returning results in input order.

    Uses at most `threads` workers (defaults to the configured cap);
    a cap of 1 runs serially in the calling thread.
    """
    items = list(items)
    workers = threads if threads is not None else get_config().threads
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def derived_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for item `index` of a seeded batch; independent of schedule."""
    return np.random.default_rng([int(seed), int(index)])
