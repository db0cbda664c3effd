"""
Worker Pool Module

Resolves the worker count (config value, GW_WORKERS override, available
parallelism) and runs data-parallel jobs over disjoint index ranges with
results returned in submission order.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "GW_WORKERS"


class WorkerConfigError(Exception):
    """Custom exception for worker configuration errors."""
    pass


def resolve_worker_count(configured: Optional[int] = None) -> int:
    """
    Worker count: GW_WORKERS beats the configured value, which beats
    os.cpu_count().

    Raises:
        WorkerConfigError: If a value is not a positive integer
    """
    env_value = os.getenv(WORKERS_ENV)
    if env_value:
        try:
            count = int(env_value)
        except ValueError:
            raise WorkerConfigError(f"{WORKERS_ENV} must be an integer, got {env_value!r}")
        source = WORKERS_ENV
    elif configured is not None:
        count = int(configured)
        source = "config"
    else:
        count = os.cpu_count() or 1
        source = "cpu_count"
    if count < 1:
        raise WorkerConfigError(f"worker count must be positive, got {count} ({source})")
    logger.debug("using %d workers (%s)", count, source)
    return count


def partition(n: int, parts: int) -> List[Tuple[int, int]]:
    """Split range(n) into at most `parts` contiguous (start, stop) ranges."""
    parts = max(1, min(parts, n)) if n > 0 else 1
    bounds = [round(i * n / parts) for i in range(parts + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(parts) if bounds[i + 1] > bounds[i]]


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """map() over items, results in input order regardless of worker count."""
    items: Sequence[T] = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
