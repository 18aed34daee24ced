"""Process-wide worker pool for record-parallel acquisition and estimation.

Results are always collected in submission order, so outputs do not depend
on the number of workers.
"""

import logging
import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from shadowfcs.errors import InputError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "SHADOWFCS_THREADS"

# ============================================================================
# Thread Count
# ============================================================================

_thread_count: int | None = None


def get_thread_count() -> int:
    """Thread count set explicitly, else from the environment, else CPU count."""
    if _thread_count is not None:
        return _thread_count
    value = os.getenv(THREADS_ENV)
    if value is None:
        return os.cpu_count() or 1
    try:
        count = int(value)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be an integer, got '{value}'")
    if count < 1:
        raise InputError(f"{THREADS_ENV} must be at least 1, got {count}")
    return count


def set_thread_count(count: int | None) -> None:
    """Override the thread count; None restores the environment default."""
    global _thread_count
    if count is not None and count < 1:
        raise InputError(f"Thread count must be at least 1, got {count}")
    close_pool()
    _thread_count = count


# ============================================================================
# Pool
# ============================================================================

_pool: ThreadPoolExecutor | None = None


def get_pool() -> ThreadPoolExecutor:
    """Get or create the worker pool."""
    global _pool
    if _pool is None:
        workers = get_thread_count()
        _pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="shadowfcs")
        logger.debug(f"Started worker pool with {workers} threads")
    return _pool


def close_pool() -> None:
    """Shut down the worker pool."""
    global _pool
    if _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Ordered map over ``items``, on the pool when more than one thread is allowed."""
    items = list(items)
    if get_thread_count() == 1 or len(items) <= 1:
        return [func(item) for item in items]
    return list(get_pool().map(func, items))
