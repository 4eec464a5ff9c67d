"""Acceleration switches: numba kernels vs. pure numpy, and the worker pool."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False


def numba_enabled() -> bool:
    """True unless SCATTERLAB_NUMBA is set to 0/false/no/off.

    Read on every call so a benchmark can flip the flag at runtime.
    """
    flag = os.environ.get("SCATTERLAB_NUMBA", "1").strip().lower()
    return NUMBA_AVAILABLE and flag not in ("0", "false", "no", "off")


def worker_count(configured: int | None = None) -> int:
    """Worker count: SCATTERLAB_THREADS overrides the configured value."""
    env = os.environ.get("SCATTERLAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n > 0:
            return n
    if configured is not None and configured > 0:
        return int(configured)
    return 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Map in a thread pool; results come back in input order."""
    items = list(items)
    n = worker_count(workers)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
