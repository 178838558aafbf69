"""Small shared helpers."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

A = TypeVar("A")
B = TypeVar("B")

THREADS_ENV = "EMGRAPH_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Resolve the worker-pool size; the EMGRAPH_THREADS env var caps it."""
    count = 1 if requested is None else max(1, int(requested))
    cap = os.environ.get(THREADS_ENV)
    if cap is not None:
        try:
            count = min(count, max(1, int(cap)))
        except ValueError:
            pass
    return count


def parallel_map(fn: Callable[[A], B], items: Sequence[A], workers: int = 1) -> list[B]:
    """Order-preserving map, threaded when workers > 1."""
    workers = worker_count(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
