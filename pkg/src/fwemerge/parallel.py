"""Replica fan-out with results returned in submission order.

``FWEMERGE_WORKERS`` sets the process count (default 1, i.e. in-process).
Every task carries its own seed, so the worker count never changes results.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("FWEMERGE_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FWEMERGE_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("FWEMERGE_WORKERS must be >= 1")
    return n


def map_ordered(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Apply ``fn`` to every item; results keep the input order."""
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
