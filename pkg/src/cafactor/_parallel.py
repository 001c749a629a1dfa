"""Order-preserving parallel map shared by the analysis modules."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "CAFACTOR_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> list[R]:
    """``list(map(fn, items))``, optionally spread over a thread pool.

    Results come back in input order, so callers see the same output for any
    thread count as long as ``fn`` is pure.
    """
    items = list(items)
    n = default_threads() if threads is None else max(1, threads)
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
