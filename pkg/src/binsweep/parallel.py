"""Deterministic work splitting for per-hypothesis volume construction.

Work is divided along the hypothesis axis. Each unit writes or returns data
for its own hypothesis index only, and results are always consumed in index
order, so the output is bitwise identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

__all__ = ["slice_map"]


def slice_map(fn, n: int, threads: int = 1) -> list:
    """Evaluate fn(0) .. fn(n-1) and return the results in index order.

    threads=1 runs a plain loop and is the reference behavior; higher
    counts use a thread pool. fn must not touch state shared with other
    indices.
    """
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    if threads == 1 or n <= 1:
        return [fn(j) for j in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))
