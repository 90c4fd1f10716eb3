"""Chunked execution of nogil kernels over a thread pool.

Kernels write into disjoint slices of preallocated arrays, so the result
does not depend on the worker count or on scheduling.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

MIN_CHUNK = 256


def max_threads() -> int:
    return os.cpu_count() or 1


def resolve_threads(threads: int | str | None) -> int:
    if threads in (None, 0, "max"):
        return max_threads()
    n = int(threads)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return n


def chunk_bounds(n: int, threads: int) -> list[tuple[int, int]]:
    if n == 0:
        return []
    parts = max(1, min(threads * 4, n // MIN_CHUNK))
    step = -(-n // parts)
    return [(lo, min(lo + step, n)) for lo in range(0, n, step)]


def run_chunked(fn, n: int, threads: int) -> None:
    """Call ``fn(lo, hi)`` over a partition of ``range(n)``."""
    bounds = chunk_bounds(n, threads)
    if threads <= 1 or len(bounds) <= 1:
        for lo, hi in bounds:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fn, lo, hi) for lo, hi in bounds]:
            fut.result()


def run_tasks(fn, n_tasks: int, threads: int) -> None:
    """Call ``fn(i)`` for each task index; callers store results by index."""
    if threads <= 1 or n_tasks <= 1:
        for i in range(n_tasks):
            fn(i)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fn, i) for i in range(n_tasks)]:
            fut.result()
