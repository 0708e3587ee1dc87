"""Deterministic work partitioning for the multi-threaded pipeline stages.

Edges are split into contiguous index ranges that depend only on the edge
count and the worker count, and per-worker results are always combined in
ascending worker order. Together with kernels that write only to rows they
own (or to private buffers), this keeps every stage bit-identical for any
worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

__all__ = ["partition_ranges", "map_partitions"]


def partition_ranges(n: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous [lo, hi) ranges covering 0..n, one per worker.

    A pure function of (n, workers); range sizes differ by at most one.
    """
    if n <= 0:
        return [(0, 0)]
    w = max(1, min(int(workers), n))
    return [(i * n // w, (i + 1) * n // w) for i in range(w)]


def map_partitions(fn: Callable[[int, int], T], n: int, workers: int) -> list[T]:
    """Run ``fn(lo, hi)`` over each partition, results in partition order.

    The kernels called here release the GIL, so partitions run on real
    threads when ``workers > 1``.
    """
    parts = partition_ranges(n, workers)
    if len(parts) == 1:
        lo, hi = parts[0]
        return [fn(lo, hi)]
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in parts]
        return [f.result() for f in futures]
