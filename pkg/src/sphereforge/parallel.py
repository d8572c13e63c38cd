"""Order-preserving fan-out over fixed work blocks.

Work is always cut into the same blocks whatever the worker count, and
results come back in block order, so reductions are thread-count independent.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "SPHEREFORGE_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``SPHEREFORGE_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(ENV_THREADS, "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError as exc:
            raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from exc
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    return threads


def block_sizes(count: int, block: int) -> list:
    full, rem = divmod(count, block)
    return [block] * full + ([rem] if rem else [])


def map_ordered(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
