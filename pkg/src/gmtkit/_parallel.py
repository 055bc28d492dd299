"""Deterministic thread-pool map (order-preserving)."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("GMTKIT_THREADS", "")
        threads = int(env) if env.strip().isdigit() else 1
    return max(1, int(threads))


def pmap(fn, items, threads: int | None = None) -> list:
    items = list(items)
    t = thread_count(threads)
    if t == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=t) as ex:
        return list(ex.map(fn, items))
