"""Order-preserving parallel map capped by the RIGKIT_THREADS variable."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(threads=None):
    if threads is None:
        threads = os.environ.get("RIGKIT_THREADS", "1")
    try:
        return max(1, int(threads))
    except ValueError:
        return 1


def parallel_map(fn, items, threads=None):
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
