"""Worker-count policy and an order-preserving map."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "DEFOCUSKIT_THREADS"


def worker_count() -> int:
    """CPU count, capped by ``DEFOCUSKIT_THREADS`` when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get(ENV_VAR)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def ordered_map(fn, items, workers: int | None = None) -> list:
    """``list(map(fn, items))``, run on a thread pool; results keep input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
