"""Replicate-chunked execution.

Replicates are cut into fixed-size chunks that do not depend on the worker
count; results are always returned in chunk order, so any reduction done by
the caller is identical for every ``MCLT_THREADS`` setting.
"""

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 4096


def worker_count():
    env = os.environ.get("MCLT_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def chunk_bounds(reps, chunk=CHUNK):
    return [(start, min(chunk, reps - start)) for start in range(0, reps, chunk)]


def map_chunks(fn, reps, chunk=CHUNK):
    """Apply ``fn(start, count)`` to every chunk; results in replicate order."""
    bounds = chunk_bounds(reps, chunk)
    workers = min(worker_count(), len(bounds))
    if workers <= 1:
        return [fn(start, count) for start, count in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
