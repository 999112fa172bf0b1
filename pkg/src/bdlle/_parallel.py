"""Tiny worker-pool helper shared by the per-point kernels."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

WORKERS_ENV = "BDLLE_WORKERS"


def worker_count(workers=None):
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def map_points(fn, n, workers=None, chunk=256):
    """Evaluate ``fn(k)`` for k in range(n) and return the results as a list.

    Work is split into contiguous chunks; each result lands in its own slot,
    so the output does not depend on the number of workers.
    """
    workers = worker_count(workers)
    out = [None] * n
    starts = range(0, n, chunk)

    def run(start):
        for k in range(start, min(start + chunk, n)):
            out[k] = fn(k)

    if workers == 1 or n <= chunk:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    return out


def map_points_array(fn, n, workers=None, chunk=256, dtype=float):
    return np.asarray(map_points(fn, n, workers, chunk), dtype=dtype)
