"""Deterministic replicate-parallel execution.

Replicates are cut into chunks of a fixed size that does not depend on the
worker count, each chunk is a pure function of its replicate indices, and the
results are concatenated in chunk order.  Output is therefore bit-identical
for any number of workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numba
import numpy as np

CHUNK = 1024


def chunks(replicates: int, chunk: int = CHUNK):
    for start in range(0, replicates, chunk):
        yield np.arange(start, min(start + chunk, replicates), dtype=np.int64)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        return 1
    if workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def map_chunks(fn, replicates: int, args: tuple = (), workers: int | None = 1, chunk: int = CHUNK):
    """``[fn(reps, *args) for reps in chunks]`` in chunk order, optionally in a process pool."""
    parts = list(chunks(replicates, chunk))
    workers = resolve_workers(workers)
    if workers == 1 or len(parts) == 1:
        return [fn(p, *args) for p in parts]
    with ProcessPoolExecutor(max_workers=min(workers, len(parts))) as pool:
        futures = [pool.submit(fn, p, *args) for p in parts]
        return [f.result() for f in futures]


@numba.njit(cache=True)
def kahan_rows(a):
    """Row sums of a 2-d array, ascending column order, compensated."""
    out = np.empty(a.shape[0])
    for r in range(a.shape[0]):
        s = 0.0
        c = 0.0
        for k in range(a.shape[1]):
            y = a[r, k] - c
            t = s + y
            c = (t - s) - y
            s = t
        out[r] = s
    return out


def kahan_sum(v) -> float:
    return float(kahan_rows(np.ascontiguousarray(np.asarray(v, dtype=float).reshape(1, -1)))[0])
