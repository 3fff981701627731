"""Order-preserving chunked execution over frame ranges."""

import os
from concurrent.futures import ProcessPoolExecutor


def default_jobs():
    return os.cpu_count() or 1


def chunk_ranges(n, chunk):
    return [(start, min(start + chunk, n)) for start in range(0, n, chunk)]


def map_ranges(func, n, chunk, jobs=1, args=()):
    """``[func(*args, start, stop) for each chunk]`` in chunk order.

    Workers receive disjoint frame ranges; because every frame draws from its
    own counter-based stream the result does not depend on ``jobs``.
    """
    ranges = chunk_ranges(n, chunk)
    if jobs <= 1 or len(ranges) == 1:
        return [func(*args, start, stop) for start, stop in ranges]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(func, *args, start, stop) for start, stop in ranges]
        return [f.result() for f in futures]


def iter_ranges(func, n, chunk, jobs=1, args=()):
    """Like :func:`map_ranges` but yields chunk results in order while keeping
    at most ``jobs`` chunks in flight, so memory stays bounded."""
    ranges = chunk_ranges(n, chunk)
    if jobs <= 1 or len(ranges) == 1:
        for start, stop in ranges:
            yield func(*args, start, stop)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for i in range(0, len(ranges), jobs):
            futures = [pool.submit(func, *args, a, b) for a, b in ranges[i:i + jobs]]
            for f in futures:
                yield f.result()
