"""Deterministic chunked execution across threads."""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get("NUHLAB_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def map_chunks(fn, X, threads=None, chunk=2048):
    """Apply ``fn`` to row blocks of ``X`` and concatenate in input order.

    ``fn`` must treat rows independently; then the result does not depend on
    the thread count.
    """
    X = np.asarray(X)
    n = len(X)
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)] or [(0, 0)]
    threads = resolve_threads(threads)
    if threads == 1 or len(bounds) == 1:
        parts = [fn(X[a:b]) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda ab: fn(X[ab[0]:ab[1]]), bounds))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(len(parts[0])))
    return np.concatenate(parts)
