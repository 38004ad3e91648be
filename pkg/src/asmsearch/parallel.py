"""Order-preserving parallel map used by the batch commands."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor


def chunked(items, n_chunks):
    """Split ``items`` into at most ``n_chunks`` contiguous, order-preserving slices."""
    items = list(items)
    n_chunks = max(1, min(n_chunks, len(items)))
    size, extra = divmod(len(items), n_chunks)
    out, start = [], 0
    for c in range(n_chunks):
        end = start + size + (c < extra)
        out.append(items[start:end])
        start = end
    return out


def parallel_map(fn, items, workers=1, threads=False):
    """``[fn(x) for x in items]``, optionally spread over a worker pool.

    Results always come back in input order, so output never depends on
    ``workers``.  ``fn`` must be picklable unless ``threads`` is set.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    pool_cls = ThreadPoolExecutor if threads else ProcessPoolExecutor
    with pool_cls(max_workers=workers) as ex:
        return list(ex.map(fn, items))
