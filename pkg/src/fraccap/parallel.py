"""Order-preserving process map with single-threaded numerics.

BLAS is pinned to one thread in every worker and in the serial path, so a
task computes the same bits whichever process runs it.
"""

from __future__ import annotations

import multiprocessing as mp

from threadpoolctl import threadpool_limits


def _call(args):
    fn, item = args
    with threadpool_limits(1):
        return fn(item)


def pmap(fn, items, workers: int = 1):
    """[fn(x) for x in items], optionally over ``workers`` forked processes.

    ``fn`` must be a module-level function; results keep input order.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        with threadpool_limits(1):
            return [fn(x) for x in items]
    ctx = mp.get_context("fork")
    with ctx.Pool(min(workers, len(items))) as pool:
        return pool.map(_call, [(fn, x) for x in items], chunksize=1)
