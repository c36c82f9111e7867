"""Pair kernel of the Gagliardo-type energies.

For a domain A the kernel entry is mu(y) / (d(x,y)^{beta q} mu(B(x, d(x,y))))
with the open ball taken in the whole space; the diagonal is zero.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .space import TIE_RTOL, MetricMeasureSpace, open_ball_masses

_LRU_SIZE = 3


def _lru(space: MetricMeasureSpace) -> OrderedDict:
    return space.cached("kernel_lru", OrderedDict)


def base_kernel(space: MetricMeasureSpace, rows, cols):
    """(D, mu(y)/mu(B(x,d(x,y)))) on rows x cols; zero where x == y."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    D = space.dist(rows, cols)
    M = open_ball_masses(space, rows, cols)
    w = space.weights[cols]
    same = rows[:, None] == cols[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(same, 0.0, w[None, :] / np.where(same, 1.0, M))
    # a point at positive distance always has x itself inside the open ball
    return D, base


def kernel(space: MetricMeasureSpace, rows, cols, beta: float, q: float) -> np.ndarray:
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    key = (rows.tobytes(), cols.tobytes(), float(beta), float(q))
    lru = _lru(space)
    if key in lru:
        lru.move_to_end(key)
        return lru[key]
    D, base = base_kernel(space, rows, cols)
    with np.errstate(divide="ignore"):
        K = np.where(base > 0, base / np.power(np.where(D > 0, D, 1.0), beta * q), 0.0)
    K.setflags(write=False)
    lru[key] = K
    if len(lru) > _LRU_SIZE:
        lru.popitem(last=False)
    return K


def scale_index(d):
    """k with 2^{-k-1} <= d < 2^{-k}; ties with powers of two are snapped up."""
    _, e = np.frexp(np.asarray(d, dtype=np.float64) * (1 + TIE_RTOL))
    return -e
