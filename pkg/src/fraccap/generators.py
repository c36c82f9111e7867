"""Benchmark spaces: uniform grids, paths and Cantor-type subsets of a line."""

from __future__ import annotations

import itertools

import numpy as np

from .errors import PreconditionError
from .space import MAX_POINTS, MetricMeasureSpace, PointSet


def grid(dim: int, m: int):
    """Lattice on [0,1]^dim with m points per side, weight h^dim per point."""
    if dim not in (1, 2):
        raise PreconditionError(f"grid dimension must be 1 or 2, got {dim}")
    if not 2 <= m <= 512:
        raise PreconditionError(f"grid side m must be in [2, 512] (point cap {MAX_POINTS}), got {m}")
    if m ** dim > MAX_POINTS:
        raise PreconditionError(f"grid({dim},{m}) exceeds the {MAX_POINTS}-point cap")
    h = 1.0 / (m - 1)
    axis = np.arange(m) * h
    if dim == 1:
        coords = axis[:, None]
    else:
        coords = np.array(list(itertools.product(axis, axis)))
    space = MetricMeasureSpace(np.full(m ** dim, h ** dim), coords=coords, validate=False)
    return space, {"ALL": PointSet.full(space.n)}


def path(n: int):
    """Uniform 1-D grid with n points on [0,1]."""
    if not 2 <= n <= MAX_POINTS:
        raise PreconditionError(f"path length must be in [2, {MAX_POINTS}], got {n}")
    h = 1.0 / (n - 1)
    space = MetricMeasureSpace(np.full(n, h), coords=(np.arange(n) * h)[:, None],
                               validate=False)
    return space, {"ALL": PointSet.full(n)}


def cantor_intervals(depth: int, ratio: float):
    """Closed intervals surviving ``depth`` steps of the two-piece construction."""
    intervals = [(0.0, 1.0)]
    for _ in range(depth):
        nxt = []
        for a, b in intervals:
            ln = (b - a) * ratio
            nxt.append((a, a + ln))
            nxt.append((b - ln, b))
        intervals = nxt
    return intervals


def cantor_line(depth: int, ratio: float = 1 / 3, m: int | None = None):
    """Cell-centred line of m points with the Cantor set returned as "E".

    Each step keeps two end pieces of relative length ``ratio`` (removing the
    middle 1 - 2*ratio). By default m = round(1/ratio)^depth so that every
    surviving interval is one cell.
    """
    if not 0 <= depth <= 8:
        raise PreconditionError(f"cantor depth must be in [0, 8], got {depth}")
    if not 0 < ratio < 0.5:
        raise PreconditionError(f"cantor ratio must be in (0, 1/2), got {ratio}")
    if m is None:
        m = int(round(1 / ratio)) ** depth
    if not 2 <= m <= MAX_POINTS:
        raise PreconditionError(f"cantor line size must be in [2, {MAX_POINTS}], got {m}")
    x = (np.arange(m) + 0.5) / m
    eps = 1e-12
    inE = np.zeros(m, dtype=bool)
    for a, b in cantor_intervals(depth, ratio):
        inE |= (x >= a - eps) & (x <= b + eps)
    space = MetricMeasureSpace(np.full(m, 1.0 / m), coords=x[:, None], validate=False)
    return space, {"ALL": PointSet.full(m), "E": PointSet(inE)}


def generate_space(kind: str, **params):
    """Dispatch on ``kind``: grid, path, cantor_line or from_file."""
    if kind == "grid":
        return grid(int(params.get("dim", 1)), int(params["m"]))
    if kind == "path":
        return path(int(params["n"]))
    if kind == "cantor_line":
        m = params.get("m")
        return cantor_line(int(params["depth"]), float(params.get("ratio", 1 / 3)),
                           None if m is None else int(m))
    if kind == "from_file":
        from .spaceio import load_space
        return load_space(params["path"])
    raise PreconditionError(f"unknown space generator {kind!r}")
