"""Space files: JSON with 17-significant-digit floats."""

from __future__ import annotations

import json

import numpy as np

from . import jsonio
from .errors import ValidationError
from .space import MetricMeasureSpace, PointSet

VERSION = 1


def space_to_dict(space: MetricMeasureSpace, sets=None) -> dict:
    d = {"version": VERSION, "n": space.n}
    if space.kind == "euclidean":
        d["metric"] = {"kind": "euclidean"}
        d["coords"] = space.coords.tolist()
    else:
        iu = np.triu_indices(space.n, k=1)
        d["metric"] = {"kind": "matrix", "upper": space.full_dist()[iu].tolist()}
    d["weights"] = space.weights.tolist()
    d["sets"] = {name: s.indices.tolist() for name, s in (sets or {}).items()}
    return d


def save_space(space: MetricMeasureSpace, sets, path):
    jsonio.dump(space_to_dict(space, sets), path, indent=None)


def _fail(msg):
    raise ValidationError(f"space file: {msg}")


def space_from_dict(d: dict, validate=True):
    if not isinstance(d, dict):
        _fail("top level must be an object")
    if d.get("version") != VERSION:
        _fail(f"unsupported version {d.get('version')!r}")
    n = d.get("n")
    if not isinstance(n, int) or n < 1:
        _fail("'n' must be a positive integer")
    weights = d.get("weights")
    if not isinstance(weights, list) or len(weights) != n:
        _fail(f"'weights' must be a list of {n} numbers")
    w = np.array(weights, dtype=np.float64)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        bad = int(np.flatnonzero(~(w > 0))[0])
        _fail(f"weights[{bad}]={weights[bad]!r} must be positive")
    metric = d.get("metric")
    if not isinstance(metric, dict) or metric.get("kind") not in ("euclidean", "matrix"):
        _fail("'metric.kind' must be 'euclidean' or 'matrix'")
    if metric["kind"] == "euclidean":
        coords = d.get("coords")
        if not isinstance(coords, list) or len(coords) != n:
            _fail("'coords' is required for euclidean metrics and needs n rows")
        c = np.array(coords, dtype=np.float64)
        if c.ndim != 2:
            _fail("'coords' rows must have equal length")
        space = MetricMeasureSpace(w, coords=c, validate=validate)
    else:
        upper = metric.get("upper")
        if not isinstance(upper, list) or len(upper) != n * (n - 1) // 2:
            _fail(f"'metric.upper' must hold n(n-1)/2 = {n * (n - 1) // 2} entries")
        M = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        M[iu] = np.array(upper, dtype=np.float64)
        M = M + M.T
        space = MetricMeasureSpace(w, matrix=M, validate=validate)
    sets = {"ALL": PointSet.full(n)}
    raw = d.get("sets", {})
    if not isinstance(raw, dict):
        _fail("'sets' must be an object")
    for name, idx in raw.items():
        if not isinstance(idx, list) or any(not isinstance(i, int) or not 0 <= i < n for i in idx):
            _fail(f"set {name!r} must list point indices in [0,{n})")
        sets[name] = PointSet.from_indices(n, idx)
    return space, sets


def load_space(path, validate=True):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"space file: not valid JSON ({exc})") from exc
    return space_from_dict(d, validate=validate)
