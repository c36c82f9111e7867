"""Scenario files: strict JSON schema, set algebra and field declarations.

A scenario looks like::

    {"seed": 0,
     "space": {"generator": "grid", "dim": 1, "m": 33},
     "sets": {"L": {"coord_range": {"axis": 0, "max": 0.5}}},
     "campaigns": [{"name": "band", "op": "ball_capacity_band", "params": {...}}]}

Validation stops at the first problem and names its field path, for example
``campaigns[0].params.beta``. Only the documented defaults (Lambda = 4,
lambda = 3 and the c1 radius factors) are filled in silently.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .errors import FraccapError, ValidationError
from .generators import generate_space
from .space import BallSpec, MetricMeasureSpace, PointSet, ball_points, dist_to_set_all

REQUIRED = object()
NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


def fail(path, msg):
    raise ValidationError(f"{path}: {msg}")


# -- schema primitives ----------------------------------------------------
# A validator is a function (value, path) -> normalized value.


def num(lo=None, hi=None, lo_open=False, hi_open=False, allow_inf=False):
    def check(v, path):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            fail(path, f"expected a number, got {v!r}")
        v = float(v)
        if math.isnan(v) or (math.isinf(v) and not allow_inf):
            fail(path, f"expected a finite number, got {v!r}")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
        if hi is not None and (v > hi or (hi_open and v == hi)):
            fail(path, f"must be {'<' if hi_open else '<='} {hi}, got {v!r}")
        return v
    return check


def integer(lo=None, hi=None):
    def check(v, path):
        if isinstance(v, bool) or not isinstance(v, int):
            fail(path, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            fail(path, f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            fail(path, f"must be <= {hi}, got {v}")
        return v
    return check


def boolean(v, path):
    if not isinstance(v, bool):
        fail(path, f"expected true or false, got {v!r}")
    return v


def string(choices=None, pattern=None):
    def check(v, path):
        if not isinstance(v, str):
            fail(path, f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            fail(path, f"must be one of {sorted(choices)}, got {v!r}")
        if pattern is not None and not pattern.match(v):
            fail(path, f"{v!r} has characters outside [A-Za-z0-9_.-]")
        return v
    return check


def listof(item, min_len=0):
    def check(v, path):
        if not isinstance(v, list):
            fail(path, f"expected a list, got {type(v).__name__}")
        if len(v) < min_len:
            fail(path, f"needs at least {min_len} entries")
        return [item(x, f"{path}[{i}]") for i, x in enumerate(v)]
    return check


def literal_or(word, other):
    def check(v, path):
        if v == word:
            return v
        return other(v, path)
    return check


def optional(check):
    def inner(v, path):
        return None if v is None else check(v, path)
    return inner


def obj(fields: dict):
    """Object with exactly the given keys; values are (validator, default)."""
    def check(v, path):
        if not isinstance(v, dict):
            fail(path, f"expected an object, got {type(v).__name__}")
        for k in v:
            if k not in fields:
                fail(f"{path}.{k}", "unknown field")
        out = {}
        for k, (val, default) in fields.items():
            if k in v:
                out[k] = val(v[k], f"{path}.{k}")
            elif default is REQUIRED:
                fail(f"{path}.{k}", "missing required field")
            else:
                out[k] = default
        return out
    return check


# -- space ----------------------------------------------------------------

GENERATORS = {
    "grid": {"dim": (integer(1, 2), REQUIRED), "m": (integer(2), REQUIRED)},
    "path": {"n": (integer(2), REQUIRED)},
    "cantor_line": {"depth": (integer(0), REQUIRED), "ratio": (num(0, 0.5, True, True), REQUIRED),
                    "m": (optional(integer(2)), None)},
}


def validate_space(v, path="space"):
    if not isinstance(v, dict):
        fail(path, "expected an object")
    if "file" in v:
        return obj({"file": (string(), REQUIRED)})(v, path)
    if "generator" not in v:
        fail(path, "needs either 'generator' or 'file'")
    kind = string(set(GENERATORS))(v["generator"], f"{path}.generator")
    rest = {k: x for k, x in v.items() if k != "generator"}
    out = obj(GENERATORS[kind])(rest, path)
    out["generator"] = kind
    return out


# -- sets, points and fields ----------------------------------------------

SET_KINDS = ("indices", "ball", "coord_range", "nearest", "union", "intersection", "difference")


def validate_set(v, path):
    if not isinstance(v, dict) or len(v) != 1:
        fail(path, f"a set is an object with exactly one of {list(SET_KINDS)}")
    (kind, body), = v.items()
    sub = f"{path}.{kind}"
    if kind == "indices":
        return {kind: listof(integer(0))(body, sub)}
    if kind == "ball":
        return {kind: obj({"center": (validate_point, REQUIRED),
                           "radius": (num(0, lo_open=True), REQUIRED),
                           "closed": (boolean, REQUIRED)})(body, sub)}
    if kind == "coord_range":
        out = obj({"axis": (integer(0), REQUIRED), "min": (optional(num()), None),
                   "max": (optional(num()), None)})(body, sub)
        if out["min"] is None and out["max"] is None:
            fail(sub, "needs 'min' or 'max'")
        return {kind: out}
    if kind == "nearest":
        return {kind: listof(num(), 1)(body, sub)}
    if kind in ("union", "intersection"):
        return {kind: listof(string(), 1)(body, sub)}
    if kind == "difference":
        names = listof(string(), 2)(body, sub)
        if len(names) != 2:
            fail(sub, "needs exactly two set names")
        return {kind: names}
    fail(path, f"unknown set kind {kind!r}; expected one of {list(SET_KINDS)}")


def validate_point(v, path):
    if isinstance(v, int) and not isinstance(v, bool):
        return integer(0)(v, path)
    if isinstance(v, dict):
        return obj({"nearest": (listof(num(), 1), REQUIRED)})(v, path)
    fail(path, f"a point is an index or {{'nearest': [coordinates]}}, got {v!r}")


FIELD_KINDS = {
    "coordinate": {"axis": (integer(0), REQUIRED)},
    "distance_to": {"set": (string(), REQUIRED), "power": (num(0, lo_open=True), REQUIRED),
                    "cap": (optional(num(0, lo_open=True)), None)},
    "indicator": {"set": (string(), REQUIRED)},
    "values": {"values": (listof(num()), REQUIRED)},
    "random_normal": {},
}


def validate_field(v, path):
    if not isinstance(v, dict) or "kind" not in v:
        fail(path, f"a field is an object with 'kind' in {sorted(FIELD_KINDS)}")
    kind = string(set(FIELD_KINDS))(v["kind"], f"{path}.kind")
    out = obj(FIELD_KINDS[kind])({k: x for k, x in v.items() if k != "kind"}, path)
    out["kind"] = kind
    return out


# -- top level ------------------------------------------------------------


def validate_campaign_shape(v, path):
    from .campaigns import OPS
    out = obj({"name": (string(pattern=NAME_RE), REQUIRED), "op": (string(set(OPS)), REQUIRED),
               "params": (lambda x, p: x, REQUIRED)})(v, path)
    out["params"] = obj(OPS[out["op"]].params)(out["params"], f"{path}.params")
    return out


def validate(raw) -> dict:
    """Schema check of a parsed scenario; returns the normalized dict."""
    sc = obj({"seed": (integer(0), REQUIRED), "space": (validate_space, REQUIRED),
              "sets": (lambda v, p: v, {}), "campaigns": (listof(validate_campaign_shape),
                                                          REQUIRED),
              "output": (optional(string()), None), "workers": (optional(integer(1)), None),
              "cache": (optional(string()), None),
              "description": (optional(string()), None)})(raw, "scenario")
    sets = sc["sets"]
    if not isinstance(sets, dict):
        fail("scenario.sets", "expected an object")
    sc["sets"] = {}
    for name, body in sets.items():
        string(pattern=NAME_RE)(name, f"scenario.sets.{name}")
        sc["sets"][name] = validate_set(body, f"scenario.sets.{name}")
    seen = set()
    for i, c in enumerate(sc["campaigns"]):
        if c["name"] in seen:
            fail(f"scenario.campaigns[{i}].name", f"duplicate campaign name {c['name']!r}")
        seen.add(c["name"])
    return sc


def scenario_hash(raw) -> str:
    return hashlib.sha256(jsonio.dumps(raw, indent=None).encode()).hexdigest()


# -- resolution against a space -------------------------------------------


@dataclass
class Context:
    space: MetricMeasureSpace
    sets: dict
    seed: int
    workers: int = 1
    cache: object = None
    fields: dict = field(default_factory=dict)

    def point(self, v, path):
        if isinstance(v, dict):
            coords = np.asarray(v["nearest"], dtype=float)
            if self.space.coords is None or coords.size != self.space.coords.shape[1]:
                fail(path, "'nearest' needs coordinates matching the space dimension")
            return int(np.argmin(np.sqrt(((self.space.coords - coords) ** 2).sum(axis=1))))
        if not v < self.space.n:
            fail(path, f"point index {v} is outside [0, {self.space.n})")
        return int(v)

    def set(self, name, path):
        if name not in self.sets:
            fail(path, f"unknown set {name!r}")
        return self.sets[name]

    def field(self, spec, path):
        kind = spec["kind"]
        n = self.space.n
        if kind == "coordinate":
            if self.space.coords is None or spec["axis"] >= self.space.coords.shape[1]:
                fail(path, f"axis {spec['axis']} is not available for this space")
            return self.space.coords[:, spec["axis"]].copy()
        if kind == "distance_to":
            E = self.set(spec["set"], f"{path}.set")
            if not E:
                fail(f"{path}.set", f"set {spec['set']!r} is empty")
            u = dist_to_set_all(self.space, E) ** spec["power"]
            return u if spec["cap"] is None else np.minimum(u, spec["cap"])
        if kind == "indicator":
            return self.set(spec["set"], f"{path}.set").mask.astype(float)
        if kind == "values":
            if len(spec["values"]) != n:
                fail(f"{path}.values", f"needs {n} values, got {len(spec['values'])}")
            return np.array(spec["values"], dtype=float)
        return np.random.default_rng(self.seed).normal(size=n)


def _resolve_set(ctx: Context, body, path) -> PointSet:
    (kind, v), = body.items()
    n = ctx.space.n
    sub = f"{path}.{kind}"
    if kind == "indices":
        for i, x in enumerate(v):
            if x >= n:
                fail(f"{sub}[{i}]", f"point index {x} is outside [0, {n})")
        return PointSet.from_indices(n, v)
    if kind == "ball":
        c = ctx.point(v["center"], f"{sub}.center")
        return ball_points(ctx.space, BallSpec(c, v["radius"], v["closed"]))
    if kind == "coord_range":
        if ctx.space.coords is None or v["axis"] >= ctx.space.coords.shape[1]:
            fail(f"{sub}.axis", f"axis {v['axis']} is not available for this space")
        x = ctx.space.coords[:, v["axis"]]
        m = np.ones(n, dtype=bool)
        tol = 1e-12
        if v["min"] is not None:
            m &= x >= v["min"] - tol
        if v["max"] is not None:
            m &= x <= v["max"] + tol
        return PointSet(m)
    if kind == "nearest":
        return PointSet.from_indices(n, [ctx.point({"nearest": v}, sub)])
    parts = [ctx.set(name, f"{sub}[{i}]") for i, name in enumerate(v)]
    out = parts[0]
    for s in parts[1:]:
        out = out | s if kind == "union" else out & s if kind == "intersection" else out - s
    return out


def build_context(sc: dict, base_dir=".", workers=None, cache=None) -> Context:
    """Load the space and resolve every named set (declaration order)."""
    spec = sc["space"]
    try:
        if "file" in spec:
            import os
            path = spec["file"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            space, sets = generate_space("from_file", path=path)
        else:
            params = {k: v for k, v in spec.items() if k != "generator" and v is not None}
            space, sets = generate_space(spec["generator"], **params)
    except FraccapError as exc:
        fail("scenario.space", str(exc))
    except OSError as exc:
        fail("scenario.space.file", str(exc))
    sets = dict(sets)
    ctx = Context(space, sets, sc["seed"], workers or sc.get("workers") or 1, cache)
    for name, body in sc["sets"].items():
        sets[name] = _resolve_set(ctx, body, f"scenario.sets.{name}")
    return ctx
