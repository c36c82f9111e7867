"""Capacity density scans, Hardy-type constants and self-improvement scans.

Every constant here is an empirical extremum over a finite family of balls,
points and test functions. Ratios of the form 0/0 are skipped and counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import CapacityOptions, CapacityProblem, solve_many
from .errors import PreconditionError
from .functionals import _ball_averages, _check_beta_q, _check_p, gagliardo_fields
from .space import (TIE_RTOL, BallSpec, PointSet, _as_mask, ball_points, dist_to_set_all,
                    dyadic_radii, set_diam)

DEFAULT_LAMBDA = 4.0
DEFAULT_SMALL_LAMBDA = 3.0
C1_FRACTIONAL = 1 / 8
C1_HTL = 1 / 80


# -- test families --------------------------------------------------------


@dataclass
class TestFamily:
    """Named generators of fields vanishing on E.

    Each generator is a dict with a "kind" key:
      distance_powers: s (list), gamma (list); u = min(1, (dist(., E)/s)^gamma)
      bump_products: s, R (lists), count, seed; min(1, dist/s) times a tent of radius R
      random_lipschitz: count, seed, anchors; 1-Lipschitz McShane extensions capped by dist
      capacity_minimizers: fields (list of phi); u = 1 - phi
    """

    __test__ = False  # not a pytest class
    generators: list = field(default_factory=list)

    @classmethod
    def distance_powers(cls, s, gamma):
        return cls([{"kind": "distance_powers", "s": list(s), "gamma": list(gamma)}])

    def fields(self, space, E):
        Em = _as_mask(space, E)
        if not Em.any():
            raise PreconditionError("test families need a nonempty E")
        dE = dist_to_set_all(space, PointSet(Em))
        out = []
        for g in self.generators:
            kind = g["kind"]
            if kind == "distance_powers":
                for s in g["s"]:
                    for gam in g["gamma"]:
                        out.append((f"dist_pow(s={s:g},gamma={gam:g})",
                                    np.minimum(1.0, (dE / s) ** gam)))
            elif kind == "bump_products":
                rng = np.random.default_rng(g.get("seed", 0))
                pool = np.flatnonzero(~Em)
                cs = rng.choice(pool, size=min(int(g.get("count", 3)), pool.size), replace=False)
                for c in cs:
                    dc = space.dist_row(int(c))
                    for s in g["s"]:
                        for R in g["R"]:
                            out.append((f"bump(c={int(c)},s={s:g},R={R:g})",
                                        np.minimum(1.0, dE / s) * np.maximum(0.0, 1 - dc / R)))
            elif kind == "random_lipschitz":
                rng = np.random.default_rng(g.get("seed", 0))
                k = int(g.get("anchors", 8))
                scale = float(dE.max()) or 1.0
                for j in range(int(g.get("count", 5))):
                    z = rng.choice(space.n, size=min(k, space.n), replace=False)
                    v = rng.uniform(0, scale, size=z.size)
                    mc = (v[:, None] + space.dist(z, np.arange(space.n))).min(axis=0)
                    out.append((f"lipschitz(seed={g.get('seed', 0)},{j})", np.minimum(mc, dE)))
            elif kind == "capacity_minimizers":
                for j, phi in enumerate(g["fields"]):
                    out.append((f"cap_min({j})", 1.0 - np.asarray(phi, dtype=np.float64)))
            else:
                raise PreconditionError(f"unknown test family generator {kind!r}")
        for _, u in out:
            u[Em] = 0.0
        return out


# -- density scans --------------------------------------------------------


@dataclass
class DensityScanReport:
    kind: str
    params: dict
    lam: float
    radii: list
    centers: list
    entries: list  # dicts: x, r, num, den, ratio, num_status, den_status
    c0: float | None
    witness: dict | None
    approximate: bool
    errors: list
    warnings: list


def _radius_bound(space, Em, c1, max_radius):
    if max_radius is not None:
        return float(max_radius)
    dE = set_diam(space, Em)
    if dE == 0:
        raise PreconditionError("diam(E) = 0: no admissible radii (pass max_radius to override)")
    return c1 * dE


def _scan_setup(space, E, lam, radii, centers, c1, max_radius):
    Em = _as_mask(space, E)
    if not Em.any():
        raise PreconditionError("E must be nonempty")
    if not lam > 2:
        raise PreconditionError("density scans need Lambda > 2")
    rmax = _radius_bound(space, Em, c1, max_radius)
    if radii is None:
        radii = dyadic_radii(space.min_dist, rmax)
    radii = [float(r) for r in radii]
    for r in radii:
        if not 0 < r < rmax:
            raise PreconditionError(f"radius {r} outside (0, {rmax})")
    if not radii:
        raise PreconditionError(f"no dyadic radius in [min distance, {rmax})")
    centers = np.flatnonzero(Em) if centers is None else np.asarray(centers, dtype=int)
    if not np.all(Em[centers]):
        raise PreconditionError("scan centers must lie in E")
    return Em, radii, [int(c) for c in centers]


def _scan_tasks(space, Em, lam, beta, p, q, radii, centers, kind):
    tasks = []
    for x in centers:
        for r in radii:
            B = BallSpec(x, r)
            Bbar = ball_points(space, B.as_closed())
            tasks.append((kind, CapacityProblem(space, Bbar & PointSet(Em), B, lam, beta, p, q)))
            tasks.append((kind, CapacityProblem(space, Bbar, B, lam, beta, p, q)))
    return tasks


def _scan_report(kind, params, lam, radii, centers, results):
    entries, errors = [], []
    it = iter(results)
    for x in centers:
        for r in radii:
            num, den = next(it), next(it)
            if den.value > 0:
                ratio = num.value / den.value
            else:
                ratio = None
                errors.append({"x": x, "r": r, "error": "zero capacity of the closed ball"})
            entries.append({"x": x, "r": r, "num": num.value, "den": den.value, "ratio": ratio,
                            "num_status": num.status, "den_status": den.status})
    valid = [e for e in entries if e["ratio"] is not None]
    c0, witness = None, None
    if valid:
        w = min(valid, key=lambda e: (e["ratio"], e["r"], e["x"]))
        c0, witness = w["ratio"], {"x": w["x"], "r": w["r"]}
    approx = any(e["num_status"] != "exact" or e["den_status"] != "exact" for e in entries)
    warns = ["lambda_2"] if lam == 2 else []
    return DensityScanReport(kind, params, lam, list(radii), list(centers), entries, c0, witness,
                             approx, errors, warns)


def capacity_density_scan(space, E, beta, p, q, lam=DEFAULT_LAMBDA, radii=None, centers=None,
                          c1=C1_FRACTIONAL, max_radius=None, opts: CapacityOptions | None = None,
                          cache=None, workers=1, kind="fractional") -> DensityScanReport:
    """c0 = min over (x, r) of cap(E within the closed ball) / cap(closed ball)."""
    _check_beta_q(beta, q)
    _check_p(p)
    Em, radii, centers = _scan_setup(space, E, lam, radii, centers, c1, max_radius)
    tasks = _scan_tasks(space, Em, lam, beta, p, q, radii, centers, kind)
    results = solve_many(tasks, opts, cache, workers)
    return _scan_report(kind, {"beta": beta, "p": p, "q": q}, lam, radii, centers, results)


def htl_density_scan(space, E, beta, p, q, lam=DEFAULT_LAMBDA, radii=None, centers=None,
                     c1=C1_HTL, max_radius=None, opts=None, cache=None, workers=1):
    return capacity_density_scan(space, E, beta, p, q, lam, radii, centers, c1, max_radius, opts,
                                 cache, workers, kind="htl")


# -- Hardy-type reports ---------------------------------------------------


@dataclass
class HardyReport:
    kind: str
    constant: float
    witness: dict | None
    evaluated: int
    skipped: int
    infinite: int
    family_size: int
    admissible: int
    per_field: dict
    all_skipped: bool


def _finish(kind, best, evaluated, skipped, infinite, labels, admissible, per_field, power=1.0):
    const = best[0] ** (1 / power) if best[0] > 0 else 0.0
    if infinite:
        const = math.inf
    return HardyReport(kind, const, best[1], evaluated, skipped, infinite, len(labels), admissible,
                       {k: (v ** (1 / power) if v > 0 else 0.0) for k, v in per_field.items()},
                       evaluated == 0)


class _Tracker:
    def __init__(self, labels):
        self.best = (0.0, None)
        self.evaluated = self.skipped = self.infinite = 0
        self.per_field = {lab: 0.0 for lab in labels}

    def add(self, num, den, label, where):
        if num == 0 and den == 0:
            self.skipped += 1
            return
        self.evaluated += 1
        ratio = math.inf if den == 0 else num / den
        if ratio == math.inf:
            self.infinite += 1
        self.per_field[label] = max(self.per_field[label], ratio)
        if ratio > self.best[0]:
            self.best = (ratio, dict(where, field=label))


def _family_matrix(space, E, family):
    fields = family.fields(space, E)
    if not fields:
        raise PreconditionError("test family is empty")
    labels = [lab for lab, _ in fields]
    return labels, np.array([u for _, u in fields])


def pointwise_hardy_report(space, E, family: TestFamily, beta, p, q, c1=C1_FRACTIONAL,
                           max_dist=None, radius_grid=None) -> HardyReport:
    """c_H over admissible points 0 < dist(x, E) < c1 diam(E).

    The maximal function visits every distinct ball unless ``radius_grid``
    (a count k) restricts it to radii 2 dist(x,E) j/k, j = 1..k.
    """
    _check_beta_q(beta, q)
    _check_p(p)
    Em = _as_mask(space, E)
    limit = _radius_bound(space, Em, c1, max_dist)
    dE = dist_to_set_all(space, PointSet(Em))
    xs = np.flatnonzero((dE > 0) & (dE < limit * (1 - TIE_RTOL)))
    if xs.size == 0:
        raise PreconditionError(f"no point with 0 < dist(x,E) < {limit}")
    labels, U = _family_matrix(space, Em, family)
    tr = _Tracker(labels)
    w = space.weights
    for x in xs:
        delta = float(dE[x])
        A = ball_points(space, BallSpec(int(x), 2 * delta)).indices
        G = gagliardo_fields(space, U, beta, q, A, points=A)
        row = space.dist_row(int(x))
        radii = None if radius_grid is None else 2 * delta * np.arange(1, radius_grid + 1) / radius_grid
        f = np.zeros(space.n)
        for i, lab in enumerate(labels):
            f[A] = G[i] ** p
            M = float(_ball_averages(row, w, f, 2 * delta, radii).max())
            tr.add(abs(U[i, x]), delta ** beta * M ** (1 / p), lab, {"x": int(x)})
    return _finish("pointwise", tr.best, tr.evaluated, tr.skipped, tr.infinite, labels, xs.size,
                   tr.per_field)


def default_balls(space, Em, c1=C1_FRACTIONAL, max_radius=None, centers=None):
    rmax = _radius_bound(space, Em, c1, max_radius)
    radii = dyadic_radii(space.min_dist, rmax)
    centers = np.flatnonzero(Em) if centers is None else centers
    return [BallSpec(int(c), r) for c in centers for r in radii]


def _check_balls(space, Em, balls, c1, max_radius):
    rmax = _radius_bound(space, Em, c1, max_radius)
    for b in balls:
        if not Em[b.center]:
            raise PreconditionError(f"ball center {b.center} is not in E")
        if not b.radius < rmax:
            raise PreconditionError(f"ball radius {b.radius} is not below {rmax}")


def boundary_poincare_report(space, E, family: TestFamily, beta, t, p, q,
                             lam=DEFAULT_SMALL_LAMBDA, balls=None, c1=C1_FRACTIONAL,
                             max_radius=None) -> HardyReport:
    """c_b = max of (avg_B |u|^t)^{1/t} / (R^beta (avg_{lam B} G_{lam B}^p)^{1/p})."""
    _check_beta_q(beta, q)
    _check_p(p)
    if not t >= 1 or not lam >= 1:
        raise PreconditionError("need t >= 1 and lambda >= 1")
    Em = _as_mask(space, E)
    balls = default_balls(space, Em, c1, max_radius) if balls is None else balls
    _check_balls(space, Em, balls, c1, max_radius)
    labels, U = _family_matrix(space, Em, family)
    tr = _Tracker(labels)
    w = space.weights
    for b in balls:
        Bi = ball_points(space, b).indices
        Li = ball_points(space, BallSpec(b.center, lam * b.radius)).indices
        G = gagliardo_fields(space, U, beta, q, Li, points=Li)
        wb, wl = w[Bi], w[Li]
        for i, lab in enumerate(labels):
            lhs = (float((np.abs(U[i, Bi]) ** t * wb).sum()) / wb.sum()) ** (1 / t)
            rhs = b.radius ** beta * (float((G[i] ** p * wl).sum()) / wl.sum()) ** (1 / p)
            tr.add(lhs, rhs, lab, {"center": b.center, "radius": b.radius})
    return _finish("boundary", tr.best, tr.evaluated, tr.skipped, tr.infinite, labels,
                   len(balls), tr.per_field)


def ball_hardy_report(space, E, family: TestFamily, beta, p, q, lam=DEFAULT_SMALL_LAMBDA,
                      balls=None, c1=C1_FRACTIONAL, max_radius=None) -> HardyReport:
    """c_I with c_I^p = max of sum_{B minus E} |u|^p dist^{-beta p} mu / energy on lam B."""
    _check_beta_q(beta, q)
    _check_p(p)
    if not lam >= 1:
        raise PreconditionError("need lambda >= 1")
    Em = _as_mask(space, E)
    balls = default_balls(space, Em, c1, max_radius) if balls is None else balls
    _check_balls(space, Em, balls, c1, max_radius)
    labels, U = _family_matrix(space, Em, family)
    dE = dist_to_set_all(space, PointSet(Em))
    tr = _Tracker(labels)
    w = space.weights
    for b in balls:
        Bm = ball_points(space, b).mask & ~Em
        Bi = np.flatnonzero(Bm)
        Li = ball_points(space, BallSpec(b.center, lam * b.radius)).indices
        G = gagliardo_fields(space, U, beta, q, Li, points=Li)
        for i, lab in enumerate(labels):
            lhs = float((np.abs(U[i, Bi]) ** p * dE[Bi] ** (-beta * p) * w[Bi]).sum())
            rhs = float((G[i] ** p * w[Li]).sum())
            tr.add(lhs, rhs, lab, {"center": b.center, "radius": b.radius})
    return _finish("ball", tr.best, tr.evaluated, tr.skipped, tr.infinite, labels, len(balls),
                   tr.per_field, power=p)


# -- self-improvement -----------------------------------------------------


@dataclass
class SelfImprovementReport:
    base: dict
    delta: float
    step: float
    half_width: int
    q_hats: list
    lattice: list  # dicts: beta, p, q, c0, approximate, skipped
    region: list  # (beta, p) pairs passing for every q_hat
    eps: float
    notes: list


def self_improvement_scan(space, E, beta, p, q, lam=DEFAULT_LAMBDA, step=0.05, half_width=2,
                          q_hats=(1.5, 2.0, 3.0), delta=None, radii=None, centers=None,
                          c1=C1_FRACTIONAL, max_radius=None, opts=None, cache=None,
                          workers=1) -> SelfImprovementReport:
    """c0 over the (beta^, p^) lattice around the base for each q^.

    ``eps`` is step * k for the largest k such that every lattice point with
    max(|i|, |j|) <= k has c0 >= delta for all q^ (closed-box semantics).
    """
    Em, radii, centers = _scan_setup(space, E, lam, radii, centers, c1, max_radius)
    notes = []
    base_tasks = _scan_tasks(space, Em, lam, beta, p, q, radii, centers, "fractional")
    points = []
    for i in range(-half_width, half_width + 1):
        for j in range(-half_width, half_width + 1):
            for qh in q_hats:
                bh, ph = round(beta + i * step, 12), round(p + j * step, 12)
                points.append((i, j, bh, ph, float(qh)))
    tasks = list(base_tasks)
    valid = []
    for i, j, bh, ph, qh in points:
        ok = 0 < bh < 1 and ph > 1 and qh >= 1
        valid.append(ok)
        if ok:
            tasks += _scan_tasks(space, Em, lam, bh, ph, qh, radii, centers, "fractional")
        else:
            notes.append(f"skipped lattice point beta={bh}, p={ph}, q={qh}")
    results = solve_many(tasks, opts, cache, workers)
    per = 2 * len(radii) * len(centers)
    base_rep = _scan_report("fractional", {}, lam, radii, centers, results[:per])
    if delta is None:
        if base_rep.c0 is None:
            raise PreconditionError("base c0 is undefined")
        delta = base_rep.c0 / 2
    lattice, passing = [], {}
    pos = per
    for (i, j, bh, ph, qh), ok in zip(points, valid):
        if ok:
            rep = _scan_report("fractional", {}, lam, radii, centers, results[pos:pos + per])
            pos += per
            c0, approx = rep.c0, rep.approximate
        else:
            c0, approx = None, False
        lattice.append({"i": i, "j": j, "beta": bh, "p": ph, "q": qh, "c0": c0,
                        "approximate": approx, "skipped": not ok})
        good = ok and c0 is not None and c0 >= delta
        passing[(i, j)] = passing.get((i, j), True) and good
    k = -1
    for ring in range(half_width + 1):
        if all(passing[(i, j)] for i in range(-ring, ring + 1) for j in range(-ring, ring + 1)):
            k = ring
        else:
            break
    region = [(round(beta + i * step, 12), round(p + j * step, 12))
              for (i, j), good in sorted(passing.items()) if good]
    return SelfImprovementReport({"beta": beta, "p": p, "q": q, "c0": base_rep.c0}, delta, step,
                                 half_width, [float(x) for x in q_hats], lattice, region,
                                 max(k, 0) * step, notes)


__all__ = ["DensityScanReport", "HardyReport", "SelfImprovementReport", "TestFamily",
           "ball_hardy_report", "boundary_poincare_report", "capacity_density_scan",
           "htl_density_scan", "pointwise_hardy_report", "self_improvement_scan"]
