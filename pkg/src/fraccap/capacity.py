"""Fractional and Hajlasz-Triebel-Lizorkin relative capacities.

A problem (E, 2B, Lambda B) fixes phi = 1 on E and phi = 0 on Lambda B minus 2B;
the remaining points of 2B are free in [0, 1]. Points outside Lambda B do not
enter the energy and carry phi = 0 in the returned minimizer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from . import jsonio
from .errors import DegenerateError, PreconditionError
from .functionals import _check_beta_q, _check_p, _field, average, gagliardo_energy, ratio
from .htl import HTLOptions, _check_p_open, _Program, _sequence, htl_program_for_capacity
from .kernel import kernel
from .optim import spg
from .space import (BallSpec, MetricMeasureSpace, PointSet, _as_mask, ball_mass, ball_points,
                    dist_to_set_all)


@dataclass(frozen=True)
class CapacityOptions:
    method: str = "auto"  # auto | direct | spg
    gap_tol: float = 1e-6
    stall_rtol: float = 1e-9
    stall_window: int = 50
    max_iter: int = 20000
    conic_limit: int = 150  # largest energy domain for the conic fallback; 0 disables it
    htl: HTLOptions = HTLOptions()

    def __post_init__(self):
        if self.method not in ("auto", "direct", "spg"):
            raise PreconditionError(f"unknown capacity method {self.method!r}")

    def key(self) -> dict:
        return {"method": self.method, "gap_tol": self.gap_tol, "stall_rtol": self.stall_rtol,
                "stall_window": self.stall_window, "max_iter": self.max_iter,
                "conic_limit": self.conic_limit, "htl": self.htl.key()}


@dataclass(frozen=True, eq=False)
class CapacityProblem:
    """cap(E, 2B, lam B) with exponents (beta, p, q).

    2B is an open ball. ``closed_outer`` takes lam B closed, so for lam = 2 the
    sphere at distance 2r is pinned to zero inside the energy domain; the
    default uses an open lam B.
    """

    space: MetricMeasureSpace
    E: PointSet
    B: BallSpec
    lam: float = 4.0
    beta: float = 0.5
    p: float = 2.0
    q: float = 2.0
    closed_outer: bool = False

    def __post_init__(self):
        E = self.E if isinstance(self.E, PointSet) else PointSet(_as_mask(self.space, self.E))
        object.__setattr__(self, "E", E)
        _check_beta_q(self.beta, self.q)
        _check_p(self.p)
        if not self.lam >= 2:
            raise PreconditionError(f"Lambda must be >= 2, got {self.lam}")
        closed_B = ball_points(self.space, self.B.as_closed())
        if not E <= closed_B:
            bad = int((E - closed_B).indices[0])
            raise PreconditionError(f"E is not inside the closed ball (point {bad})")

    def ball(self, t: float, closed: bool = False) -> BallSpec:
        return BallSpec(self.B.center, t * self.B.radius, closed)

    def regions(self):
        """Masks (E, 2B, lam B, free, zero set inside lam B)."""
        E = self.E.mask
        two = ball_points(self.space, self.ball(2)).mask
        big = ball_points(self.space, self.ball(self.lam, self.closed_outer)).mask | two
        return E, two, big, two & ~E, big & ~two

    def key(self) -> dict:
        return {"space": self.space.digest(), "E": self.E.digest(), "center": int(self.B.center),
                "radius": float(self.B.radius), "lam": float(self.lam), "beta": float(self.beta),
                "p": float(self.p), "q": float(self.q), "closed_outer": bool(self.closed_outer)}

    def with_(self, **changes) -> "CapacityProblem":
        kw = dict(space=self.space, E=self.E, B=self.B, lam=self.lam, beta=self.beta, p=self.p,
                  q=self.q, closed_outer=self.closed_outer)
        kw.update(changes)
        return CapacityProblem(**kw)


@dataclass
class CapacityResult:
    value: float
    minimizer: np.ndarray
    status: str
    gap: float
    meta: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _warnings(problem):
    return ["lambda_2"] if problem.lam == 2 else []


def _trivial(problem, phi, method, t0):
    return CapacityResult(0.0, phi, "exact", 0.0,
                          {"method": method, "iterations": 0, "wall": time.perf_counter() - t0},
                          _warnings(problem))


# -- energy on the problem domain --------------------------------------


def _local_energy_grad(K, mu, phi, p, q, want_grad=True):
    delta = phi[:, None] - phi[None, :]
    if q == 2:
        S = (K * (delta * delta)).sum(axis=1)
        T = K * delta if want_grad else None
    else:
        A = np.abs(delta)
        S = (K * A ** q).sum(axis=1)
        T = K * A ** (q - 1) * np.sign(delta) if want_grad else None
    F = float((mu * S ** (p / q)).sum())
    if not want_grad:
        return F, None
    with np.errstate(divide="ignore", invalid="ignore"):
        c = mu * p * S ** (p / q - 1)
    c[S == 0] = 0.0
    return F, c * T.sum(axis=1) - T.T @ c


def problem_energy(problem: CapacityProblem, phi) -> float:
    """Gagliardo energy of phi on the problem's energy domain lam B."""
    _, _, big, _, _ = problem.regions()
    dom = np.flatnonzero(big)
    K = kernel(problem.space, dom, dom, problem.beta, problem.q)
    return _local_energy_grad(K, problem.space.weights[dom], np.asarray(phi)[dom], problem.p,
                              problem.q, want_grad=False)[0]


def _conic_energy_program(K, mu, phi, fl, p, q):
    """The energy as a mixed-norm program: G[x, y] >= |K_xy^(1/q) (phi_x - phi_y)|."""
    m = mu.size
    xs, ys = np.nonzero(K > 0)
    a = K[xs, ys] ** (1 / q)
    col = np.full(m, -1)
    col[fl] = np.arange(fl.size)
    fixed = phi.copy()
    fixed[fl] = 0.0
    const = a * (fixed[xs] - fixed[ys])
    e = np.arange(xs.size)
    Ag = scipy.sparse.csr_matrix((np.ones(2 * e.size), (np.r_[e, e + e.size],
                                                        np.r_[xs * m + ys, xs * m + ys])),
                                 shape=(2 * e.size, m * m))
    rows, cols, vals = [], [], []
    for sign, off in ((1.0, 0), (-1.0, e.size)):
        for pts, s in ((xs, sign), (ys, -sign)):
            hit = col[pts] >= 0
            rows.append(e[hit] + off)
            cols.append(col[pts[hit]])
            vals.append(s * a[hit])
    Mphi = scipy.sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows),
                                                            np.concatenate(cols))),
                                   shape=(2 * e.size, fl.size))
    return _Program(mu, m, Ag, np.r_[-const, const], Mphi, p, q)


def fractional_capacity(problem: CapacityProblem, opts: CapacityOptions | None = None):
    """cap_{beta,p,q}(E, 2B, lam B) by a direct solve (p = q = 2) or projected gradient."""
    opts = opts or CapacityOptions()
    t0 = time.perf_counter()
    space = problem.space
    E, two, big, free, zero = problem.regions()
    if not E.any():
        return _trivial(problem, np.zeros(space.n), "empty", t0)
    if not zero.any():
        return _trivial(problem, two.astype(float), "no_zero_set", t0)
    p, q = problem.p, problem.q
    dom = np.flatnonzero(big)
    mu = space.weights[dom]
    K = kernel(space, dom, dom, problem.beta, q)
    phi = E[dom].astype(float)
    fl = np.flatnonzero(free[dom])
    quadratic = p == 2 and q == 2
    method = opts.method
    if method == "direct" and not quadratic:
        raise PreconditionError("the direct solve needs p = q = 2")
    if method == "auto":
        method = "direct" if quadratic else "spg"
    meta = {"method": method, "free": int(fl.size)}
    if fl.size == 0:
        value = _local_energy_grad(K, mu, phi, p, q, want_grad=False)[0]
        meta.update(iterations=0, wall=time.perf_counter() - t0)
        out = np.zeros(space.n)
        out[dom] = phi
        return CapacityResult(value, out, "exact", 0.0, meta, _warnings(problem))
    if method == "direct":
        W = mu[:, None] * K
        W = W + W.T
        El = np.flatnonzero(E[dom])
        L = -W[np.ix_(fl, fl)]
        L[np.diag_indices_from(L)] += W[fl].sum(axis=1)
        rhs = W[np.ix_(fl, El)].sum(axis=1)
        del W
        phi[fl] = np.clip(scipy.linalg.solve(L, rhs, assume_a="pos"), 0.0, 1.0)
        F, g = _local_energy_grad(K, mu, phi, p, q)
        gf = g[fl]
        s = np.where(gf > 0, 0.0, 1.0)
        gap = max(float(np.dot(gf, phi[fl] - s)), 0.0) / F if F > 0 else 0.0
        meta["iterations"] = 1
    else:
        r_gap = float(dist_to_set_all(space, PointSet(E), rows=np.flatnonzero(zero)).min())
        dE = dist_to_set_all(space, PointSet(E), rows=dom[fl])
        x0 = np.clip(1.0 - dE / r_gap, 0.0, 1.0)

        def fg(xf):
            phi[fl] = xf
            F, g = _local_energy_grad(K, mu, phi, p, q)
            return F, g[fl]

        res = spg(fg, x0, 0.0, 1.0, gap_tol=opts.gap_tol, stall_rtol=opts.stall_rtol,
                  stall_window=opts.stall_window, max_iter=opts.max_iter)
        phi[fl] = res.x
        F, gap = res.f, res.gap
        meta.update(iterations=res.iterations, evaluations=res.evaluations, stop=res.reason)
        if gap > opts.gap_tol and p > 1 and dom.size <= opts.conic_limit:
            prog = _conic_energy_program(K, mu, phi, fl, p, q)
            xf, _, _, dual, _, sstat = prog.solve(opts.htl)
            trial = phi.copy()
            trial[fl] = xf
            Fc = _local_energy_grad(K, mu, trial, p, q, want_grad=False)[0]
            if Fc < F:
                phi, F = trial, Fc
            gap = max(F - dual, 0.0) / F if F > 0 else 0.0
            meta.update(method="spg+conic", solver_status=sstat)
    out = np.zeros(space.n)
    out[dom] = phi
    status = "exact" if gap <= opts.gap_tol else "upper_bound"
    meta["wall"] = time.perf_counter() - t0
    return CapacityResult(float(F), out, status, float(gap), meta, _warnings(problem))


def htl_capacity(problem: CapacityProblem, opts: CapacityOptions | None = None):
    """cap over the HTL seminorm: joint convex program in (phi, g); value is the p-th power."""
    opts = opts or CapacityOptions()
    _check_p_open(problem.p)
    t0 = time.perf_counter()
    space = problem.space
    E, two, big, free, zero = problem.regions()
    if not E.any():
        return _trivial(problem, np.zeros(space.n), "empty", t0)
    if not zero.any():
        return _trivial(problem, two.astype(float), "no_zero_set", t0)
    phi_fixed = E.astype(float)
    free_idx = np.flatnonzero(free)
    idx, Ag, c, Mphi, k0, K = htl_program_for_capacity(space, big, phi_fixed, free_idx,
                                                       problem.beta)
    prog = _Program(space.weights[idx], K, Ag, c, Mphi if free_idx.size else None,
                    problem.p, problem.q)
    phi_f, G, primal, dual, gap, sstat = prog.solve(opts.htl)
    out = phi_fixed.copy()
    if free_idx.size:
        out[free_idx] = phi_f
    status = "exact" if gap <= opts.htl.gap_tol else "upper_bound"
    meta = {"method": "conic", "free": int(free_idx.size), "rows": int(c.size),
            "solver_status": sstat, "dual": dual, "wall": time.perf_counter() - t0,
            "gradient": _sequence(space, big, idx, G, k0, None)}
    return CapacityResult(primal, out, status, gap, meta, _warnings(problem))


# -- cached dispatch -----------------------------------------------------

SOLVERS = {"fractional": fractional_capacity, "htl": htl_capacity}


def solve_capacity(kind: str, problem: CapacityProblem, opts: CapacityOptions | None = None,
                   cache=None) -> CapacityResult:
    opts = opts or CapacityOptions()
    if kind not in SOLVERS:
        raise PreconditionError(f"unknown capacity kind {kind!r}")
    if cache is None:
        return SOLVERS[kind](problem, opts)
    return solve_many([(kind, problem)], opts, cache)[0]


def _solve_task(args):
    kind, problem, opts = args
    return result_to_dict(SOLVERS[kind](problem, opts))


def solve_many(tasks, opts: CapacityOptions | None = None, cache=None, workers: int = 1):
    """Solve [(kind, problem), ...] in order, consulting the cache first.

    Results pass through the cache encoding whether or not a cache is given,
    so values do not depend on cache state or worker count.
    """
    from .parallel import pmap
    opts = opts or CapacityOptions()
    out = [None] * len(tasks)
    todo, seen = [], {}
    for i, (kind, problem) in enumerate(tasks):
        if kind not in SOLVERS:
            raise PreconditionError(f"unknown capacity kind {kind!r}")
        key = {"kind": kind, "problem": problem.key(), "opts": opts.key()}
        hit = cache.get(key) if cache is not None else None
        if hit is not None:
            out[i] = hit
            continue
        h = jsonio.dumps(key, indent=None)
        if h in seen:
            seen[h][1].append(i)
            continue
        seen[h] = (key, [i])
        todo.append((kind, problem, opts))
    results = pmap(_solve_task, todo, workers)
    for (key, idxs), res in zip(seen.values(), results):
        res = cache.put(key, res) if cache is not None else jsonio.loads(jsonio.dumps(res, None))
        for i in idxs:
            out[i] = res
    return [result_from_dict(d) for d in out]


def result_to_dict(res: CapacityResult) -> dict:
    meta = {k: v for k, v in res.meta.items() if k not in ("wall", "gradient")}
    return {"value": res.value, "minimizer": res.minimizer, "status": res.status, "gap": res.gap,
            "meta": meta, "warnings": list(res.warnings)}


def result_from_dict(d: dict) -> CapacityResult:
    return CapacityResult(float(d["value"]), np.asarray(d["minimizer"], dtype=np.float64),
                          d["status"], float(d["gap"]), dict(d["meta"]),
                          list(d["warnings"]))


# -- checks built on capacities ------------------------------------------


@dataclass
class BallBand:
    cap: float
    normalized: float
    lipschitz_upper: float
    status: str
    gap: float
    warnings: list


def lipschitz_test_function(space, x0, r):
    """max(0, 1 - dist(., closed ball)/r): equal to 1 on the closed ball, 0 outside 2B."""
    Bbar = ball_points(space, BallSpec(x0, r, closed=True))
    return np.clip(1.0 - dist_to_set_all(space, Bbar) / r, 0.0, 1.0)


def _band_problem(space, x0, r, lam, beta, p, q, closed_outer):
    B = BallSpec(x0, r)
    E = ball_points(space, B.as_closed())
    return CapacityProblem(space, E, B, lam, beta, p, q, closed_outer)


def _band(prob, res):
    x0, r = prob.B.center, prob.B.radius
    upper = problem_energy(prob, lipschitz_test_function(prob.space, x0, r))
    norm = res.value * r ** (prob.beta * prob.p) / ball_mass(prob.space, x0, r)
    return BallBand(res.value, norm, upper, res.status, res.gap, res.warnings)


def ball_capacity_band(space, x0, r, lam, beta, p, q, opts=None, cache=None,
                       closed_outer=False) -> BallBand:
    prob = _band_problem(space, x0, r, lam, beta, p, q, closed_outer)
    return _band(prob, solve_capacity("fractional", prob, opts, cache))


def ball_capacity_bands(space, balls, lam, beta, p, q, opts=None, cache=None, workers=1,
                        closed_outer=False) -> list[BallBand]:
    """ball_capacity_band over [(x0, r), ...] with one batched solve."""
    probs = [_band_problem(space, x0, r, lam, beta, p, q, closed_outer) for x0, r in balls]
    results = solve_many([("fractional", pr) for pr in probs], opts, cache, workers)
    return [_band(pr, res) for pr, res in zip(probs, results)]


@dataclass
class MazyaResult:
    ratio: float | None
    numerator: float
    denominator: float
    cap: CapacityResult
    degenerate: bool


def mazya_check(space, u, B: BallSpec, lam, lam_small, beta, t, p, q, opts=None,
                cache=None) -> MazyaResult:
    """(avg_{lam B}|u|^t)^{p/t} cap(closed B cap Z, 2B, lam B) / energy of u on lam_small*lam*B."""
    if not t >= p:
        raise PreconditionError("need t >= p")
    if not lam_small >= 1:
        raise PreconditionError("need lambda >= 1")
    u = _field(space, u)
    Z = u == 0
    E = ball_points(space, B.as_closed()).mask & Z
    if not E.any():
        raise DegenerateError("u has no zeros in the closed ball")
    prob = CapacityProblem(space, PointSet(E), B.as_open(), lam, beta, p, q)
    cap = solve_capacity("fractional", prob, opts, cache)
    LB = ball_points(space, BallSpec(B.center, lam * B.radius))
    avg = average(space, np.abs(u) ** t, LB) ** (p / t)
    num = avg * cap.value
    big = ball_points(space, BallSpec(B.center, lam_small * lam * B.radius))
    den = gagliardo_energy(space, u, beta, p, q, big)
    if num == 0:
        return MazyaResult(0.0, 0.0, den, cap, True)
    return MazyaResult(ratio(num, den), num, den, cap, False)


@dataclass
class ComparisonRow:
    name: str
    left: float
    right: float
    ratio: float | None
    left_status: str
    right_status: str
    inflation: float
    inside: bool


def _inside(space, B, t):
    """Whether the inflated ball t*B leaves part of the space uncovered."""
    return t * B.radius < space.dist_row(B.center).max()


def capacity_comparison_report(space, E, B: BallSpec, lam, beta, p, q, variants=("htl_vs_frac",),
                               opts=None, cache=None, strict=False,
                               closed_outer=False) -> list[ComparisonRow]:
    """Left/right capacity ratios for the seminorm-capacity comparisons.

    ``variants`` holds "htl_vs_frac" and/or ("q_pair", q, q_hat) entries.
    Inflated balls that swallow the whole space are flagged (``inside``
    false) or, with ``strict``, rejected.
    """
    E = PointSet(_as_mask(space, E))
    base = CapacityProblem(space, E, B, lam, beta, p, q, closed_outer)
    specs = []
    for v in variants:
        if v == "htl_vs_frac":
            specs.append(("frac_over_htl", ("fractional", base), ("htl", base.with_(lam=9 * lam)),
                          9 * lam))
            specs.append(("htl_over_frac", ("htl", base), ("fractional", base.with_(lam=73 * lam)),
                          73 * lam))
        elif isinstance(v, (tuple, list)) and v[0] == "q_pair":
            qa, qb = float(v[1]), float(v[2])
            left = base.with_(q=qa)
            specs.append((f"q_monotone({qa:g},{qb:g})", ("fractional", left),
                          ("fractional", base.with_(q=qb, lam=73 * 9 * lam)), 73 * 9 * lam))
            specs.append((f"q_independent({qa:g},{qb:g})", ("fractional", left),
                          ("fractional", base.with_(q=qb, lam=73 * 41)), 73 * 41))
        else:
            raise PreconditionError(f"unknown comparison variant {v!r}")
    rows = []
    for name, (lk, lp), (rk, rp), infl in specs:
        inside = _inside(space, B, infl)
        if strict and not inside:
            raise PreconditionError(
                f"{name}: inflated ball {infl:g}B needs a space with diameter above "
                f"{infl * B.radius:g} around the center")
        lres = solve_capacity(lk, lp, opts, cache)
        rres = solve_capacity(rk, rp, opts, cache)
        rows.append(ComparisonRow(name, lres.value, rres.value, ratio(lres.value, rres.value),
                                  lres.status, rres.status, infl, inside))
    return rows


__all__ = ["BallBand", "CapacityOptions", "CapacityProblem", "CapacityResult", "ComparisonRow",
           "MazyaResult", "ball_capacity_band", "ball_capacity_bands", "capacity_comparison_report",
           "fractional_capacity", "htl_capacity", "lipschitz_test_function", "mazya_check",
           "problem_energy", "solve_capacity", "solve_many"]
