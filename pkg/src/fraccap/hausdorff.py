"""Restricted Hausdorff content of codimension d as weighted set cover.

Candidate balls are centred at points within rho of F with radii drawn from
the realized distances in (0, rho] plus a singleton radius (half the minimal
distance, or rho if smaller). A ball B(c, r) costs mu(B(c, r)) r^{-d}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .errors import PreconditionError, TooManyCandidates
from .functionals import ratio
from .space import (TIE_RTOL, BallSpec, MetricMeasureSpace, PointSet, _as_mask, _check_point,
                    ball_points, dist_to_set_all, unique_distances)

EXACT_LIMIT = 24
CANDIDATE_LIMIT = 100_000
BRACKET_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ContentProblem:
    space: MetricMeasureSpace
    F: PointSet
    d: float
    rho: float
    closed: bool = True

    def __post_init__(self):
        F = self.F if isinstance(self.F, PointSet) else PointSet(_as_mask(self.space, self.F))
        object.__setattr__(self, "F", F)
        if not self.rho > 0:
            raise PreconditionError("rho must be positive")
        if not self.d >= 0:
            raise PreconditionError("codimension d must be nonnegative")


@dataclass
class CoverSolution:
    balls: list
    value: float
    mode: str
    costs: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


@dataclass
class Candidates:
    centers: np.ndarray
    radii: np.ndarray
    costs: np.ndarray
    members: list  # arrays of covered positions within F (F in index order)
    f_index: np.ndarray

    def __len__(self):
        return self.costs.size

    @property
    def covers(self) -> list:
        """Coverage sets as python int bitmasks over the points of F."""
        if not hasattr(self, "_covers"):
            self._covers = [_bitmask(m) for m in self.members]
        return self._covers

    def incidence(self):
        """Sparse (candidates x |F|) 0/1 matrix."""
        lens = [m.size for m in self.members]
        rows = np.repeat(np.arange(len(self.members)), lens)
        cols = np.concatenate(self.members) if self.members else np.zeros(0, int)
        return sp.csr_matrix((np.ones(rows.size), (rows, cols)),
                             shape=(len(self.members), self.f_index.size))


def _bitmask(members) -> int:
    mask = 0
    for e in members:
        mask |= 1 << int(e)
    return mask


def _radius_list(space, rho):
    if space.n < 2:
        return np.array([rho])
    u = unique_distances(space)
    rs = u[u <= rho * (1 + TIE_RTOL)]
    return np.unique(np.r_[rs, min(u[0] / 2, rho)])


def candidate_balls(problem: ContentProblem, prune=True, limit=CANDIDATE_LIMIT) -> Candidates:
    """Distinct coverage sets with their cheapest ball, dominated sets removed."""
    space, d = problem.space, problem.d
    Fm = problem.F.mask
    f_index = np.flatnonzero(Fm)
    radii = _radius_list(space, problem.rho)
    dF = dist_to_set_all(space, problem.F)
    centers = np.flatnonzero(dF <= problem.rho * (1 + TIE_RTOL))
    w = space.weights
    fpos = np.full(space.n, -1)
    fpos[f_index] = np.arange(f_index.size)
    thr = radii * (1 + TIE_RTOL) if problem.closed else radii * (1 - TIE_RTOL)
    side = "right" if problem.closed else "left"
    best = {}
    for c in centers:
        row = space.dist_row(c)
        order = np.argsort(row, kind="stable")
        cw = np.cumsum(w[order])
        cnt = np.maximum(np.searchsorted(row[order], thr, side=side), 1)
        costs = cw[cnt - 1] * radii ** (-d)
        fo = order[Fm[order]]  # F points sorted by distance from c
        fcnt = np.searchsorted(row[fo], thr, side=side)
        if Fm[c]:
            fcnt = np.maximum(fcnt, 1)
        for k in np.unique(fcnt):
            if k == 0:
                continue
            sel = np.flatnonzero(fcnt == k)
            j = sel[np.argmin(costs[sel])]
            mem = np.sort(fpos[fo[:k]])
            key = mem.tobytes()
            prev = best.get(key)
            if prev is None or costs[j] < prev[0]:
                best[key] = (float(costs[j]), int(c), float(radii[j]), mem)
        if len(best) > limit:
            raise TooManyCandidates(f"more than {limit} candidate balls; "
                                    "use a coarser radius set or a smaller rho")
    items = sorted(best.values(), key=lambda v: (v[0], v[1], v[2]))
    if prune and len(items) <= 4000:
        kept, masks = [], []
        for v in items:
            # sorted by cost: an earlier superset with no larger cost dominates
            m = _bitmask(v[3])
            if not any((k | m) == k for k in masks):
                kept.append(v)
                masks.append(m)
        items = kept
    return Candidates(np.array([v[1] for v in items], dtype=int),
                      np.array([v[2] for v in items]), np.array([v[0] for v in items]),
                      [v[3] for v in items], f_index)


# -- solvers -------------------------------------------------------------


def _popcount(x: int) -> int:
    return bin(x).count("1")


def greedy_cover(cand: Candidates):
    """Weighted greedy: repeatedly take the ball of least cost per new point."""
    A = cand.incidence().tocsc()
    At = A.T.tocsr()
    uncovered = np.ones(cand.f_index.size)
    new = np.asarray(A @ uncovered).ravel()
    chosen = []
    while uncovered.any():
        with np.errstate(divide="ignore"):
            price = np.where(new > 0, cand.costs / np.maximum(new, 1), np.inf)
        i = int(np.argmin(price))
        chosen.append(i)
        hit = cand.members[i][uncovered[cand.members[i]] > 0]
        uncovered[hit] = 0.0
        # every candidate sharing a newly covered point loses that point
        for e in hit:
            new[At.indices[At.indptr[e]:At.indptr[e + 1]]] -= 1
    return chosen


def exact_cover(cand: Candidates, incumbent=None):
    """Branch and bound; returns (chosen indices, nodes visited)."""
    nF = cand.f_index.size
    full = (1 << nF) - 1
    costs = cand.costs
    covers = cand.covers
    containing = [[i for i in range(len(covers)) if covers[i] >> e & 1] for e in range(nF)]
    for lst in containing:
        lst.sort(key=lambda i: (costs[i], i))
    best_sel = list(incumbent) if incumbent is not None else greedy_cover(cand)
    best_val = [float(sum(costs[i] for i in best_sel))]
    best = [best_sel]
    nodes = [0]

    def lower(uncov):
        # every uncovered element pays at least its cheapest per-element price
        lb = 0.0
        for e in range(nF):
            if uncov >> e & 1:
                lb += min(costs[i] / _popcount(covers[i] & uncov) for i in containing[e])
        return lb

    def rec(covered, sel, val):
        nodes[0] += 1
        if covered == full:
            if val < best_val[0] * (1 - 1e-15):
                best_val[0] = val
                best[0] = list(sel)
            return
        uncov = full & ~covered
        if val + lower(uncov) >= best_val[0] * (1 - 1e-12):
            return
        # branch on the uncovered element with the fewest options
        e = min((e for e in range(nF) if uncov >> e & 1), key=lambda e: (len(containing[e]), e))
        for i in containing[e]:
            sel.append(i)
            rec(covered | covers[i], sel, val + costs[i])
            sel.pop()

    rec(0, [], 0.0)
    return best[0], nodes[0]


def lp_lower_bound(cand: Candidates) -> float:
    """Dual packing LP: max sum y_e with sum_{e in S} y_e <= c_S, y >= 0.

    The LP solution is rescaled so every packing constraint holds in floating
    point, which makes the returned value a valid lower bound.
    """
    A = cand.incidence()
    res = scipy.optimize.linprog(-np.ones(A.shape[1]), A_ub=A, b_ub=cand.costs,
                                 bounds=(0, None), method="highs")
    if res.status != 0:
        raise PreconditionError(f"packing LP failed: {res.message}")
    y = np.maximum(res.x, 0.0)
    load = A @ y
    factor = float(np.max(load / cand.costs)) if y.any() else 1.0
    if factor > 1:
        y = y / factor
    return float(y.sum())


def _solution(cand, chosen, mode, meta):
    chosen = sorted(chosen, key=lambda i: (cand.centers[i], cand.radii[i]))
    costs = [float(cand.costs[i]) for i in chosen]
    return CoverSolution([(int(cand.centers[i]), float(cand.radii[i])) for i in chosen],
                         float(sum(costs)), mode, costs, meta)


def hausdorff_content(problem: ContentProblem, mode="exact", exact_limit=EXACT_LIMIT):
    """Cover value in mode exact, greedy_upper or lp_lower."""
    if not problem.F:
        return CoverSolution([], 0.0, mode, [], {"candidates": 0})
    cand = candidate_balls(problem)
    meta = {"candidates": len(cand)}
    if mode == "greedy_upper":
        return _solution(cand, greedy_cover(cand), mode, meta)
    if mode == "lp_lower":
        return CoverSolution([], lp_lower_bound(cand), mode, [], meta)
    if mode == "exact":
        if len(cand) > exact_limit:
            raise TooManyCandidates(f"{len(cand)} candidates exceed the exact limit "
                                    f"{exact_limit}; use greedy_upper/lp_lower")
        chosen, nodes = exact_cover(cand)
        meta["nodes"] = nodes
        return _solution(cand, chosen, mode, meta)
    raise PreconditionError(f"unknown content mode {mode!r}")


@dataclass
class ContentBracket:
    lower: float
    upper: float
    exact: bool
    candidates: int

    @property
    def value(self):
        return self.upper


def content_bracket(problem: ContentProblem, exact_limit=EXACT_LIMIT) -> ContentBracket:
    """Exact value when the pruned candidate family is small, else [lp, greedy].

    A bracket whose ends agree to BRACKET_RTOL is reported exact.
    """
    if not problem.F:
        return ContentBracket(0.0, 0.0, True, 0)
    cand = candidate_balls(problem)
    if len(cand) <= exact_limit:
        chosen, _ = exact_cover(cand)
        v = float(sum(cand.costs[i] for i in chosen))
        return ContentBracket(v, v, True, len(cand))
    up = float(sum(cand.costs[i] for i in greedy_cover(cand)))
    lo = lp_lower_bound(cand)
    # a closed bracket certifies the greedy cover as optimal
    return ContentBracket(lo, up, lo >= up * (1 - BRACKET_RTOL), len(cand))


@dataclass
class DensityRatio:
    ratio: float | None
    lower: float | None
    upper: float | None
    exact: bool

    @property
    def width(self):
        if self.lower is None or self.upper is None:
            return None
        return self.upper - self.lower


def content_density_ratio(space, E, x, r, d, closed=True, exact_limit=EXACT_LIMIT) -> DensityRatio:
    """H_r(E within the closed ball) / H_r(closed ball), with a bracket when not exact."""
    Em = _as_mask(space, E)
    x = _check_point(space, x)
    if not Em[x]:
        raise PreconditionError("x must lie in E")
    if not r > 0:
        raise PreconditionError("r must be positive")
    Bbar = ball_points(space, BallSpec(x, r, closed=True)).mask
    num = content_bracket(ContentProblem(space, PointSet(Em & Bbar), d, r, closed), exact_limit)
    den = content_bracket(ContentProblem(space, PointSet(Bbar), d, r, closed), exact_limit)
    exact = num.exact and den.exact
    mid = ratio(num.upper, den.upper) if exact else ratio(0.5 * (num.lower + num.upper),
                                                          0.5 * (den.lower + den.upper))
    return DensityRatio(mid, ratio(num.lower, den.upper), ratio(num.upper, den.lower), exact)


@dataclass
class CodimResult:
    ratio: float | None
    content: ContentBracket
    cap_value: float
    cap_status: str


def codim_bound_check(space, E, B: BallSpec, lam, beta, p, q, eta, opts=None, cache=None,
                      exact_limit=EXACT_LIMIT) -> CodimResult:
    """H^{beta eta}_{5 lam r}(E) / (r^{beta (p - eta)} cap(E, 2B, lam B))."""
    from .capacity import CapacityProblem, solve_capacity
    if not lam > 2:
        raise PreconditionError("need Lambda > 2")
    if not 0 <= eta < p:
        raise PreconditionError("need 0 <= eta < p")
    Em = _as_mask(space, E)
    r = B.radius
    content = content_bracket(ContentProblem(space, PointSet(Em), beta * eta, 5 * lam * r),
                              exact_limit)
    cap = solve_capacity("fractional", CapacityProblem(space, PointSet(Em), B, lam, beta, p, q),
                         opts, cache)
    den = r ** (beta * (p - eta)) * cap.value
    return CodimResult(ratio(content.upper, den), content, cap.value, cap.status)


__all__ = ["Candidates", "CodimResult", "ContentBracket", "ContentProblem", "CoverSolution",
           "DensityRatio", "candidate_balls", "codim_bound_check", "content_bracket",
           "content_density_ratio", "exact_cover", "greedy_cover", "hausdorff_content",
           "lp_lower_bound"]
