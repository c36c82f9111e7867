"""Reference campaigns with fixed seeds.

Each function returns a JSON-ready dict. Capacity solves go through
``solve_many`` so the numbers do not depend on ``workers`` or on cache state.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.optimize

from . import jsonio
from .capacity import (CapacityOptions, CapacityProblem, ball_capacity_bands, solve_many)
from .errors import TooManyCandidates
from .functionals import (gagliardo_energy, gagliardo_field, poincare_ratio,
                          restricted_maximal)
from .generators import grid, path
from .hardy import (TestFamily, ball_hardy_report, boundary_poincare_report,
                    capacity_density_scan, pointwise_hardy_report, self_improvement_scan)
from .hausdorff import ContentProblem, candidate_balls, hausdorff_content
from .htl import htl_seminorm
from .kernel import scale_index
from .parallel import pmap
from .space import BallSpec, MetricMeasureSpace, PointSet, ball_points

SQUARE_CENTERS = ((0.5, 0.5), (0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75))
BAND_RADII = (1 / 16, 1 / 8, 1 / 4)


def _normal(obj):
    """Round-trip through the JSON encoding so reports compare bit-exactly."""
    return jsonio.loads(jsonio.dumps(obj, indent=None))


def _nearest(space, point):
    return int(np.argmin(np.abs(space.coords - np.asarray(point)).sum(axis=1)))


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# -- solver exactness -----------------------------------------------------


def solver_exactness(count=25, seed=0, workers=1, cache=None) -> dict:
    """Projected-gradient capacities against the direct linear solve, p = q = 2."""
    rng = np.random.default_rng(seed)
    space, _ = grid(2, 9)
    probs = []
    for _ in range(count):
        c = int(rng.integers(space.n))
        r = float(rng.uniform(0.13, 0.4))
        Bbar = ball_points(space, BallSpec(c, r, closed=True)).indices
        keep = rng.random(Bbar.size) < rng.uniform(0.2, 1.0)
        keep[rng.integers(Bbar.size)] = True
        E = PointSet.from_indices(space.n, Bbar[keep])
        probs.append(CapacityProblem(space, E, BallSpec(c, r), float(rng.uniform(2.5, 6.0)),
                                     float(rng.uniform(0.15, 0.85)), 2.0, 2.0))
    tasks = [("fractional", pr) for pr in probs]
    it = solve_many(tasks, CapacityOptions(method="spg"), cache, workers)
    di = solve_many(tasks, CapacityOptions(method="direct"), cache, workers)
    rows = []
    for pr, a, b in zip(probs, it, di):
        free = int((pr.regions()[3]).sum())
        rows.append({"center": pr.B.center, "radius": pr.B.radius, "lam": pr.lam,
                     "beta": pr.beta, "free": free, "iterative": a.value, "direct": b.value,
                     "rel_diff": _rel(a.value, b.value), "status": a.status})
    return _normal({"rows": rows, "max_rel_diff": max(r["rel_diff"] for r in rows),
                    "max_free": max(r["free"] for r in rows)})


# -- ball capacity band ---------------------------------------------------


def ball_band(ms=(17, 33, 65), lam=4.0, beta=0.5, p=2.0, q=2.0, closed_outer=False,
              workers=1, cache=None) -> dict:
    """Normalized ball capacities on grid(2, m) over the standard centers and radii."""
    rows = []
    for m in ms:
        space, _ = grid(2, m)
        balls = [(_nearest(space, c), r) for c in SQUARE_CENTERS for r in BAND_RADII]
        bands = ball_capacity_bands(space, balls, lam, beta, p, q, cache=cache,
                                    workers=workers, closed_outer=closed_outer)
        for (x0, r), (cx, cy), b in zip(balls, [c for c in SQUARE_CENTERS for _ in BAND_RADII],
                                        bands):
            rows.append({"m": m, "cx": cx, "cy": cy, "x0": x0, "r": r, "cap": b.cap,
                         "normalized": b.normalized, "lipschitz_upper": b.lipschitz_upper,
                         "status": b.status, "gap": b.gap})
    norm = [r["normalized"] for r in rows]
    spread = max(norm) / min(norm) if min(norm) > 0 else math.inf
    return _normal({"lam": lam, "beta": beta, "p": p, "q": q, "closed_outer": closed_outer,
                    "rows": rows, "spread": spread,
                    "below_upper": all(r["cap"] <= r["lipschitz_upper"] for r in rows)})


def lambda2_contrast(ms=(17, 33, 65), beta=0.4, p=2.0, q=2.0, workers=1, cache=None) -> dict:
    """Lambda = 2 ball capacities under refinement, with both outer-ball conventions."""
    closed = ball_band(ms, 2.0, beta, p, q, True, workers, cache)
    opened = ball_band(ms, 2.0, beta, p, q, False, workers, cache)
    series = {}
    for row in closed["rows"]:
        series.setdefault((row["cx"], row["cy"], row["r"]), []).append(row["normalized"])
    trend = []
    for (cx, cy, r), vals in series.items():
        ratios = [b / a if a > 0 else math.inf for a, b in zip(vals, vals[1:])]
        trend.append({"cx": cx, "cy": cy, "r": r, "normalized": vals, "ratios": ratios})
    return _normal({"closed_outer": closed, "open_outer_max": max(r["cap"] for r in opened["rows"]),
                    "trend": trend, "max_ratio": max(x for t in trend for x in t["ratios"])})


# -- invariant suite ------------------------------------------------------


def _random_space(rng, n_lo=5, n_hi=9):
    n = int(rng.integers(n_lo, n_hi + 1))
    while True:
        pts = rng.random((n, 2))
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        if d[~np.eye(n, dtype=bool)].min() > 1e-3:
            break
    return MetricMeasureSpace(rng.uniform(0.2, 2.0, n), coords=pts, validate=False)


def _random_subset(rng, n, nonempty=True):
    m = rng.random(n) < rng.uniform(0.2, 0.9)
    if nonempty and not m.any():
        m[rng.integers(n)] = True
    return m


def _params(rng):
    return float(rng.uniform(0.1, 0.9)), float(rng.uniform(1.0, 3.0)), float(rng.uniform(1.0, 3.0))


class _Family:
    def __init__(self):
        self.checks = 0
        self.failures = 0
        self.worst = 0.0

    def add(self, small, big, tol):
        """Record small <= big with slack tol."""
        self.checks += 1
        excess = small - big
        if excess > tol:
            self.failures += 1
        self.worst = max(self.worst, excess)

    def report(self):
        return {"checks": self.checks, "failures": self.failures, "worst_excess": self.worst}


def _kernel_monotone(rng, fam):
    space = _random_space(rng)
    beta, _, q = _params(rng)
    u = rng.normal(size=space.n)
    A2 = _random_subset(rng, space.n)
    A1 = A2 & _random_subset(rng, space.n, nonempty=False)
    x = int(rng.choice(np.flatnonzero(A2)))
    small = gagliardo_field(space, u, beta, q, A1, points=[x])[0]
    big = gagliardo_field(space, u, beta, q, A2, points=[x])[0]
    fam.add(small, big, 1e-9 * max(big, 1e-300))


def _truncation(rng, fam):
    space = _random_space(rng)
    beta, p, q = _params(rng)
    u = rng.normal(size=space.n) * 2
    A = _random_subset(rng, space.n)
    if rng.random() < 0.5:
        Lu = np.clip(u, 0.0, 1.0)
    else:
        Lu = np.abs(u - rng.normal())
    small = gagliardo_energy(space, Lu, beta, p, q, A)
    big = gagliardo_energy(space, u, beta, p, q, A)
    fam.add(small, big, 1e-9 * max(big, 1e-300))


def _capacity_monotone(rng, fam_set, fam_lam, opts):
    space = _random_space(rng, 6, 10)
    beta, p, q = _params(rng)
    if rng.random() < 0.5:
        p = q = 2.0
    c = int(rng.integers(space.n))
    r = float(rng.uniform(0.1, 0.6))
    Bbar = ball_points(space, BallSpec(c, r, closed=True)).indices
    mE = np.zeros(space.n, dtype=bool)
    mE[Bbar[rng.random(Bbar.size) < 0.7]] = True
    mE[c] = True
    mF = mE & (rng.random(space.n) < 0.6)
    if not mF.any():
        mF[c] = True
    lam = float(rng.uniform(2.0, 4.0))
    lam2 = lam * float(rng.uniform(1.0, 2.0))
    base = CapacityProblem(space, PointSet(mE), BallSpec(c, r), lam, beta, p, q)
    vF, vE, vL = solve_many([("fractional", base.with_(E=PointSet(mF))), ("fractional", base),
                             ("fractional", base.with_(lam=lam2))], opts)
    scale = max(vE.value, vF.value, vL.value, 1e-300)
    fam_set.add(vF.value, vE.value, vF.gap * vF.value + 1e-9 * scale)
    fam_lam.add(vE.value, vL.value, vE.gap * vE.value + 1e-9 * scale)


def _maximal(rng, fam):
    space = _random_space(rng)
    f, g = rng.normal(size=(2, space.n))
    R = float(rng.uniform(0.05, 1.5))
    x = int(rng.integers(space.n))
    lhs = restricted_maximal(space, f + g, R, x)
    rhs = restricted_maximal(space, f, R, x) + restricted_maximal(space, g, R, x)
    fam.add(lhs, rhs, 1e-9 * max(rhs, 1e-300))
    R2 = R * float(rng.uniform(1.0, 2.0))
    fam.add(restricted_maximal(space, f, R, x), restricted_maximal(space, f, R2, x), 0.0)


def _content(space, F, d, rho):
    return hausdorff_content(ContentProblem(space, PointSet(F), d, rho), "exact").value


def _hausdorff(rng, fam_mono, fam_sub):
    while True:
        space = _random_space(rng, 5, 7)
        d = float(rng.uniform(0.0, 2.0))
        rho = float(rng.uniform(0.1, 1.0))
        F2 = _random_subset(rng, space.n)
        F1 = F2 & _random_subset(rng, space.n)
        G = _random_subset(rng, space.n)
        try:
            big = _content(space, F2, d, rho)
            small = _content(space, F1, d, rho) if F1.any() else 0.0
            a, b, ab = _content(space, F2, d, rho), _content(space, G, d, rho), \
                _content(space, F2 | G, d, rho)
        except TooManyCandidates:
            continue
        break
    fam_mono.add(small, big, 1e-12 * big)
    fam_sub.add(ab, a + b, 1e-12 * (a + b))


def _homogeneity(rng, fam):
    space = _random_space(rng)
    beta, p, q = _params(rng)
    t = float(rng.uniform(1.0, 3.0))
    u = rng.normal(size=space.n)
    c = float(rng.uniform(0.1, 10.0)) * (1 if rng.random() < 0.5 else -1)
    shift = float(rng.normal())
    ball = BallSpec(int(rng.integers(space.n)), float(rng.uniform(0.2, 1.0)))
    lam = float(rng.uniform(1.0, 2.0))
    a = poincare_ratio(space, u, ball, beta, t, p, q, lam)
    b = poincare_ratio(space, c * u + shift, ball, beta, t, p, q, lam)
    if a is None or b is None:
        fam.add(float((a is None) != (b is None)), 0.0, 0.0)
    else:
        fam.add(_rel(b, a), 0.0, 1e-9)


def invariant_suite(count=1000, seed=0) -> dict:
    """Randomized structural checks; every failure counter should read zero."""
    rng = np.random.default_rng(seed)
    fams = {k: _Family() for k in ("kernel_monotonicity", "truncation", "capacity_set",
                                   "capacity_lambda", "maximal_sublinear", "hausdorff_monotone",
                                   "hausdorff_subadditive", "ratio_homogeneity")}
    opts = CapacityOptions()
    for _ in range(count):
        _kernel_monotone(rng, fams["kernel_monotonicity"])
        _truncation(rng, fams["truncation"])
        _capacity_monotone(rng, fams["capacity_set"], fams["capacity_lambda"], opts)
        _maximal(rng, fams["maximal_sublinear"])
        _hausdorff(rng, fams["hausdorff_monotone"], fams["hausdorff_subadditive"])
        _homogeneity(rng, fams["ratio_homogeneity"])
    out = {k: f.report() for k, f in fams.items()}
    out["total_failures"] = sum(f.failures for f in fams.values())
    return _normal(out)


# -- HTL oracles ----------------------------------------------------------


def htl_reference(space, u, beta, p, q):
    """Independent SLSQP solve of the HTL program over the whole space.

    Variables are g_k(x) for the scales k that carry at least one pair.
    """
    n = space.n
    D = space.full_dist()
    iu, ju = np.triu_indices(n, 1)
    du = np.abs(u[iu] - u[ju])
    d = D[iu, ju]
    ks = np.array([scale_index(x) for x in d])
    scales = np.unique(ks)
    pos = {k: i for i, k in enumerate(scales)}
    S = scales.size
    w = space.weights

    def unpack(v):
        return v.reshape(S, n)

    def obj(v):
        G = np.maximum(unpack(v), 0.0)
        rows = (G ** q).sum(axis=0)
        return float((w * rows ** (p / q)).sum())

    A = np.zeros((d.size, S * n))
    for e, (i, j, k) in enumerate(zip(iu, ju, ks)):
        A[e, pos[k] * n + i] = d[e] ** beta
        A[e, pos[k] * n + j] = d[e] ** beta
    cons = [{"type": "ineq", "fun": lambda v: A @ v - du, "jac": lambda v: A}]
    x0 = np.full(S * n, du.max() / (2 * d.min() ** beta) + 1e-3)
    res = scipy.optimize.minimize(obj, x0, method="SLSQP", constraints=cons,
                                  bounds=[(0, None)] * (S * n),
                                  options={"ftol": 1e-15, "maxiter": 2000})
    return float(res.fun) ** (1 / p)


def htl_oracles(seed=0) -> dict:
    """htl_seminorm on two-point and path(5) instances against oracles."""
    rows = []
    two = MetricMeasureSpace(np.ones(2), coords=np.array([[0.0], [1.0]]), validate=False)
    full2 = PointSet.full(2)
    for p in (2.0, 4.0):
        res = htl_seminorm(two, np.array([0.0, 1.0]), 0.5, p, 2.0, full2)
        oracle = 2 ** (1 / p) / 2
        rows.append({"instance": "two_point", "p": p, "q": 2.0, "value": res.value,
                     "oracle": oracle, "rel": _rel(res.value, oracle), "status": res.status})
    space, _ = path(5)
    full = PointSet.full(5)
    rng = np.random.default_rng(seed)
    fields = [np.linspace(0, 1, 5), np.array([0, 0, 1, 0, 0.0]), rng.normal(size=5)]
    for k, u in enumerate(fields):
        for beta, p, q in ((0.5, 2.0, 2.0), (0.3, 3.0, 2.0), (0.7, 2.0, 1.5)):
            res = htl_seminorm(space, u, beta, p, q, full)
            oracle = htl_reference(space, u, beta, p, q)
            rows.append({"instance": f"path5_field{k}", "beta": beta, "p": p, "q": q,
                         "value": res.value, "oracle": oracle, "rel": _rel(res.value, oracle),
                         "status": res.status})
    return _normal({"rows": rows, "max_rel": max(r["rel"] for r in rows)})


# -- seminorm comparison --------------------------------------------------


def _comparison_field(args):
    n, seed, beta, p, q = args
    space, _ = path(n)
    c = n // 2
    r = space.diam / 160
    B = ball_points(space, BallSpec(c, r))
    B9 = ball_points(space, BallSpec(c, 9 * r))
    B73 = ball_points(space, BallSpec(c, 73 * r))
    rng = np.random.default_rng(seed)
    x = space.coords[:, 0]
    freq = rng.integers(1, 40, 4)
    phase = rng.uniform(0, 2 * np.pi, 4)
    amp = rng.normal(size=4)
    u = (amp[:, None] * np.sin(2 * np.pi * freq[:, None] * x[None] + phase[:, None])).sum(axis=0)
    h9 = htl_seminorm(space, u, beta, p, q, B9)
    hB = htl_seminorm(space, u, beta, p, q, B)
    eB = gagliardo_energy(space, u, beta, p, q, B)
    e73 = gagliardo_energy(space, u, beta, p, q, B73)
    return {"seed": seed, "energy_B": eB, "htl_9B": h9.value, "htl_B": hB.value,
            "energy_73B": e73, "lower": eB / h9.value ** p if h9.value > 0 else math.inf,
            "upper": hB.value ** p / e73 if e73 > 0 else math.inf,
            "status": [h9.status, hB.status]}


def seminorm_comparison(n=2048, fields=50, seed=0, beta=0.5, p=2.0, q=2.0, workers=1) -> dict:
    """Gagliardo energy against HTL seminorms on nested balls for random fields."""
    seeds = np.random.default_rng(seed).integers(0, 2 ** 31, fields)
    rows = pmap(_comparison_field, [(n, int(s), beta, p, q) for s in seeds], workers)
    out = {"rows": rows}
    for key in ("lower", "upper"):
        vals = [r[key] for r in rows]
        finite = all(math.isfinite(v) and v > 0 for v in vals)
        out[key] = {"min": min(vals), "max": max(vals), "finite": finite,
                    "spread": max(vals) / min(vals) if finite else math.inf}
    return _normal(out)


# -- Hausdorff exactness --------------------------------------------------


def exhaustive_cover(cand) -> float:
    """Minimum cover cost by enumerating every subset of the candidate balls."""
    full = (1 << cand.f_index.size) - 1
    cov = np.zeros(1, dtype=np.int64)
    cost = np.zeros(1)
    for m, c in zip(cand.covers, cand.costs):
        cov = np.concatenate([cov, cov | m])
        cost = np.concatenate([cost, cost + c])
    ok = cov == full
    return float(cost[ok].min()) if ok.any() else math.inf


def _hausdorff_instance(seed):
    rng = np.random.default_rng(seed)
    while True:
        space = _random_space(rng, 6, 10)
        F = _random_subset(rng, space.n)
        d = float(rng.uniform(0.0, 2.5))
        rho = float(rng.uniform(0.15, 1.2))
        prob = ContentProblem(space, PointSet(F), d, rho)
        raw = candidate_balls(prob, prune=False)
        if len(raw) <= 24 and F.sum() >= 2:
            break
    exact = hausdorff_content(prob, "exact").value
    greedy = hausdorff_content(prob, "greedy_upper").value
    lp = hausdorff_content(prob, "lp_lower").value
    brute = exhaustive_cover(raw)
    return {"seed": seed, "n": space.n, "F": int(F.sum()), "candidates": len(raw), "exact": exact,
            "exhaustive": brute, "greedy": greedy, "lp": lp,
            "greedy_bound": 1 + math.log(int(F.sum())),
            "exact_ok": exact == brute or _rel(exact, brute) <= 1e-12,
            "greedy_ok": greedy / exact <= 1 + math.log(int(F.sum())),
            "lp_ok": lp <= exact * (1 + 1e-12)}


def hausdorff_exactness(instances=20, seed=0, workers=1) -> dict:
    seeds = [int(s) for s in np.random.default_rng(seed).integers(0, 2 ** 31, instances)]
    rows = pmap(_hausdorff_instance, seeds, workers)
    return _normal({"rows": rows, "all_ok": all(r["exact_ok"] and r["greedy_ok"] and r["lp_ok"]
                                                for r in rows)})


# -- Hardy chain ----------------------------------------------------------

CHAIN_FAMILY = ((1 / 16, 1 / 8, 1 / 4), (0.5, 1.0, 2.0))
POINT_RADIUS = 1 / 16 + 1e-9


def segment_set(space):
    return PointSet(space.coords[:, 0] <= 0.5 + 1e-12)


def hardy_chain(ms=(33, 65), beta=0.5, p=2.0, q=2.0, workers=1, cache=None) -> dict:
    """c0, c_H, c_b, c_I for a half segment and c0, c_H for a midpoint on grid(1, m)."""
    fam = TestFamily.distance_powers(*CHAIN_FAMILY)
    rows = []
    for m in ms:
        space, _ = grid(1, m)
        E = segment_set(space)
        scan = capacity_density_scan(space, E, beta, p, q, cache=cache, workers=workers)
        cH = pointwise_hardy_report(space, E, fam, beta, p, q)
        cb = boundary_poincare_report(space, E, fam, beta, p, p, q)
        cI = ball_hardy_report(space, E, fam, beta, p, q)
        rows.append({"m": m, "set": "segment", "c0": scan.c0, "c0_approximate": scan.approximate,
                     "c_H": cH.constant, "c_b": cb.constant, "c_I": cI.constant})
        mid = PointSet.from_indices(space.n, [_nearest(space, [0.5])])
        scan = capacity_density_scan(space, mid, beta, p, q, max_radius=POINT_RADIUS, cache=cache,
                                     workers=workers)
        cH = pointwise_hardy_report(space, mid, fam, beta, p, q, max_dist=POINT_RADIUS)
        rows.append({"m": m, "set": "point", "c0": scan.c0, "c0_approximate": scan.approximate,
                     "c_H": cH.constant})
    return _normal({"rows": rows})


# -- self-improvement -----------------------------------------------------


def self_improvement(m=65, beta=0.5, p=2.0, q=2.0, step=0.05, half_width=2, workers=1,
                     cache=None) -> dict:
    space, _ = grid(1, m)
    rep = self_improvement_scan(space, segment_set(space), beta, p, q, step=step,
                                half_width=half_width, cache=cache, workers=workers)
    return _normal({"base": rep.base, "delta": rep.delta, "eps": rep.eps, "step": rep.step,
                    "lattice": rep.lattice, "region": rep.region, "notes": rep.notes})


def all_reports(workers=1, cache=None) -> dict:
    """Every reference campaign, keyed by name."""
    return {
        "solver_exactness": solver_exactness(workers=workers, cache=cache),
        "ball_band": ball_band(workers=workers, cache=cache),
        "lambda2_contrast": lambda2_contrast(workers=workers, cache=cache),
        "invariant_suite": invariant_suite(),
        "htl_oracles": htl_oracles(),
        "seminorm_comparison": seminorm_comparison(workers=workers),
        "hausdorff_exactness": hausdorff_exactness(workers=workers),
        "hardy_chain": hardy_chain(workers=workers, cache=cache),
        "self_improvement": self_improvement(workers=workers, cache=cache),
    }
