"""Campaign operations available to scenarios.

Each operation declares its parameter schema and a ``prepare`` step that
resolves names and checks preconditions without heavy work. ``prepare``
returns a thunk producing a ``Table`` (summary, column names, rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .capacity import (CapacityProblem, ball_capacity_bands, capacity_comparison_report,
                       mazya_check, solve_capacity)
from .errors import FraccapError, ValidationError
from .functionals import (_check_beta_q, _check_p, gagliardo_energy, poincare_ratio,
                          restricted_maximal)
from .hardy import (C1_FRACTIONAL, C1_HTL, DEFAULT_LAMBDA, DEFAULT_SMALL_LAMBDA, TestFamily,
                    _check_balls, _scan_setup, ball_hardy_report, boundary_poincare_report,
                    capacity_density_scan, default_balls, htl_density_scan,
                    pointwise_hardy_report, self_improvement_scan)
from .hausdorff import ContentProblem, codim_bound_check, content_density_ratio, hausdorff_content
from .htl import _check_p_open, _check_variant, htl_seminorm
from .scenario import (REQUIRED, Context, boolean, fail, integer, listof, literal_or, num, obj,
                       optional, string, validate_field, validate_point)
from .space import BallSpec, doubling_profile


@dataclass
class Table:
    summary: dict
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class Op:
    params: dict
    prepare: Callable
    plot: tuple | None = None  # (x, y, series) column names, or ("grid", columns...)


OPS: dict[str, Op] = {}


def op(name, params, plot=None):
    def deco(fn):
        OPS[name] = Op(params, fn, plot)
        return fn
    return deco


# -- shared parameter fragments ---------------------------------------------

BETA = (num(0, 1, True, True), REQUIRED)
P = (num(1), REQUIRED)
Q = (num(1), REQUIRED)
BIG_LAMBDA = (num(2), DEFAULT_LAMBDA)
SMALL_LAMBDA = (num(1), DEFAULT_SMALL_LAMBDA)
RADIUS = (num(0, lo_open=True), REQUIRED)
RADII = (listof(num(0, lo_open=True), 1), REQUIRED)
POINT = (validate_point, REQUIRED)
SET = (string(), REQUIRED)

FAMILY_KINDS = {
    "distance_powers": {"s": (listof(num(0, lo_open=True), 1), REQUIRED),
                        "gamma": (listof(num(0, lo_open=True), 1), REQUIRED)},
    "bump_products": {"s": (listof(num(0, lo_open=True), 1), REQUIRED),
                      "R": (listof(num(0, lo_open=True), 1), REQUIRED),
                      "count": (integer(1), REQUIRED), "seed": (integer(0), REQUIRED)},
    "random_lipschitz": {"count": (integer(1), REQUIRED), "seed": (integer(0), REQUIRED),
                         "anchors": (integer(1), REQUIRED)},
}


def _family_item(v, path):
    if not isinstance(v, dict) or "kind" not in v:
        fail(path, f"a family generator needs 'kind' in {sorted(FAMILY_KINDS)}")
    kind = string(set(FAMILY_KINDS))(v["kind"], f"{path}.kind")
    out = obj(FAMILY_KINDS[kind])({k: x for k, x in v.items() if k != "kind"}, path)
    out["kind"] = kind
    return out


FAMILY = (listof(_family_item, 1), REQUIRED)


def _variant(v, path):
    return obj({"eps": (num(0, lo_open=True), REQUIRED), "N": (integer(1), REQUIRED)})(v, path)


def _comparison_variant(v, path):
    if v == "htl_vs_frac":
        return v
    if isinstance(v, list) and len(v) == 3 and v[0] == "q_pair":
        return ["q_pair", num(1)(v[1], f"{path}[1]"), num(1)(v[2], f"{path}[2]")]
    fail(path, f"expected 'htl_vs_frac' or ['q_pair', q, q_hat], got {v!r}")


def _guard(path, fn, *args, **kw):
    """Run a precondition check, turning library errors into field-path errors."""
    try:
        return fn(*args, **kw)
    except FraccapError as exc:
        if isinstance(exc, ValidationError):
            raise
        fail(path, str(exc))


def _points(ctx, spec, path, E=None):
    if spec == "all":
        return [int(i) for i in (E.indices if E is not None else range(ctx.space.n))]
    return [ctx.point(v, f"{path}[{i}]") for i, v in enumerate(spec)]


def _ball(ctx, params, path):
    c = ctx.point(params["center"], f"{path}.center")
    return BallSpec(c, params["radius"])


def _status(*statuses):
    return "exact" if all(s == "exact" for s in statuses) else "upper_bound"


# -- mms_core ---------------------------------------------------------------


@op("doubling_profile", {"radii": RADII})
def _doubling(ctx: Context, prm, path):
    _guard(path, doubling_profile, ctx.space, prm["radii"][:1])

    def run():
        prof = doubling_profile(ctx.space, prm["radii"])
        s = {k: getattr(prof, k) for k in ("c_mu", "Q", "c_Q", "sigma", "c_sigma", "kappa",
                                            "c_R", "diam", "n0")}
        return Table(s, list(s), [list(s.values())])
    return run


# -- functionals ------------------------------------------------------------


@op("gagliardo_energy", {"field": (validate_field, REQUIRED), "domain": SET, "beta": BETA,
                         "p": P, "q": Q})
def _energy(ctx, prm, path):
    u = ctx.field(prm["field"], f"{path}.field")
    A = ctx.set(prm["domain"], f"{path}.domain")
    _guard(path, _check_beta_q, prm["beta"], prm["q"])
    _guard(path, _check_p, prm["p"])

    def run():
        v = gagliardo_energy(ctx.space, u, prm["beta"], prm["p"], prm["q"], A)
        return Table({"energy": v}, ["beta", "p", "q", "energy"],
                     [[prm["beta"], prm["p"], prm["q"], v]])
    return run


@op("restricted_maximal", {"field": (validate_field, REQUIRED), "R": RADIUS,
                           "points": (literal_or("all", listof(validate_point, 1)), REQUIRED)},
    plot=("x", "M", None))
def _maximal(ctx, prm, path):
    f = ctx.field(prm["field"], f"{path}.field")
    xs = _points(ctx, prm["points"], f"{path}.points")

    def run():
        rows = [[x, restricted_maximal(ctx.space, f, prm["R"], x)] for x in xs]
        return Table({"max": max(r[1] for r in rows)}, ["x", "M"], rows)
    return run


@op("poincare_ratio", {"field": (validate_field, REQUIRED), "center": POINT, "radius": RADIUS,
                       "beta": BETA, "t": (num(1), REQUIRED), "p": P, "q": Q,
                       "lambda": (num(1), REQUIRED)})
def _poincare(ctx, prm, path):
    u = ctx.field(prm["field"], f"{path}.field")
    B = _ball(ctx, prm, path)
    _guard(path, _check_beta_q, prm["beta"], prm["q"])
    _guard(path, _check_p, prm["p"])

    def run():
        r = poincare_ratio(ctx.space, u, B, prm["beta"], prm["t"], prm["p"], prm["q"],
                           prm["lambda"])
        return Table({"ratio": r}, ["center", "radius", "ratio"], [[B.center, B.radius, r]])
    return run


@op("htl_seminorm", {"field": (validate_field, REQUIRED), "domain": SET, "beta": BETA, "p": P,
                     "q": (num(1, allow_inf=True), REQUIRED),
                     "variant": (optional(_variant), None)})
def _htl(ctx, prm, path):
    u = ctx.field(prm["field"], f"{path}.field")
    A = ctx.set(prm["domain"], f"{path}.domain")
    _guard(path, _check_p_open, prm["p"])
    v = prm["variant"]
    variant = None if v is None else (v["eps"], v["N"])
    _guard(f"{path}.variant", _check_variant, prm["beta"], variant)

    def run():
        res = htl_seminorm(ctx.space, u, prm["beta"], prm["p"], prm["q"], A, variant)
        return Table({"value": res.value, "status": res.status, "gap": res.gap},
                     ["value", "status", "gap"], [[res.value, res.status, res.gap]])
    return run


# -- capacity ---------------------------------------------------------------

CAP_PARAMS = {"E": SET, "center": POINT, "radius": RADIUS, "Lambda": BIG_LAMBDA, "beta": BETA,
              "p": P, "q": Q, "closed_outer": (boolean, False)}
CAP_COLUMNS = ["value", "status", "gap", "warnings"]


def _capacity_op(kind):
    def prepare(ctx, prm, path):
        E = ctx.set(prm["E"], f"{path}.E")
        B = _ball(ctx, prm, path)
        if kind == "htl":
            _guard(path, _check_p_open, prm["p"])
        prob = _guard(path, CapacityProblem, ctx.space, E, B, prm["Lambda"], prm["beta"],
                      prm["p"], prm["q"], prm["closed_outer"])

        def run():
            res = solve_capacity(kind, prob, cache=ctx.cache)
            w = ";".join(res.warnings)
            return Table({"value": res.value, "status": res.status, "gap": res.gap,
                          "warnings": res.warnings}, CAP_COLUMNS,
                         [[res.value, res.status, res.gap, w]])
        return run
    return prepare


op("fractional_capacity", CAP_PARAMS)(_capacity_op("fractional"))
op("htl_capacity", CAP_PARAMS)(_capacity_op("htl"))


@op("ball_capacity_band", {"centers": (listof(validate_point, 1), REQUIRED), "radii": RADII,
                           "Lambda": BIG_LAMBDA, "beta": BETA, "p": P, "q": Q,
                           "closed_outer": (boolean, False)},
    plot=("r", "normalized", "x0"))
def _band(ctx, prm, path):
    xs = _points(ctx, prm["centers"], f"{path}.centers")
    _guard(path, _check_beta_q, prm["beta"], prm["q"])
    _guard(path, _check_p, prm["p"])
    balls = [(x, r) for x in xs for r in prm["radii"]]
    cols = ["x0", "r", "Lambda", "beta", "p", "q", "cap", "normalized", "lipschitz_upper",
            "status"]

    def run():
        bands = ball_capacity_bands(ctx.space, balls, prm["Lambda"], prm["beta"], prm["p"],
                                    prm["q"], cache=ctx.cache, workers=ctx.workers,
                                    closed_outer=prm["closed_outer"])
        rows = [[x, r, prm["Lambda"], prm["beta"], prm["p"], prm["q"], b.cap, b.normalized,
                 b.lipschitz_upper, b.status] for (x, r), b in zip(balls, bands)]
        norm = [b.normalized for b in bands]
        s = {"min_normalized": min(norm), "max_normalized": max(norm),
             "below_upper": all(b.cap <= b.lipschitz_upper for b in bands),
             "status": _status(*(b.status for b in bands)),
             "warnings": sorted({w for b in bands for w in b.warnings})}
        return Table(s, cols, rows)
    return run


@op("mazya_check", {"field": (validate_field, REQUIRED), "center": POINT, "radius": RADIUS,
                    "Lambda": BIG_LAMBDA, "lambda": SMALL_LAMBDA, "beta": BETA,
                    "t": (num(1), REQUIRED), "p": P, "q": Q})
def _mazya(ctx, prm, path):
    u = ctx.field(prm["field"], f"{path}.field")
    B = _ball(ctx, prm, path)
    if not prm["t"] >= prm["p"]:
        fail(f"{path}.t", "needs t >= p")

    def run():
        res = mazya_check(ctx.space, u, B, prm["Lambda"], prm["lambda"], prm["beta"], prm["t"],
                          prm["p"], prm["q"], cache=ctx.cache)
        return Table({"ratio": res.ratio, "degenerate": res.degenerate,
                      "cap_status": res.cap.status},
                     ["ratio", "numerator", "denominator", "cap", "cap_status"],
                     [[res.ratio, res.numerator, res.denominator, res.cap.value,
                       res.cap.status]])
    return run


@op("capacity_comparison", {"E": SET, "center": POINT, "radius": RADIUS, "Lambda": BIG_LAMBDA,
                            "beta": BETA, "p": P, "q": Q,
                            "variants": (listof(_comparison_variant, 1), REQUIRED),
                            "strict": (boolean, False), "closed_outer": (boolean, False)})
def _comparison(ctx, prm, path):
    E = ctx.set(prm["E"], f"{path}.E")
    B = _ball(ctx, prm, path)
    _guard(path, CapacityProblem, ctx.space, E, B, prm["Lambda"], prm["beta"], prm["p"],
           prm["q"])
    variants = [v if isinstance(v, str) else tuple(v) for v in prm["variants"]]

    def run():
        rows = capacity_comparison_report(ctx.space, E, B, prm["Lambda"], prm["beta"], prm["p"],
                                          prm["q"], variants, cache=ctx.cache,
                                          strict=prm["strict"], closed_outer=prm["closed_outer"])
        out = [[r.name, r.left, r.right, r.ratio, r.left_status, r.right_status, r.inflation,
                r.inside] for r in rows]
        return Table({"rows": len(out), "all_inside": all(r.inside for r in rows)},
                     ["name", "left", "right", "ratio", "left_status", "right_status",
                      "inflation", "inside"], out)
    return run


# -- hausdorff --------------------------------------------------------------


@op("hausdorff_content", {"F": SET, "d": (num(0), REQUIRED), "rho": RADIUS,
                          "mode": (string({"exact", "greedy_upper", "lp_lower"}), REQUIRED),
                          "closed": (boolean, True)})
def _content(ctx, prm, path):
    F = ctx.set(prm["F"], f"{path}.F")
    prob = _guard(path, ContentProblem, ctx.space, F, prm["d"], prm["rho"], prm["closed"])

    def run():
        sol = hausdorff_content(prob, prm["mode"])
        rows = [[c, r, cost] for (c, r), cost in zip(sol.balls, sol.costs)]
        return Table({"value": sol.value, "mode": sol.mode, **sol.meta},
                     ["center", "radius", "cost"], rows)
    return run


@op("content_density_ratio", {"E": SET, "points": (literal_or("all", listof(validate_point, 1)),
                                                   REQUIRED),
                              "radii": RADII, "d": (num(0), REQUIRED)},
    plot=("r", "ratio", "x"))
def _content_density(ctx, prm, path):
    E = ctx.set(prm["E"], f"{path}.E")
    xs = _points(ctx, prm["points"], f"{path}.points", E)
    for i, x in enumerate(xs):
        if x not in E:
            fail(f"{path}.points[{i}]", f"point {x} is not in set {prm['E']!r}")

    def run():
        rows = []
        for x in xs:
            for r in prm["radii"]:
                dr = content_density_ratio(ctx.space, E, x, r, prm["d"])
                rows.append([x, r, dr.ratio, dr.lower, dr.upper, dr.exact])
        vals = [r[2] for r in rows if r[2] is not None]
        return Table({"min_ratio": min(vals) if vals else None,
                      "all_exact": all(r[5] for r in rows)},
                     ["x", "r", "ratio", "lower", "upper", "exact"], rows)
    return run


@op("codim_bound_check", {"E": SET, "center": POINT, "radius": RADIUS, "Lambda": BIG_LAMBDA,
                          "beta": BETA, "p": P, "q": Q, "eta": (num(0), REQUIRED)})
def _codim(ctx, prm, path):
    E = ctx.set(prm["E"], f"{path}.E")
    B = _ball(ctx, prm, path)
    if not prm["Lambda"] > 2:
        fail(f"{path}.Lambda", "needs Lambda > 2")
    if not prm["eta"] < prm["p"]:
        fail(f"{path}.eta", "needs eta < p")
    _guard(path, CapacityProblem, ctx.space, E, B, prm["Lambda"], prm["beta"], prm["p"],
           prm["q"])

    def run():
        res = codim_bound_check(ctx.space, E, B, prm["Lambda"], prm["beta"], prm["p"], prm["q"],
                                prm["eta"], cache=ctx.cache)
        return Table({"ratio": res.ratio, "content_exact": res.content.exact,
                      "cap_status": res.cap_status},
                     ["ratio", "content_lower", "content_upper", "cap", "cap_status"],
                     [[res.ratio, res.content.lower, res.content.upper, res.cap_value,
                       res.cap_status]])
    return run


# -- hardy ------------------------------------------------------------------

SCAN_COLUMNS = ["x", "r", "num", "den", "ratio", "num_status", "den_status"]


SCAN_PARAMS = {"E": SET, "beta": BETA, "p": P, "q": Q, "Lambda": BIG_LAMBDA,
               "radii": (literal_or("dyadic", listof(num(0, lo_open=True), 1)), REQUIRED),
               "centers": (literal_or("all", listof(validate_point, 1)), REQUIRED),
               "c1": (num(0, lo_open=True), C1_FRACTIONAL),
               "max_radius": (optional(num(0, lo_open=True)), None)}


def _scan_op(kind):
    def prepare(ctx, prm, path):
        E = ctx.set(prm["E"], f"{path}.E")
        radii = None if prm["radii"] == "dyadic" else prm["radii"]
        centers = None if prm["centers"] == "all" else _points(ctx, prm["centers"],
                                                               f"{path}.centers")
        _guard(path, _check_beta_q, prm["beta"], prm["q"])
        _guard(path, _check_p_open if kind == "htl" else _check_p, prm["p"])
        _guard(path, _scan_setup, ctx.space, E, prm["Lambda"], radii, centers, prm["c1"],
               prm["max_radius"])
        fn = htl_density_scan if kind == "htl" else capacity_density_scan

        def run():
            rep = fn(ctx.space, E, prm["beta"], prm["p"], prm["q"], prm["Lambda"], radii,
                     centers, prm["c1"], prm["max_radius"], cache=ctx.cache,
                     workers=ctx.workers)
            rows = [[e[c] for c in SCAN_COLUMNS] for e in rep.entries]
            return Table({"c0": rep.c0, "witness": rep.witness, "approximate": rep.approximate,
                          "radii": rep.radii, "admissible_centers": len(rep.centers),
                          "errors": rep.errors, "warnings": rep.warnings}, SCAN_COLUMNS, rows)
        return run
    return prepare


op("capacity_density_scan", SCAN_PARAMS, ("r", "ratio", "x"))(_scan_op("fractional"))
op("htl_density_scan", {**SCAN_PARAMS, "c1": (num(0, lo_open=True), C1_HTL)},
   ("r", "ratio", "x"))(_scan_op("htl"))

HARDY_COLUMNS = ["field", "constant"]


def _hardy_table(rep):
    rows = [[k, v] for k, v in rep.per_field.items()]
    return Table({"constant": rep.constant, "witness": rep.witness, "evaluated": rep.evaluated,
                  "skipped": rep.skipped, "infinite": rep.infinite,
                  "admissible": rep.admissible, "all_skipped": rep.all_skipped},
                 HARDY_COLUMNS, rows)


def _hardy_balls(ctx, prm, path, E):
    _guard(path, _check_beta_q, prm["beta"], prm["q"])
    _guard(path, _check_p, prm["p"])
    balls = _guard(path, default_balls, ctx.space, E.mask, prm["c1"], prm["max_radius"])
    _guard(path, _check_balls, ctx.space, E.mask, balls, prm["c1"], prm["max_radius"])
    if not balls:
        fail(path, "no admissible ball (dyadic radius below c1 diam(E))")
    return balls


HARDY_BASE = {"E": SET, "family": FAMILY, "beta": BETA, "p": P, "q": Q,
              "c1": (num(0, lo_open=True), C1_FRACTIONAL),
              "max_radius": (optional(num(0, lo_open=True)), None)}


@op("pointwise_hardy", HARDY_BASE)
def _pointwise(ctx, prm, path):
    E = ctx.set(prm["E"], f"{path}.E")
    fam = TestFamily(prm["family"])
    _guard(path, _check_beta_q, prm["beta"], prm["q"])
    _guard(path, _check_p, prm["p"])
    _guard(f"{path}.family", fam.fields, ctx.space, E)

    def run():
        return _hardy_table(pointwise_hardy_report(ctx.space, E, fam, prm["beta"], prm["p"],
                                                   prm["q"], prm["c1"], prm["max_radius"]))
    return run


@op("boundary_poincare", {**HARDY_BASE, "t": (num(1), REQUIRED), "lambda": SMALL_LAMBDA})
def _boundary(ctx, prm, path):
    E = ctx.set(prm["E"], f"{path}.E")
    fam = TestFamily(prm["family"])
    balls = _hardy_balls(ctx, prm, path, E)

    def run():
        return _hardy_table(boundary_poincare_report(ctx.space, E, fam, prm["beta"], prm["t"],
                                                     prm["p"], prm["q"], prm["lambda"], balls,
                                                     prm["c1"], prm["max_radius"]))
    return run


@op("ball_hardy", {**HARDY_BASE, "lambda": SMALL_LAMBDA})
def _ball_hardy(ctx, prm, path):
    E = ctx.set(prm["E"], f"{path}.E")
    fam = TestFamily(prm["family"])
    balls = _hardy_balls(ctx, prm, path, E)

    def run():
        return _hardy_table(ball_hardy_report(ctx.space, E, fam, prm["beta"], prm["p"],
                                              prm["q"], prm["lambda"], balls, prm["c1"],
                                              prm["max_radius"]))
    return run


@op("self_improvement_scan", {"E": SET, "beta": BETA, "p": P, "q": Q, "Lambda": BIG_LAMBDA,
                              "step": (num(0, lo_open=True), REQUIRED),
                              "half_width": (integer(0), REQUIRED),
                              "q_hats": (listof(num(1), 1), REQUIRED),
                              "delta": (literal_or("half_base_c0", num(0, lo_open=True)),
                                        REQUIRED),
                              "radii": SCAN_PARAMS["radii"],
                              "centers": (literal_or("all", listof(validate_point, 1)), REQUIRED),
                              "c1": (num(0, lo_open=True), C1_FRACTIONAL),
                              "max_radius": (optional(num(0, lo_open=True)), None)},
    plot=("grid", "beta", "p", "q", "c0"))
def _self_improvement(ctx, prm, path):
    E = ctx.set(prm["E"], f"{path}.E")
    radii = None if prm["radii"] == "dyadic" else prm["radii"]
    centers = None if prm["centers"] == "all" else _points(ctx, prm["centers"], f"{path}.centers")
    _guard(path, _check_beta_q, prm["beta"], prm["q"])
    _guard(path, _check_p, prm["p"])
    _guard(path, _scan_setup, ctx.space, E, prm["Lambda"], radii, centers, prm["c1"],
           prm["max_radius"])
    delta = None if prm["delta"] == "half_base_c0" else prm["delta"]

    def run():
        rep = self_improvement_scan(ctx.space, E, prm["beta"], prm["p"], prm["q"], prm["Lambda"],
                                    prm["step"], prm["half_width"], prm["q_hats"], delta, radii,
                                    centers, prm["c1"], prm["max_radius"], cache=ctx.cache,
                                    workers=ctx.workers)
        cols = ["i", "j", "beta", "p", "q", "c0", "approximate", "skipped"]
        rows = [[e[c] for c in cols] for e in rep.lattice]
        return Table({"eps": rep.eps, "delta": rep.delta, "base": rep.base,
                      "region": [list(x) for x in rep.region], "notes": rep.notes}, cols, rows)
    return run
