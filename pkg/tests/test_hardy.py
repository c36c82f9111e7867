import math

import numpy as np
import pytest

from conftest import brute_G
from fraccap.errors import PreconditionError
from fraccap.generators import grid
from fraccap.hardy import (TestFamily, ball_hardy_report, boundary_poincare_report,
                           capacity_density_scan, htl_density_scan, pointwise_hardy_report,
                           self_improvement_scan)
from fraccap.space import BallSpec, PointSet

FAMILY = TestFamily.distance_powers([0.1, 0.25], [0.5, 1.0])


def left_half(m):
    S, _ = grid(1, m)
    return S, PointSet(S.coords[:, 0] <= 0.5)


def open_ball(S, c, r):
    return [i for i in range(S.n) if S.full_dist()[c, i] < r * (1 - 1e-12)]


def brute_pointwise(S, E, fields, beta, p, q, limit):
    D = S.full_dist()
    dE = D[:, E.indices].min(axis=1)
    best = 0.0
    for x in range(S.n):
        delta = dE[x]
        if not 0 < delta < limit:
            continue
        A = open_ball(S, x, 2 * delta)
        for u in fields:
            Gp = {y: brute_G(S, u, beta, q, A, y) ** p for y in A}
            # distinct open balls of radius <= 2 delta: closed balls at distances below it
            balls = [[y for y in A if D[x, y] <= D[x, z]] for z in A] + [A]
            M = max(sum(Gp[y] * S.weights[y] for y in b) / sum(S.weights[y] for y in b)
                    for b in balls)
            best = max(best, abs(u[x]) / (delta ** beta * M ** (1 / p)))
    return best


def brute_boundary(S, fields, balls, beta, t, p, q, lam):
    w = S.weights
    best = 0.0
    for b in balls:
        Bi = open_ball(S, b.center, b.radius)
        Li = open_ball(S, b.center, lam * b.radius)
        for u in fields:
            lhs = (sum(abs(u[i]) ** t * w[i] for i in Bi) / w[Bi].sum()) ** (1 / t)
            avg = sum(brute_G(S, u, beta, q, Li, x) ** p * w[x] for x in Li) / w[Li].sum()
            rhs = b.radius ** beta * avg ** (1 / p)
            if lhs > 0:
                best = max(best, lhs / rhs)
    return best


def brute_ball(S, E, fields, balls, beta, p, q, lam):
    w = S.weights
    dE = S.full_dist()[:, E.indices].min(axis=1)
    best = 0.0
    for b in balls:
        Bi = [i for i in open_ball(S, b.center, b.radius) if i not in E]
        Li = open_ball(S, b.center, lam * b.radius)
        for u in fields:
            lhs = sum(abs(u[i]) ** p * dE[i] ** (-beta * p) * w[i] for i in Bi)
            rhs = sum(brute_G(S, u, beta, q, Li, x) ** p * w[x] for x in Li)
            if lhs > 0:
                best = max(best, lhs / rhs)
    return best ** (1 / p)


def test_scan_whole_space_is_one():
    S, _ = grid(1, 33)
    rep = capacity_density_scan(S, PointSet.full(33), 0.5, 2, 2, c1=0.5, centers=[16])
    assert rep.c0 == pytest.approx(1.0, rel=1e-12)
    assert not rep.approximate and not rep.errors


def test_scan_single_point_decreases_with_m():
    vals = []
    for m in (17, 33, 65):
        S, _ = grid(1, m)
        rep = capacity_density_scan(S, PointSet.from_indices(m, [m // 2]), 0.5, 2, 2,
                                    radii=[1 / 16, 1 / 8, 1 / 4], max_radius=0.3)
        vals.append(rep.c0)
    assert 0 < vals[2] < vals[1] < vals[0] < 1


def test_scan_segment_is_stable():
    vals = []
    for m in (33, 65, 129):
        S, E = left_half(m)
        rep = capacity_density_scan(S, E, 0.5, 2, 2, radii=[1 / 16, 1 / 8], centers=[m // 2],
                                    c1=0.5)
        vals.append(rep.c0)
    assert max(vals) - min(vals) <= 0.01 * max(vals)
    assert min(vals) > 0.5


def test_scan_witness_and_entries():
    S, E = left_half(33)
    rep = capacity_density_scan(S, E, 0.5, 2, 2, radii=[1 / 16, 1 / 8], centers=[8, 16], c1=0.5)
    assert len(rep.entries) == 4
    ratios = [e["ratio"] for e in rep.entries]
    assert rep.c0 == min(ratios)
    assert all(0 < r <= 1 + 1e-9 for r in ratios)
    w = next(e for e in rep.entries if e["ratio"] == rep.c0)
    assert rep.witness == {"x": w["x"], "r": w["r"]}


def test_htl_scan_runs():
    S, E = left_half(17)
    rep = htl_density_scan(S, E, 0.5, 2, 2, radii=[1 / 8], centers=[8], c1=0.5)
    assert 0 < rep.c0 <= 1 + 1e-6


def test_scan_preconditions():
    S, E = left_half(33)
    with pytest.raises(PreconditionError):
        capacity_density_scan(S, PointSet.empty(33), 0.5, 2, 2)
    with pytest.raises(PreconditionError, match="diam"):
        capacity_density_scan(S, PointSet.from_indices(33, [3]), 0.5, 2, 2)
    with pytest.raises(PreconditionError):
        capacity_density_scan(S, E, 0.5, 2, 2, lam=2)
    with pytest.raises(PreconditionError):
        capacity_density_scan(S, E, 0.5, 2, 2, centers=[30], c1=0.5)
    with pytest.raises(PreconditionError):
        capacity_density_scan(S, E, 0.5, 2, 2, radii=[0.3], c1=0.5)


def test_pointwise_matches_brute_force():
    S, E = left_half(17)
    rep = pointwise_hardy_report(S, E, FAMILY, 0.5, 2, 2, c1=0.5)
    fields = [u for _, u in FAMILY.fields(S, E)]
    assert rep.constant == pytest.approx(brute_pointwise(S, E, fields, 0.5, 2, 2, 0.25), rel=1e-10)
    assert rep.skipped == 0 and not rep.all_skipped


def test_pointwise_radius_grid_within_ten_percent():
    S, E = left_half(33)
    full = pointwise_hardy_report(S, E, FAMILY, 0.5, 2, 2, c1=0.5)
    fine = pointwise_hardy_report(S, E, FAMILY, 0.5, 2, 2, c1=0.5, radius_grid=64)
    # a restricted radius set can only lower the maximal function
    assert fine.constant >= full.constant * (1 - 1e-12)
    assert fine.constant == pytest.approx(full.constant, rel=0.1)


def test_zero_field_is_skipped():
    S, E = left_half(17)
    zero = TestFamily([{"kind": "capacity_minimizers", "fields": [np.ones(S.n)]}])
    rep = pointwise_hardy_report(S, E, zero, 0.5, 2, 2, c1=0.5)
    assert rep.all_skipped and rep.evaluated == 0 and rep.constant == 0.0
    rep = ball_hardy_report(S, E, zero, 0.5, 2, 2, c1=0.5)
    assert rep.all_skipped


def test_reports_are_homogeneous():
    S, E = left_half(17)
    rng = np.random.default_rng(0)
    phi = rng.random((3, S.n))
    one = TestFamily([{"kind": "capacity_minimizers", "fields": list(phi)}])
    two = TestFamily([{"kind": "capacity_minimizers", "fields": list(2 * phi - 1)}])
    for report, args in [(pointwise_hardy_report, (0.5, 2, 2)),
                         (boundary_poincare_report, (0.5, 2, 2, 2)),
                         (ball_hardy_report, (0.5, 2, 2))]:
        a = report(S, E, one, *args, c1=0.5).constant
        b = report(S, E, two, *args, c1=0.5).constant
        assert math.isfinite(a) and a > 0
        assert b == pytest.approx(a, rel=1e-10)


def test_boundary_matches_brute_force():
    S, E = left_half(17)
    balls = [BallSpec(c, r) for c in (4, 8) for r in (1 / 16, 1 / 8)]
    rep = boundary_poincare_report(S, E, FAMILY, 0.5, 2, 2, 2, balls=balls, c1=0.5)
    fields = [u for _, u in FAMILY.fields(S, E)]
    want = brute_boundary(S, fields, balls, 0.5, 2, 2, 2, 3)
    assert rep.constant == pytest.approx(want, rel=1e-10)


def test_ball_hardy_matches_brute_force():
    S, E = left_half(17)
    balls = [BallSpec(c, r) for c in (4, 8) for r in (1 / 16, 1 / 8)]
    rep = ball_hardy_report(S, E, FAMILY, 0.5, 2, 2, balls=balls, c1=0.5)
    fields = [u for _, u in FAMILY.fields(S, E)]
    assert rep.constant == pytest.approx(brute_ball(S, E, fields, balls, 0.5, 2, 2, 3), rel=1e-10)


def test_default_balls_give_finite_constants():
    S, E = left_half(33)
    b = boundary_poincare_report(S, E, FAMILY, 0.5, 2, 2, 2, c1=0.5)
    c = ball_hardy_report(S, E, FAMILY, 0.5, 2, 2, c1=0.5)
    for rep in (b, c):
        assert math.isfinite(rep.constant) and rep.constant > 0
        assert rep.infinite == 0


def test_ball_checks():
    S, E = left_half(17)
    with pytest.raises(PreconditionError):
        ball_hardy_report(S, E, FAMILY, 0.5, 2, 2, balls=[BallSpec(12, 1 / 16)], c1=0.5)
    with pytest.raises(PreconditionError):
        boundary_poincare_report(S, E, FAMILY, 0.5, 2, 2, 2, balls=[BallSpec(4, 0.5)], c1=0.5)


def test_self_improvement_whole_space():
    S, _ = grid(1, 33)
    rep = self_improvement_scan(S, PointSet.full(33), 0.5, 2, 2, radii=[1 / 8], centers=[16],
                                c1=0.5, half_width=1, q_hats=(2.0,))
    assert rep.eps == pytest.approx(0.05)
    assert len(rep.region) == 9
    assert all(pt["c0"] == pytest.approx(1.0, rel=1e-9) for pt in rep.lattice)


def test_self_improvement_high_threshold_gives_empty_region():
    S, _ = grid(1, 33)
    rep = self_improvement_scan(S, PointSet.from_indices(33, [16]), 0.5, 2, 2, radii=[1 / 8],
                                centers=[16], max_radius=0.3, half_width=1, q_hats=(2.0,),
                                delta=0.99)
    assert rep.region == [] and rep.eps == 0.0
