import itertools
import math

import numpy as np
import pytest

from fraccap.capacity import (CapacityOptions, CapacityProblem, ball_capacity_band,
                              capacity_comparison_report, fractional_capacity, htl_capacity,
                              lipschitz_test_function, mazya_check, problem_energy)
from fraccap.errors import DegenerateError, PreconditionError
from fraccap.generators import grid, path
from fraccap.htl import htl_seminorm
from fraccap.space import BallSpec, PointSet, ball_points, dist_to_set_all


def dense_oracle(prob):
    """p = q = 2 capacity from the normal equations of the quadratic energy."""
    S = prob.space
    D = S.full_dist()
    w = S.weights
    c, r = prob.B.center, prob.B.radius
    E = prob.E.mask
    two = D[c] < 2 * r
    big = (D[c] < prob.lam * r) | two
    dom = np.flatnonzero(big)
    A = np.zeros((dom.size, dom.size))
    for a, x in enumerate(dom):
        for b, y in enumerate(dom):
            if x == y:
                continue
            d = D[x, y]
            mass = w[D[x] < d].sum()
            A[a, b] = w[x] * w[y] / (d ** (2 * prob.beta) * mass)
    W = A + A.T
    L = np.diag(W.sum(axis=1)) - W  # energy = phi' L phi
    fixed = np.where(E[dom], 1.0, 0.0)
    free = two[dom] & ~E[dom]
    phi = fixed.copy()
    if free.any():
        phi[free] = np.linalg.solve(L[np.ix_(free, free)], -L[np.ix_(free, ~free)] @ fixed[~free])
    return float(phi @ L @ phi)


def test_empty_set_has_zero_capacity():
    S, _ = grid(2, 9)
    prob = CapacityProblem(S, PointSet.empty(S.n), BallSpec(40, 0.25))
    res = fractional_capacity(prob)
    assert res.value == 0.0
    assert np.all(res.minimizer == 0)
    assert htl_capacity(prob).value == 0.0


def test_space_inside_2b_gives_zero():
    S, _ = path(9)
    prob = CapacityProblem(S, PointSet.from_indices(9, [4]), BallSpec(4, 0.6))
    res = fractional_capacity(prob)
    assert res.value == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(res.minimizer, 1.0)


def test_htl_whole_space_gives_zero():
    S, _ = path(5)
    prob = CapacityProblem(S, PointSet.full(5), BallSpec(2, 0.5, closed=True), lam=2)
    assert htl_capacity(prob).value == pytest.approx(0.0, abs=1e-12)


def test_grid_example_matches_dense_oracle():
    S, _ = grid(2, 9)
    B = BallSpec(40, 0.25)
    prob = CapacityProblem(S, ball_points(S, B.as_closed()), B, 4, 0.5, 2, 2)
    want = dense_oracle(prob)
    for method in ("direct", "spg"):
        res = fractional_capacity(prob, CapacityOptions(method=method))
        assert res.status == "exact"
        assert res.value == pytest.approx(want, rel=1e-6)


def test_minimizer_is_admissible():
    S, _ = grid(2, 9)
    B = BallSpec(30, 0.2)
    E = ball_points(S, B.as_closed())
    prob = CapacityProblem(S, E, B, 4, 0.5, 3, 2)
    res = fractional_capacity(prob)
    phi = res.minimizer
    _, two, _, _, _ = prob.regions()
    assert np.all(phi >= -1e-9) and np.all(phi <= 1 + 1e-9)
    assert np.all(np.abs(phi[E.mask] - 1) <= 1e-9)
    assert np.all(np.abs(phi[~two]) <= 1e-9)
    assert res.value == pytest.approx(problem_energy(prob, phi), rel=1e-9)


def test_p_below_q_is_certified():
    # each point contributes a p-th power (p >= 1) of a q-norm of a linear map, so the
    # energy stays convex and the gap certificate is valid for p < q as well
    S, _ = path(17)
    B = BallSpec(8, 0.125)
    prob = CapacityProblem(S, ball_points(S, B.as_closed()), B, 4, 0.5, 1.5, 2)
    res = fractional_capacity(prob)
    assert res.status == "exact" and res.gap <= 1e-6
    _, _, _, free, _ = prob.regions()
    rng = np.random.default_rng(0)
    for _ in range(200):
        phi = res.minimizer.copy()
        phi[free] = np.clip(phi[free] + rng.normal(0, 0.2, free.sum()), 0, 1)
        assert problem_energy(prob, phi) >= res.value * (1 - 1e-6)


def test_lambda_two_flagged():
    S, _ = path(17)
    B = BallSpec(8, 0.125)
    prob = CapacityProblem(S, ball_points(S, B.as_closed()), B, 2, 0.5, 2, 2)
    assert fractional_capacity(prob).warnings


def test_rejects_bad_problems():
    S, _ = path(9)
    with pytest.raises(PreconditionError):
        CapacityProblem(S, PointSet.from_indices(9, [0]), BallSpec(4, 0.125))
    with pytest.raises(PreconditionError):
        CapacityProblem(S, PointSet.from_indices(9, [4]), BallSpec(4, 0.125), lam=1.5)


def test_htl_capacity_grid_search():
    S, _ = path(5)
    prob = CapacityProblem(S, PointSet.from_indices(5, [2]), BallSpec(2, 0.2), 4, 0.5, 2, 2)
    _, two, big, free, _ = prob.regions()
    assert list(np.flatnonzero(two)) == [1, 2, 3] and big.all()
    res = htl_capacity(prob)
    levels = np.linspace(0, 1, 21)
    best = math.inf
    for a, b in itertools.product(levels, levels):
        phi = np.array([0.0, a, 1.0, b, 0.0])
        best = min(best, htl_seminorm(S, phi, 0.5, 2, 2, PointSet.full(5)).value ** 2)
    assert res.value <= best * (1 + 1e-6)
    assert res.value == pytest.approx(best, rel=0.02)


def test_set_and_lambda_monotone():
    S, _ = grid(2, 9)
    B = BallSpec(40, 0.25)
    Bbar = ball_points(S, B.as_closed())
    F = Bbar & PointSet(S.coords[:, 0] <= 0.5)
    small = CapacityProblem(S, F, B, 4, 0.5, 2, 2)
    big = CapacityProblem(S, Bbar, B, 4, 0.5, 2, 2)
    assert fractional_capacity(small).value <= fractional_capacity(big).value * (1 + 1e-9)
    assert htl_capacity(small).value <= htl_capacity(big).value * (1 + 1e-6)
    a = fractional_capacity(big.with_(lam=3)).value
    b = fractional_capacity(big.with_(lam=5)).value
    assert a <= b * (1 + 1e-9)


def test_htl_capacity_q_monotone():
    S, _ = path(9)
    B = BallSpec(4, 0.125)
    prob = CapacityProblem(S, ball_points(S, B.as_closed()), B, 4, 0.5, 2, 2)
    lo = htl_capacity(prob.with_(q=1.5))
    hi = htl_capacity(prob.with_(q=3))
    assert hi.value <= lo.value * (1 + lo.gap + hi.gap) + 1e-12


def test_truncation_never_increases_energy():
    S, _ = grid(2, 9)
    B = BallSpec(40, 0.25)
    prob = CapacityProblem(S, ball_points(S, B.as_closed()), B, 4, 0.5, 2, 2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        phi = rng.normal(0.5, 1.0, size=S.n)
        assert problem_energy(prob, np.clip(phi, 0, 1)) <= problem_energy(prob, phi)


def test_ball_band_grid65():
    S, _ = grid(1, 65)
    band = ball_capacity_band(S, 32, 1 / 8, 4, 0.5, 2, 2)
    assert math.isfinite(band.cap) and math.isfinite(band.lipschitz_upper)
    assert band.cap <= band.lipschitz_upper
    mass = S.mass(ball_points(S, BallSpec(32, 1 / 8)))
    assert band.normalized == pytest.approx(band.cap * (1 / 8) ** (0.5 * 2) / mass, rel=1e-15)


def test_lipschitz_test_function_shape():
    S, _ = path(33)
    phi = lipschitz_test_function(S, 16, 0.125)
    Bbar = ball_points(S, BallSpec(16, 0.125, closed=True))
    assert np.all(phi[Bbar.mask] == 1)
    assert np.all(phi[S.dist_row(16) >= 0.25] == 0)
    np.testing.assert_allclose(phi, np.clip(1 - dist_to_set_all(S, Bbar) / 0.125, 0, 1))


def test_mazya_zero_field_is_degenerate():
    S, _ = path(9)
    res = mazya_check(S, np.zeros(9), BallSpec(4, 0.125), 4, 3, 0.5, 2, 2, 2)
    assert res.degenerate and res.ratio == 0.0


def test_mazya_no_zeros_errors():
    S, _ = path(9)
    with pytest.raises(DegenerateError):
        mazya_check(S, np.ones(9), BallSpec(4, 0.125), 4, 3, 0.5, 2, 2, 2)


def test_mazya_homogeneous():
    S, _ = path(9)
    u = np.where(S.coords[:, 0] <= 0.5, 0.0, S.coords[:, 0] - 0.5)
    # a ball covering the whole path puts X inside 2B: capacity 0, flagged degenerate
    whole = mazya_check(S, u, BallSpec(4, 0.5, closed=True), 4, 3, 0.5, 2, 2, 2)
    assert whole.degenerate and whole.ratio == 0.0
    B = BallSpec(4, 0.25, closed=True)
    a = mazya_check(S, u, B, 4, 3, 0.5, 2, 2, 2)
    b = mazya_check(S, 2 * u, B, 4, 3, 0.5, 2, 2, 2)
    assert math.isfinite(a.ratio) and a.ratio > 0
    assert b.ratio == pytest.approx(a.ratio, rel=1e-12)


def test_mazya_matches_direct_summation():
    S, _ = grid(1, 33)
    x = S.coords[:, 0]
    beta, t, p, q, lam, lam_small = 0.5, 2, 2, 2, 4, 3
    u = np.minimum(np.maximum(x - 0.25, 0) ** beta, 0.3)
    B = BallSpec(8, 0.125)
    res = mazya_check(S, u, B, lam, lam_small, beta, t, p, q)
    D, w = S.full_dist(), S.weights
    LB = D[8] < lam * 0.125
    avg = (np.abs(u[LB]) ** t * w[LB]).sum() / w[LB].sum()
    num = avg ** (p / t) * res.cap.value
    dom = np.flatnonzero(D[8] < lam_small * lam * 0.125)
    den = 0.0
    for a in dom:
        s = 0.0
        for b in dom:
            if a != b:
                d = D[a, b]
                s += abs(u[a] - u[b]) ** q / (d ** (beta * q) * w[D[a] < d].sum()) * w[b]
        den += s ** (p / q) * w[a]
    assert res.ratio == pytest.approx(num / den, rel=1e-10)


def test_comparison_empty_set():
    S, _ = path(65)
    rows = capacity_comparison_report(S, PointSet.empty(65), BallSpec(32, 1 / 64), 2, 0.5, 2, 2,
                                      variants=("htl_vs_frac", ("q_pair", 3, 2)))
    assert rows and all(r.ratio is None for r in rows)


def test_comparison_path2048():
    S, _ = path(2048)
    B = BallSpec(1024, S.diam / 160)
    E = ball_points(S, B.as_closed())
    for lam in (2, 4):
        rows = capacity_comparison_report(S, E, B, lam, 0.5, 2, 2,
                                          variants=("htl_vs_frac", ("q_pair", 3, 2)))
        assert all(r.ratio is not None and math.isfinite(r.ratio) for r in rows)
        if lam == 4:
            assert all(r.ratio > 0 for r in rows)


def test_comparison_strict_names_diameter():
    S, _ = path(65)
    B = BallSpec(32, 1 / 16)
    with pytest.raises(PreconditionError, match="diameter"):
        capacity_comparison_report(S, ball_points(S, B.as_closed()), B, 4, 0.5, 2, 2,
                                   strict=True)
