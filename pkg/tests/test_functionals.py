import math

import numpy as np
import pytest

from conftest import brute_G, line
from fraccap.errors import HypothesisViolation, PreconditionError
from fraccap.functionals import (GradientSequence, centered_maximal, gagliardo_energy,
                                 gagliardo_pointwise, hajlasz_feasible, kolmogorov_check,
                                 lp_deviation_inf, poincare_ratio, ratio, restricted_maximal,
                                 scale_window, sequence_young_ratio, sobolev_poincare_ratio)
from fraccap.generators import grid, path
from fraccap.htl import htl_seminorm
from fraccap.space import BallSpec, MetricSpaceProfile, PointSet, ball_points


def brute_poincare(S, u, center, r, beta, t, p, q, lam):
    D = S.full_dist()
    B = [i for i in range(S.n) if D[center, i] < r]
    L = [i for i in range(S.n) if D[center, i] < lam * r]
    w = S.weights
    uB = sum(u[i] * w[i] for i in B) / sum(w[i] for i in B)
    lhs = (sum(abs(u[i] - uB) ** t * w[i] for i in B) / sum(w[i] for i in B)) ** (1 / t)
    avg = sum(brute_G(S, u, beta, q, L, x) ** p * w[x] for x in L) / sum(w[x] for x in L)
    return lhs / (r ** beta * avg ** (1 / p))


def trig_field(S, rng, terms=4):
    u = np.zeros(S.n)
    for _ in range(terms):
        k = rng.integers(1, 4, size=S.coords.shape[1])
        u += rng.normal() * np.cos(np.pi * (S.coords @ k) + 2 * np.pi * rng.random())
    return u


# -- Gagliardo kernel ---------------------------------------------------------

def test_pointwise_two_point(two_point):
    u = np.array([0.0, 1.0])
    assert gagliardo_pointwise(two_point, u, 0.5, 2, [0, 1], 0) == pytest.approx(1.0, rel=1e-15)
    assert gagliardo_pointwise(two_point, u, 0.5, 2, [0], 0) == 0.0


def test_energy_two_point(two_point):
    assert gagliardo_energy(two_point, [0.0, 1.0], 0.5, 2, 2, [0, 1]) == pytest.approx(2.0)


def test_energy_constant_is_zero():
    S, _ = grid(2, 5)
    assert gagliardo_energy(S, np.full(S.n, 3.7), 0.5, 2, 2, PointSet.full(S.n)) == 0.0


def test_pointwise_matches_brute_force():
    rng = np.random.default_rng(0)
    x = np.sort(rng.random(12))
    S = line(x, rng.random(12) + 0.2)
    u = rng.normal(size=12)
    A = [0, 2, 3, 5, 7, 8, 11]
    for beta, q in [(0.3, 1.0), (0.5, 2.0), (0.8, 3.5)]:
        for xi in range(12):
            got = gagliardo_pointwise(S, u, beta, q, A, xi)
            assert got == pytest.approx(brute_G(S, u, beta, q, A, xi), rel=1e-12)


def test_clamp_never_increases_energy():
    S, _ = grid(1, 33)
    rng = np.random.default_rng(1)
    A = PointSet.full(S.n)
    for _ in range(20):
        u = 2 * rng.normal(size=S.n)
        assert (gagliardo_energy(S, np.clip(u, 0, 1), 0.5, 2, 2, A)
                <= gagliardo_energy(S, u, 0.5, 2, 2, A))


def test_energy_scaling():
    S, _ = path(17)
    u = np.random.default_rng(2).normal(size=S.n)
    A = PointSet.full(S.n)
    e = gagliardo_energy(S, u, 0.4, 3, 2, A)
    assert gagliardo_energy(S, -2.5 * u, 0.4, 3, 2, A) == pytest.approx(2.5 ** 3 * e, rel=1e-12)


def test_params_out_of_range(two_point):
    with pytest.raises(PreconditionError):
        gagliardo_pointwise(two_point, [0, 1], 1.0, 2, [0, 1], 0)
    with pytest.raises(PreconditionError):
        gagliardo_pointwise(two_point, [0, 1], 0.5, 0.5, [0, 1], 0)
    with pytest.raises(PreconditionError):
        gagliardo_energy(two_point, [0, 1], 0.5, 0.9, 2, [0, 1])


# -- maximal function ---------------------------------------------------------

def test_maximal_constant():
    S, _ = path(9)
    for R in (0.1, 0.5, 2.0):
        assert restricted_maximal(S, np.full(9, -1.5), R, 4) == pytest.approx(1.5, rel=1e-15)


def test_maximal_path3(path3):
    f = np.array([0.0, 1.0, 0.0])
    assert restricted_maximal(path3, f, 1.0, 0) == 0.0
    assert restricted_maximal(path3, f, 1.5, 0) == pytest.approx(0.5)


def test_centered_maximal(path3):
    f = np.array([0.0, 1.0, 0.0])
    assert centered_maximal(path3, f, 0) == pytest.approx(0.5)
    assert centered_maximal(path3, f, 1) == 1.0


# -- Poincare ratio -----------------------------------------------------------

def test_poincare_constant_is_none():
    S, _ = path(9)
    assert poincare_ratio(S, np.ones(9), BallSpec(4, 0.3), 0.5, 2, 2, 2) is None


def test_poincare_two_point(two_point):
    r = poincare_ratio(two_point, [0.0, 1.0], BallSpec(0, 1.0, closed=True), 0.5, 2, 2, 2, 1.0)
    assert r == pytest.approx(0.5, rel=1e-14)


def test_poincare_grid_identity_matches_brute_force():
    S, _ = grid(1, 9)
    u = S.coords[:, 0].copy()
    got = poincare_ratio(S, u, BallSpec(4, 0.3), 0.5, 2, 2, 2, 1.0)
    want = brute_poincare(S, u, 4, 0.3, 0.5, 2, 2, 2, 1.0)
    assert math.isfinite(got)
    assert got == pytest.approx(want, rel=1e-12)


def test_ratio_conventions():
    assert ratio(0.0, 0.0) is None
    assert ratio(1.0, 0.0) == math.inf
    assert ratio(1.0, 4.0) == 0.25


def test_poincare_max_stable_under_refinement():
    maxima = []
    for m in (9, 17):
        S, _ = grid(2, m)
        c = int(np.argmin(((S.coords - 0.5) ** 2).sum(axis=1)))
        rng = np.random.default_rng(0)
        vals = [poincare_ratio(S, trig_field(S, rng), BallSpec(c, 0.25), 0.5, 1, 2, 2, 1.0)
                for _ in range(200)]
        maxima.append(max(v for v in vals if v is not None))
    assert all(math.isfinite(v) for v in maxima)
    assert abs(maxima[1] / maxima[0] - 1) <= 0.25


# -- Hajlasz gradients and HTL -------------------------------------------------

def test_htl_two_point_oracle(two_point):
    for p in (2, 4):
        res = htl_seminorm(two_point, [0.0, 1.0], 0.5, p, 2, [0, 1])
        assert res.value == pytest.approx(2 ** (1 / p) / 2, rel=1e-6)
        assert res.status == "exact"
        # the optimum splits the jump evenly at the single active scale k = -1
        np.testing.assert_allclose(res.minimizer.g(-1), [0.5, 0.5], rtol=1e-5)


def test_htl_constant_is_zero():
    S, _ = path(5)
    res = htl_seminorm(S, np.full(5, 2.0), 0.5, 2, 2, PointSet.full(5))
    assert res.value == pytest.approx(0.0, abs=1e-12)
    assert np.all(res.minimizer.values <= 1e-9)


def test_htl_scaling():
    S, _ = path(7)
    u = np.random.default_rng(3).normal(size=7)
    a = htl_seminorm(S, u, 0.5, 2, 2, PointSet.full(7))
    b = htl_seminorm(S, -3 * u, 0.5, 2, 2, PointSet.full(7))
    assert b.value == pytest.approx(3 * a.value, rel=1e-6)


def test_htl_q_monotone():
    S, _ = path(9)
    rng = np.random.default_rng(1)
    for _ in range(3):
        u = rng.normal(size=9)
        vals = [htl_seminorm(S, u, 0.5, 2, q, PointSet.full(9)) for q in (1.5, 2.0, 3.0)]
        for lo, hi in zip(vals, vals[1:]):
            assert hi.value <= lo.value * (1 + lo.gap + hi.gap) + 1e-12


def test_variant_below_standard():
    S, _ = path(9)
    rng = np.random.default_rng(1)
    for _ in range(3):
        u = rng.normal(size=9)
        std = htl_seminorm(S, u, 0.5, 2, 2, PointSet.full(9))
        var = htl_seminorm(S, u, 0.5, 2, 2, PointSet.full(9), variant=(0.1, 2))
        assert var.value <= std.value * (1 + std.gap + var.gap)


def test_hajlasz_feasibility():
    S, _ = path(9)
    u = np.random.default_rng(4).normal(size=9)
    omega = PointSet.full(9)
    k0, k1 = scale_window(S, omega)
    big = (u.max() - u.min()) * S.min_dist ** -0.5
    ok, _ = hajlasz_feasible(S, u, GradientSequence.constant(k0, k1, 9, big), 0.5, omega)
    assert ok
    ok, worst = hajlasz_feasible(S, u, GradientSequence.constant(k0, k1, 9, 0.0), 0.5, omega)
    assert not ok
    x, y, slack = worst
    assert slack < 0 and u[x] != u[y]
    res = htl_seminorm(S, u, 0.5, 2, 2, omega)
    ok, _ = hajlasz_feasible(S, u, res.minimizer, 0.5, omega, tol=1e-9)
    assert ok


# -- auxiliary lemmas ----------------------------------------------------------

def test_kolmogorov_zero_field():
    S, _ = path(9)
    assert kolmogorov_check(S, np.zeros(9), PointSet.full(9), 1, 2, 1.0)


def test_kolmogorov_constant_one():
    S, _ = path(9)
    B = PointSet.full(9)
    assert kolmogorov_check(S, np.ones(9), B, 1, 2, S.mass(B))


def test_kolmogorov_spike():
    S, _ = grid(1, 33)
    u = np.zeros(33)
    u[16] = 10.0
    p, p_star = 1, 2
    # the distribution function is w[16] below level 10 and 0 above
    C0 = S.weights[16] * 10.0 ** p_star
    assert kolmogorov_check(S, u, PointSet.full(33), p, p_star, C0)
    with pytest.raises(HypothesisViolation):
        kolmogorov_check(S, u, PointSet.full(33), p, p_star, C0 / 2)


def test_young_single_entry():
    for a in (1.5, 2.0, 3.0):
        assert sequence_young_ratio(a, 1, [0, 0, 1, 0]) == pytest.approx((a + 1) / (a - 1))


def test_young_large_a():
    c = np.random.default_rng(5).random(6)
    assert sequence_young_ratio(1e6, 1, c) == pytest.approx(1.0, abs=1e-5)


def test_young_two_ones():
    # inner sums are 1.5 * 2^k for k <= 0 and mirror for k >= 1: 2 * 2.25 / (1 - 1/4) = 6
    assert sequence_young_ratio(2, 2, [1, 1]) == pytest.approx(6 / 2, rel=1e-14)


def test_young_bounded_and_stable():
    a, b = 2.0, 1.5
    rng = np.random.default_rng(6)
    maxima = [max(sequence_young_ratio(a, b, rng.random(L)) for _ in range(1000))
              for L in (8, 16)]
    assert max(maxima) <= ((a + 1) / (a - 1)) ** b
    assert abs(maxima[1] / maxima[0] - 1) <= 0.25


def two_point_profile():
    return MetricSpaceProfile(c_mu=1.0, Q=1.0, c_Q=1.0, sigma=None, c_sigma=None, kappa=None,
                              c_R=None, diam=1.0, n0=-1)


def test_sobolev_poincare_constant():
    S = line([0.0, 1.0])
    g = GradientSequence.constant(-2, 1, 2, 0.0)
    assert sobolev_poincare_ratio(S, [1.0, 1.0], g, 0, -1, 0.5, 1, 0.1, 0.2,
                                  two_point_profile()) is None


def test_sobolev_poincare_two_point():
    S = line([0.0, 1.0])
    values = np.zeros((4, 2))
    values[1] = 0.5  # k = -1 carries the only pair
    g = GradientSequence(-2, values)
    beta = 0.5
    got = sobolev_poincare_ratio(S, [0.0, 1.0], g, 0, -1, beta, 1, 0.1, 0.2, two_point_profile())
    # inf_c of the L^{t*} deviation is 1/2 at c = 1/2; the right side is 2^beta / 2
    assert got == pytest.approx(2 ** -beta, rel=1e-8)


def test_sobolev_poincare_ramp_stable():
    S, _ = grid(1, 33)
    u = np.clip((S.coords[:, 0] - 0.25) / 0.5, 0, 1)
    res = htl_seminorm(S, u, 0.5, 2, 2, PointSet.full(33))
    prof = MetricSpaceProfile(c_mu=2.0, Q=1.0, c_Q=1.0, sigma=None, c_sigma=None, kappa=None,
                              c_R=None, diam=1.0, n0=0)
    got = sobolev_poincare_ratio(S, u, res.minimizer, 16, 2, 0.5, 1, 0.1, 0.2, prof)
    assert math.isfinite(got) and got > 0
    small = ball_points(S, BallSpec(16, 0.25)).mask
    s = 1 / (1 - 0.1)
    lhs, _ = lp_deviation_inf(u[small], S.weights[small], s)
    cs = np.linspace(u[small].min(), u[small].max(), 20001)
    w = S.weights[small] / S.weights[small].sum()
    fine = min((w * np.abs(u[small] - c) ** s).sum() ** (1 / s) for c in cs)
    assert lhs == pytest.approx(fine, rel=1e-2)
    assert lhs <= fine * (1 + 1e-9)
