"""Nonlocal functionals on finite metric measure spaces.

Fields (u, phi, f, ...) are plain float arrays indexed by point. Ratios use
``None`` for the 0/0 case and ``math.inf`` for a positive numerator over a
vanishing denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolation, PreconditionError
from .kernel import kernel, scale_index
from .space import (TIE_RTOL, BallSpec, MetricMeasureSpace, _as_mask,
                    _check_point, ball_points, set_diam, within)


def _check_beta_q(beta, q):
    if not 0 < beta < 1:
        raise PreconditionError(f"beta must lie in (0,1), got {beta}")
    if not 1 <= q < math.inf:
        raise PreconditionError(f"q must lie in [1,inf), got {q}")


def _check_p(p):
    if not 1 <= p < math.inf:
        raise PreconditionError(f"p must lie in [1,inf), got {p}")


def _field(space, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (space.n,):
        raise PreconditionError(f"field must have shape ({space.n},), got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise PreconditionError("field values must be finite")
    return u


def ratio(num: float, den: float):
    if den > 0:
        return num / den
    return None if num == 0 else math.inf


def average(space: MetricMeasureSpace, f, A) -> float:
    """Mass-weighted mean over A, taken relative to the first value of A.

    The offset makes the mean of a constant (or single-point) restriction
    exactly that constant.
    """
    mask = _as_mask(space, A)
    w = space.weights[mask]
    v = np.asarray(f)[mask]
    return float(v[0] + ((v - v[0]) * w).sum() / w.sum())


# -- Gagliardo kernel ------------------------------------------------------


def gagliardo_field(space, u, beta, q, A, points=None) -> np.ndarray:
    """G_{u,beta,q,A} evaluated at ``points`` (default: the points of A).

    Sums run over every point of the space with terms outside A zeroed, so the
    value is monotone in A bit for bit.
    """
    return gagliardo_fields(space, _field(space, u)[None, :], beta, q, A, points)[0]


def gagliardo_fields(space, U, beta, q, A, points=None) -> np.ndarray:
    """G for several fields at once: rows of ``U`` are fields, result is (fields, points)."""
    _check_beta_q(beta, q)
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] != space.n or not np.all(np.isfinite(U)):
        raise PreconditionError("fields must be finite with one value per point")
    mask = _as_mask(space, A)
    rows = np.flatnonzero(mask) if points is None else np.atleast_1d(np.asarray(points))
    out = np.empty((U.shape[0], rows.size))
    cols = np.arange(space.n)
    step = max(1, 4_000_000 // max(space.n, 1))
    for start in range(0, rows.size, step):
        r = rows[start:start + step]
        K = kernel(space, r, cols, beta, q) if r.size * 4 >= space.n else \
            _kernel_uncached(space, r, cols, beta, q)
        K = np.where(mask[None, :], K, 0.0)
        for i, u in enumerate(U):
            diff = np.abs(u[r][:, None] - u[None, :])
            terms = K * (diff * diff if q == 2 else diff ** q)
            out[i, start:start + step] = terms.sum(axis=1) ** (1.0 / q)
    return out


def _kernel_uncached(space, rows, cols, beta, q):
    from .kernel import base_kernel
    D, base = base_kernel(space, rows, cols)
    with np.errstate(divide="ignore"):
        return np.where(base > 0, base / np.power(np.where(D > 0, D, 1.0), beta * q), 0.0)


def gagliardo_pointwise(space, u, beta, q, A, x) -> float:
    x = _check_point(space, x)
    if not _as_mask(space, A).any():
        raise PreconditionError("A must be nonempty")
    return float(gagliardo_field(space, u, beta, q, A, points=[x])[0])


def gagliardo_energy(space, u, beta, p, q, domain) -> float:
    """sum over x in domain of G_{u,beta,q,domain}(x)^p mu(x)."""
    _check_p(p)
    mask = _as_mask(space, domain)
    if not mask.any():
        return 0.0
    G = gagliardo_field(space, u, beta, q, mask)
    return float((G ** p * space.weights[mask]).sum())


# -- maximal functions -----------------------------------------------------


def _ball_averages(row, w, f, R, radii=None):
    """Averages of f over the open balls B(x, r), 0 < r <= R, centred where row == 0."""
    order = np.argsort(row, kind="stable")
    sd = row[order]
    cw = np.cumsum(w[order])
    cf = np.cumsum((f * w)[order])
    if radii is None:
        # distinct balls: closed balls at realized distances below R, plus B(x,R)
        ends = np.flatnonzero(np.r_[sd[1:] > sd[:-1] * (1 + TIE_RTOL), True])
        ends = ends[within(sd[ends], R, False)]
        cnt = np.searchsorted(sd, R * (1 - TIE_RTOL), side="left")
        idx = np.unique(np.r_[ends, max(cnt, 1) - 1])
    else:
        r = np.asarray(radii, dtype=np.float64)
        r = r[(r > 0) & (r <= R * (1 + TIE_RTOL))]
        cnt = np.searchsorted(sd, r * (1 - TIE_RTOL), side="left")
        idx = np.unique(np.maximum(cnt, 1) - 1)
    return cf[idx] / cw[idx]


def restricted_maximal(space, f, R, x, radii=None) -> float:
    """M_R f(x): the largest |f|-average over open balls B(x,r), 0 < r <= R.

    With ``radii=None`` every distinct ball is visited, which attains the
    supremum; an explicit radius list evaluates only those radii.
    """
    if not R > 0:
        raise PreconditionError("R must be positive")
    x = _check_point(space, x)
    f = np.abs(_field(space, f))
    return float(_ball_averages(space.dist_row(x), space.weights, f, R, radii).max())


def centered_maximal(space, f, x) -> float:
    return restricted_maximal(space, f, space.diam + 1.0, x)


# -- Poincare ------------------------------------------------------------


def poincare_ratio(space, u, ball: BallSpec, beta, t, p, q, lam=1.0):
    """Left side over r^beta (avg_{lam B} G^p)^{1/p} for the fractional Poincare inequality."""
    _check_beta_q(beta, q)
    _check_p(p)
    if not t >= 1:
        raise PreconditionError("t must be >= 1")
    if not lam >= 1:
        raise PreconditionError("lambda must be >= 1")
    u = _field(space, u)
    B = ball_points(space, ball).mask
    LB = ball_points(space, ball.scaled(lam)).mask
    uB = average(space, u, B)
    lhs = average(space, np.abs(u - uB) ** t, B) ** (1 / t)
    G = gagliardo_field(space, u, beta, q, LB)
    rhs = ball.radius ** beta * average(space, _embed(space, G ** p, LB), LB) ** (1 / p)
    return ratio(lhs, rhs)


def _embed(space, values, mask):
    out = np.zeros(space.n)
    out[mask] = values
    return out


# -- fractional Hajlasz gradients ---------------------------------------


@dataclass
class GradientSequence:
    """Nonnegative per-scale fields g_k, k = k_min..k_max, over all points."""

    k_min: int
    values: np.ndarray  # shape (number of scales, n)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise PreconditionError("gradient values must be (scales, points)")
        if np.any(self.values < 0):
            raise PreconditionError("gradient sequences are nonnegative")

    @property
    def k_max(self) -> int:
        return self.k_min + self.values.shape[0] - 1

    def covers(self, k_lo, k_hi) -> bool:
        return self.k_min <= k_lo and k_hi <= self.k_max

    def g(self, k: int) -> np.ndarray:
        if self.k_min <= k <= self.k_max:
            return self.values[k - self.k_min]
        return np.zeros(self.values.shape[1])

    def scaled(self, c: float) -> "GradientSequence":
        return GradientSequence(self.k_min, self.values * c)

    @classmethod
    def constant(cls, k_min, k_max, n, value):
        return cls(k_min, np.full((k_max - k_min + 1, n), float(value)))


def scale_window(space, omega) -> tuple[int, int]:
    """[floor(-log2 diam) - 1, ceil(-log2 minDist) + 1] over the points of omega."""
    idx = np.flatnonzero(_as_mask(space, omega))
    if idx.size < 2:
        return 0, 0
    D = space.dist(idx, idx)
    diam = float(D.max())
    mind = float(D[D > 0].min())
    return math.floor(-math.log2(diam)) - 1, math.ceil(-math.log2(mind)) + 1


def pair_data(space, omega):
    """Unordered pairs (i<j) of omega with distances and dyadic scale indices."""
    idx = np.flatnonzero(_as_mask(space, omega))
    D = space.dist(idx, idx)
    iu, ju = np.triu_indices(idx.size, k=1)
    d = D[iu, ju]
    return idx[iu], idx[ju], d, scale_index(d)


def _variant_rhs_coeffs(d, beta, eps, N, k_lo, k_hi):
    """Coefficients d^{beta-eps} 2^{-j eps} 1[d >= 2^{-j-N}] for j = k_lo..k_hi."""
    j = np.arange(k_lo, k_hi + 1)
    active = d[:, None] * (1 + TIE_RTOL) >= 2.0 ** (-(j[None, :] + N))
    return np.where(active, d[:, None] ** (beta - eps) * 2.0 ** (-j[None, :] * eps), 0.0)


def hajlasz_feasible(space, u, g: GradientSequence, beta, omega, variant=None, tol=0.0):
    """Check the pointwise gradient inequality on every pair of omega.

    Returns ``(ok, worst)`` where ``worst`` is ``(x, y, slack)`` for the most
    violated pair (or the tightest one when feasible). ``variant=(eps, N)``
    checks the summed multi-scale inequality instead.
    """
    u = _field(space, u)
    x, y, d, k = pair_data(space, omega)
    if x.size == 0:
        return True, None
    lhs = np.abs(u[x] - u[y])
    if variant is None:
        k_lo, k_hi = int(k.min()), int(k.max())
        if not g.covers(k_lo, k_hi):
            missing = k_lo if k_lo < g.k_min else k_hi
            raise PreconditionError(f"gradient window [{g.k_min},{g.k_max}] misses scale k={missing}")
        gv = g.values[k - g.k_min]
        rhs = d ** beta * (gv[np.arange(x.size), x] + gv[np.arange(x.size), y])
    else:
        eps, N = variant
        C = _variant_rhs_coeffs(d, beta, eps, N, g.k_min, g.k_max)
        rhs = (C * (g.values[:, x].T + g.values[:, y].T)).sum(axis=1)
    slack = rhs - lhs
    allowed = tol * np.maximum(1.0, np.abs(rhs))
    i = int(np.argmin(slack + allowed))
    ok = bool(np.all(slack + allowed >= 0))
    return ok, (int(x[i]), int(y[i]), float(slack[i]))


# -- auxiliary quantitative checks ---------------------------------------


def kolmogorov_check(space, u, B, p, p_star, C0) -> bool:
    """Check the weak-to-strong bound after verifying its weak-type hypothesis.

    Raises HypothesisViolation carrying the level ``s`` when
    mu({|u| > s}) s^{p_star} <= C0 fails.
    """
    if not 1 <= p < p_star:
        raise PreconditionError("need 1 <= p < p_star")
    u = np.abs(_field(space, u))
    mask = _as_mask(space, B)
    vals = u[mask]
    w = space.weights[mask]
    pos = vals[vals > 0]
    if pos.size:
        grid = np.geomspace(pos.min() / 2, pos.max() * 2, 97)
        levels = np.unique(pos)
        # sup over s of mu(|u|>s) s^p* is approached as s increases to a level
        for s, strict in [(s, True) for s in grid] + [(s, False) for s in levels]:
            m = w[vals > s].sum() if strict else w[vals >= s].sum()
            if m * s ** p_star > C0 * (1 + 1e-12):
                raise HypothesisViolation(f"weak-type bound fails at s={s!r}", witness=float(s))
    lhs = (float((vals ** p * w).sum()) / w.sum()) ** (1 / p)
    rhs = 2 ** (1 / p) * (C0 * p / (p_star - p)) ** (1 / p_star) * w.sum() ** (-1 / p_star)
    return lhs <= rhs


def sequence_young_ratio(a, b, c):
    """sum_k (sum_j a^{-|j-k|} c_j)^b / sum_j c_j^b over all integers k.

    ``c`` lists c_j for consecutive j; the outer sum's geometric tails beyond
    the support are added in closed form.
    """
    a, b = float(a), float(b)
    if not a > 1 or not b > 0:
        raise PreconditionError("need a > 1 and b > 0")
    c = np.asarray(c, dtype=np.float64)
    if np.any(c < 0):
        raise PreconditionError("c must be nonnegative")
    den = float((c ** b).sum())
    if den == 0:
        return None
    j = np.arange(c.size)
    inner = (a ** -np.abs(j[None, :] - j[:, None]) * c[None, :]).sum(axis=1)
    tail = a ** -b / (1 - a ** -b)
    total = float((inner ** b).sum()) + (inner[0] ** b + inner[-1] ** b) * tail
    return total / den


def golden_min(f, lo, hi, tol=1e-10, max_iter=500):
    """Golden-section search for a minimiser of f on [lo, hi]."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def lp_deviation_inf(values, w, s, grid_points=65, tol=1e-10):
    """inf over c of (avg |values - c|^s)^{1/s} by coarse scan plus golden refinement."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return 0.0, lo
    wn = w / w.sum()

    def obj(c):
        return float((np.abs(values - c) ** s * wn).sum())

    cs = np.linspace(lo, hi, grid_points)
    k = int(np.argmin([obj(c) for c in cs]))
    a, b = cs[max(k - 1, 0)], cs[min(k + 1, grid_points - 1)]
    c, v = golden_min(obj, a, b, tol=tol)
    return v ** (1 / s), c


def sobolev_poincare_ratio(space, u, g: GradientSequence, x0, n, beta, t, eps, eps_prime,
                           profile):
    """Left over right side of the dyadic Sobolev-Poincare inequality, constant removed."""
    Q = profile.Q
    if not 0 < eps < eps_prime < beta < 1:
        raise PreconditionError("need 0 < eps < eps' < beta < 1")
    if not 0 < t < Q / beta:
        raise PreconditionError(f"need 0 < t < Q/beta = {Q / beta}")
    u = _field(space, u)
    x0 = _check_point(space, x0)
    small = ball_points(space, BallSpec(x0, 2.0 ** (-n))).mask
    big = ball_points(space, BallSpec(x0, 2.0 ** (-n + 1))).mask
    ok, worst = hajlasz_feasible(space, u, g, beta, big, tol=1e-9)
    if not ok:
        raise PreconditionError(f"g is not a fractional gradient of u on B(x0,2^(1-n)); pair {worst}")
    t_star = Q * t / (Q - eps * t)
    lhs, _ = lp_deviation_inf(u[small], space.weights[small], t_star)
    wb = space.weights[big]
    rhs = 0.0
    for j in range(max(n - 2, g.k_min), g.k_max + 1):
        avg = float((g.g(j)[big] ** t * wb).sum() / wb.sum()) ** (1 / t)
        rhs += 2.0 ** (-j * (beta - eps_prime)) * avg
    rhs *= 2.0 ** (-n * eps_prime)
    return ratio(lhs, rhs)


def lipschitz_constant_on(space, u, A) -> float:
    idx = np.flatnonzero(_as_mask(space, A))
    if idx.size < 2:
        return 0.0
    D = space.dist(idx, idx)
    diff = np.abs(u[idx][:, None] - u[idx][None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.nanmax(np.where(D > 0, diff / D, 0.0)))


__all__ = [
    "GradientSequence", "average", "centered_maximal", "gagliardo_energy", "gagliardo_field",
    "gagliardo_fields", "gagliardo_pointwise", "golden_min", "hajlasz_feasible", "kolmogorov_check", "pair_data",
    "poincare_ratio", "ratio", "restricted_maximal", "scale_window", "sequence_young_ratio",
    "sobolev_poincare_ratio", "set_diam",
]
