"""Hajlasz-Triebel-Lizorkin seminorms and relative capacities.

Both are convex programs over per-scale gradient fields g_k(x) >= 0 with
objective sum_x mu(x) ||(g_k(x))_k||_q^p and one linear inequality per pair
and orientation. They are solved as conic programs; the reported gap comes
from an independent Lagrangian lower bound built from the returned pair
multipliers, evaluated against a repaired (exactly feasible) primal point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .errors import PreconditionError
from .functionals import (GradientSequence, _check_beta_q, _field, _variant_rhs_coeffs,
                          pair_data, scale_window)
from .space import _as_mask


@dataclass(frozen=True)
class HTLOptions:
    gap_tol: float = 1e-6
    solver: str = "CLARABEL"
    tol: float = 1e-10
    max_iter: int = 500

    def key(self) -> dict:
        return {"gap_tol": self.gap_tol, "solver": self.solver, "tol": self.tol,
                "max_iter": self.max_iter}


@dataclass
class SeminormResult:
    value: float
    minimizer: GradientSequence
    status: str
    gap: float
    meta: dict = field(default_factory=dict)


def _check_p_open(p):
    if not 1 < p < math.inf:
        raise PreconditionError(f"p must lie in (1,inf), got {p}")


def _check_q(q):
    if not (1 <= q < math.inf or q == math.inf):
        raise PreconditionError(f"q must lie in [1,inf], got {q}")


def _dual_q(q):
    if q == 1:
        return math.inf
    if q == math.inf:
        return 1.0
    return q / (q - 1)


def _row_norms(G, q):
    if q == math.inf:
        return np.abs(G).max(axis=1) if G.shape[1] else np.zeros(G.shape[0])
    return (np.abs(G) ** q).sum(axis=1) ** (1 / q)


def mixed_norm_p(mu, G, p, q) -> float:
    """sum_x mu(x) ||G[x, :]||_q^p."""
    return float((mu * _row_norms(G, q) ** p).sum())


def _conjugate_sum(mu, S, p, q) -> float:
    """sum_x of the conjugate of mu ||.||_q^p on the nonnegative orthant at S[x]."""
    a = _row_norms(np.maximum(S, 0.0), _dual_q(q))
    return float(((p - 1) * mu * (a / (mu * p)) ** (p / (p - 1))).sum())


def _row_norm_expr(G, q, m):
    # G is nonnegative, so the l^1 and l^inf norms are sums and maxima
    if q == 1:
        return cp.sum(G, axis=1)
    if q == math.inf:
        return cp.max(G, axis=1)
    if q == 2:
        return cp.norm(G, 2, axis=1)
    return cp.hstack([cp.norm(G[i, :], q) for i in range(m)])


class _Program:
    """min sum_x mu_x ||G_x||_q^p  s.t.  Mphi phi - Ag g <= c, 0<=phi<=1, g>=0."""

    def __init__(self, mu, K, Ag, c, Mphi, p, q):
        self.mu, self.K, self.Ag, self.c, self.Mphi = mu, K, Ag.tocsr(), c, Mphi
        self.p, self.q = p, q
        self.m = mu.size
        self.f = 0 if Mphi is None else Mphi.shape[1]

    def solve(self, opts: HTLOptions):
        m, K, p, q = self.m, self.K, self.p, self.q
        scale = self.mu.sum()
        g = cp.Variable(m * K, nonneg=True)
        G = cp.reshape(g, (m, K), order="C")
        w = self.mu / scale
        if p == q and q == 2:
            obj = cp.sum_squares(cp.multiply(np.repeat(np.sqrt(w), K), g))
        elif p == q and q != math.inf:
            obj = cp.sum(cp.multiply(np.repeat(w, K), cp.power(g, p)))
        else:
            obj = cp.sum(cp.multiply(w, cp.power(_row_norm_expr(G, q, m), p)))
        cons = []
        lhs = -(self.Ag @ g)
        phi = None
        if self.f:
            phi = cp.Variable(self.f)
            lhs = lhs + self.Mphi @ phi
            cons += [phi >= 0, phi <= 1]
        main = lhs <= self.c
        cons.insert(0, main)
        prob = cp.Problem(cp.Minimize(obj), cons)
        settings = {}
        if opts.solver == "CLARABEL":
            settings = dict(tol_gap_abs=opts.tol * 1e-2, tol_gap_rel=opts.tol,
                            tol_feas=opts.tol, max_iter=opts.max_iter)
        try:
            with warnings.catch_warnings():
                # inaccurate solves are caught by the certificate below
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=opts.solver, **settings)
            solver_status = prob.status
        except cp.error.SolverError as exc:
            solver_status = f"solver_error: {exc}"
        gv = np.zeros(m * K) if g.value is None else np.maximum(np.asarray(g.value), 0.0)
        pv = None
        if self.f:
            pv = np.full(self.f, 0.5) if phi is None or phi.value is None else \
                np.clip(np.asarray(phi.value), 0.0, 1.0)
        lam = main.dual_value
        lam = np.zeros(self.Ag.shape[0]) if lam is None else np.maximum(np.asarray(lam), 0.0)
        lam = lam * scale  # multipliers of the unnormalised objective
        return self._certify(pv, gv, lam, solver_status)

    def _certify(self, phi, g, lam, solver_status):
        # repair: raise g until every row holds exactly
        r = -self.c - self.Ag @ g
        if self.f:
            r = r + self.Mphi @ phi
        viol = r > 0
        if viol.any():
            Av = self.Ag[np.flatnonzero(viol)]
            rowsum = np.asarray(Av.sum(axis=1)).ravel()
            delta = r[viol] / rowsum
            bump = Av.copy().tocoo()
            bump.data = np.repeat(delta, np.diff(Av.indptr)) * (bump.data > 0)
            inc = np.zeros(g.size)
            np.maximum.at(inc, bump.col, bump.data)
            g = g + inc
        G = g.reshape(self.m, self.K)
        primal = mixed_norm_p(self.mu, G, self.p, self.q)
        # Lagrangian lower bound at the returned multipliers
        S = (self.Ag.T @ lam).reshape(self.m, self.K)
        dual = -float(lam @ self.c) - _conjugate_sum(self.mu, S, self.p, self.q)
        if self.f:
            b = self.Mphi.T @ lam
            dual += float(np.minimum(b, 0.0).sum())
        dual = max(dual, 0.0)
        gap = 0.0 if primal <= 0 else max(primal - dual, 0.0) / primal
        return phi, G, primal, dual, gap, solver_status


def _scale_layout(k, variant):
    if variant is None:
        lo, hi = int(k.min()), int(k.max())
    else:
        lo, hi = int(k.min()) - int(variant[1]), int(k.max())
    return lo, hi - lo + 1


def _gradient_rows(x, y, d, k, pos, beta, variant, k0, K):
    """Sparse matrix of the pair right-hand sides in the g variables."""
    npair = x.size
    if variant is None:
        rows = np.repeat(np.arange(npair), 2)
        kk = k - k0
        cols = np.column_stack([pos[x] * K + kk, pos[y] * K + kk]).ravel()
        vals = np.repeat(d ** beta, 2)
    else:
        eps, N = variant
        C = _variant_rhs_coeffs(d, beta, eps, N, k0, k0 + K - 1)
        pi, jj = np.nonzero(C)
        v = C[pi, jj]
        rows = np.concatenate([pi, pi])
        cols = np.concatenate([pos[x[pi]] * K + jj, pos[y[pi]] * K + jj])
        vals = np.concatenate([v, v])
    return sp.csr_matrix((vals, (rows, cols)), shape=(npair, pos.max() * K + K))


def _check_variant(beta, variant):
    if variant is None:
        return None
    eps, N = variant
    if not 0 < eps <= beta:
        raise PreconditionError("variant class needs 0 < eps <= beta")
    if int(N) != N or N < 1:
        raise PreconditionError("variant class needs an integer N >= 1")
    return float(eps), int(N)


def _sequence(space, omega_mask, idx, G, k0, variant):
    lo, hi = scale_window(space, omega_mask)
    if G is not None and G.size:
        lo, hi = min(lo, k0), max(hi, k0 + G.shape[1] - 1)
    vals = np.zeros((hi - lo + 1, space.n))
    if G is not None and G.size:
        vals[k0 - lo:k0 - lo + G.shape[1], idx] = G.T
    return GradientSequence(lo, vals)


def htl_seminorm(space, u, beta, p, q, omega, variant=None, opts: HTLOptions | None = None):
    """Minimal ||g||_{L^p(omega; l^q)} over fractional Hajlasz gradients of u on omega.

    ``variant=(eps, N)`` uses the multi-scale class instead; its scale window
    is extended N steps towards coarse scales.
    """
    _check_beta_q(beta, 2.0 if q == math.inf else q)
    _check_p_open(p)
    _check_q(q)
    variant = _check_variant(beta, variant)
    opts = opts or HTLOptions()
    u = _field(space, u)
    mask = _as_mask(space, omega)
    if not mask.any():
        raise PreconditionError("omega must be nonempty")
    idx = np.flatnonzero(mask)
    x, y, d, k = pair_data(space, mask)
    t = np.abs(u[x] - u[y])
    keep = t > 0
    if not keep.any():
        return SeminormResult(0.0, _sequence(space, mask, idx, None, 0, variant), "exact", 0.0,
                              {"pairs": 0})
    x, y, d, k, t = x[keep], y[keep], d[keep], k[keep], t[keep]
    pos = np.full(space.n, -1)
    pos[idx] = np.arange(idx.size)
    k0, K = _scale_layout(k, variant)
    Ag = _gradient_rows(x, y, d, k, pos, beta, variant, k0, K)
    Ag.resize((x.size, idx.size * K))
    prog = _Program(space.weights[idx], K, Ag, -t, None, p, q)
    _, G, primal, dual, gap_p, sstat = prog.solve(opts)
    value = primal ** (1 / p)
    gap = 0.0 if primal <= 0 else 1 - (dual / primal) ** (1 / p)
    status = "exact" if gap <= opts.gap_tol else "upper_bound"
    return SeminormResult(value, _sequence(space, mask, idx, G, k0, variant), status, gap,
                          {"pairs": int(x.size), "scales": K, "solver_status": sstat,
                           "primal_p": primal, "dual_p": dual})


def htl_program_for_capacity(space, dom, phi_fixed, free, beta):
    """Assemble the joint (phi, g) constraints on the energy domain ``dom``.

    ``phi_fixed`` holds prescribed values (ignored on free points); ``free``
    lists the free points in ascending order. Each pair with a free endpoint
    gives two rows (one per orientation); a pair of fixed points with
    different values gives one row.
    """
    x, y, d, k = pair_data(space, dom)
    idx = np.flatnonzero(_as_mask(space, dom))
    pos = np.full(space.n, -1)
    pos[idx] = np.arange(idx.size)
    fpos = np.full(space.n, -1)
    fpos[free] = np.arange(free.size)
    fx, fy = fpos[x] >= 0, fpos[y] >= 0
    vx = np.where(fx, 0.0, phi_fixed[x])
    vy = np.where(fy, 0.0, phi_fixed[y])
    fixed = ~fx & ~fy
    keep = ~fixed | (vx != vy)
    x, y, d, k, fx, fy, vx, vy, fixed = (a[keep] for a in (x, y, d, k, fx, fy, vx, vy, fixed))
    if x.size == 0:
        return idx, None, None, None, 0, 1
    k0, K = _scale_layout(k, None)
    A1 = _gradient_rows(x, y, d, k, pos, beta, None, k0, K)
    A1.resize((x.size, idx.size * K))
    rows, cols, vals, c, gsel = [], [], [], [], []
    base = 0
    for sign in (1.0, -1.0):
        ids = np.arange(x.size) if sign > 0 else np.flatnonzero(~fixed)
        r = base + np.arange(ids.size)
        for flag, fp, s in ((fx[ids], fpos[x[ids]], sign), (fy[ids], fpos[y[ids]], -sign)):
            rows.append(r[flag])
            cols.append(fp[flag])
            vals.append(np.full(int(flag.sum()), s))
        dv = vx[ids] - vy[ids]
        c.append(np.where(fixed[ids], -np.abs(dv), -sign * dv))
        gsel.append(ids)
        base += ids.size
    Ag = A1[np.concatenate(gsel)]
    Mphi = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(base, free.size))
    return idx, Ag, np.concatenate(c), Mphi, k0, K


__all__ = ["HTLOptions", "SeminormResult", "htl_seminorm", "mixed_norm_p"]
