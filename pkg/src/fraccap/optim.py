"""Spectral projected gradient for smooth convex objectives on a box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SPGResult:
    x: np.ndarray
    f: float
    gap: float  # Frank-Wolfe gap divided by max(f, tiny)
    iterations: int
    evaluations: int
    converged: bool
    reason: str


def fw_gap(x, g, lo, hi) -> float:
    """max over the box of <g, x - s>; bounds f(x) - min f for convex f."""
    s = np.where(g > 0, lo, hi)
    return float(np.dot(g, x - s))


def spg(fg, x0, lo=0.0, hi=1.0, gap_tol=1e-6, stall_rtol=1e-9, stall_window=50,
        max_iter=20000, memory=10, alpha_min=1e-30, alpha_max=1e30) -> SPGResult:
    """Minimise f over lo <= x <= hi given ``fg(x) -> (f, grad)``.

    Barzilai-Borwein steps with a nonmonotone Armijo search. Stops on a
    relative Frank-Wolfe gap below ``gap_tol``, on a relative decrease below
    ``stall_rtol`` over ``stall_window`` iterations, or at ``max_iter``.
    """
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), np.shape(x0))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), np.shape(x0))
    x = np.clip(np.asarray(x0, dtype=np.float64), lo, hi)
    f, g = fg(x)
    nev = 1
    if x.size == 0:
        return SPGResult(x, f, 0.0, 0, nev, True, "empty")
    pg = np.clip(x - g, lo, hi) - x
    norm = np.abs(pg).max()
    alpha = 1.0 / norm if norm > 0 else 1.0
    hist = [f]
    it = 0
    reason = "max_iter"
    while it < max_iter:
        gap = fw_gap(x, g, lo, hi)
        if gap <= gap_tol * max(f, 1e-300):
            reason = "gap"
            break
        d = np.clip(x - alpha * g, lo, hi) - x
        gd = float(np.dot(g, d))
        if gd >= 0:
            reason = "stationary"
            break
        fref = max(hist[-memory:])
        lam = 1.0
        while True:
            xn = x + lam * d
            fn, gn = fg(xn)
            nev += 1
            if fn <= fref + 1e-4 * lam * gd:
                break
            if lam < 1e-20:
                break
            # safeguarded quadratic interpolation
            lt = -0.5 * gd * lam * lam / (fn - f - lam * gd)
            lam = lt if 0.1 * lam <= lt <= 0.5 * lam else 0.5 * lam
        if lam < 1e-20:
            reason = "linesearch"
            break
        s = xn - x
        y = gn - g
        sy = float(np.dot(s, y))
        alpha = alpha_max if sy <= 0 else min(alpha_max, max(alpha_min, float(np.dot(s, s)) / sy))
        x, f, g = xn, fn, gn
        it += 1
        hist.append(f)
        if it >= stall_window and (hist[-stall_window - 1] - f) <= stall_rtol * abs(f):
            reason = "stall"
            break
    gap = fw_gap(x, g, lo, hi)
    rel = gap / f if f > 0 else (0.0 if gap <= 0 else np.inf)
    return SPGResult(x, float(f), float(max(rel, 0.0)), it, nev, rel <= gap_tol, reason)
