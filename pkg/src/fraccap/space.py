"""Finite metric measure spaces, point sets and ball queries."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import PreconditionError, ValidationError

# Relative tolerance under which two distances are treated as the same value.
# Euclidean coordinates on lattices produce equal distances that differ in the
# last ulp; ball membership must not depend on that noise.
TIE_RTOL = 1e-12

MAX_POINTS = 65536
# Full pairwise matrices are cached up to this size (n^2 float64 each).
FULL_MATRIX_LIMIT = 5000


class PointSet:
    """Immutable subset of the points of a space, stored as a boolean mask."""

    __slots__ = ("_mask", "_hash")

    def __init__(self, mask):
        mask = np.array(mask, dtype=bool, copy=True)
        if mask.ndim != 1:
            raise ValueError("PointSet mask must be one-dimensional")
        mask.setflags(write=False)
        self._mask = mask
        self._hash = None

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> "PointSet":
        mask = np.zeros(n, dtype=bool)
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise PreconditionError(f"point index out of range [0,{n})")
        mask[idx] = True
        return cls(mask)

    @classmethod
    def empty(cls, n: int) -> "PointSet":
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def full(cls, n: int) -> "PointSet":
        return cls(np.ones(n, dtype=bool))

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def n(self) -> int:
        return self._mask.size

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self._mask)

    def __len__(self):
        return int(self._mask.sum())

    def __bool__(self):
        return bool(self._mask.any())

    def __contains__(self, i):
        return bool(self._mask[int(i)])

    def __iter__(self):
        return iter(self.indices.tolist())

    def _check(self, other):
        if not isinstance(other, PointSet) or other.n != self.n:
            raise TypeError("PointSet operations need sets over the same space")

    def __and__(self, other):
        self._check(other)
        return PointSet(self._mask & other._mask)

    def __or__(self, other):
        self._check(other)
        return PointSet(self._mask | other._mask)

    def __sub__(self, other):
        self._check(other)
        return PointSet(self._mask & ~other._mask)

    def __le__(self, other):
        self._check(other)
        return not bool((self._mask & ~other._mask).any())

    def __ge__(self, other):
        return other <= self

    def __eq__(self, other):
        return isinstance(other, PointSet) and other.n == self.n and bool(
            np.array_equal(self._mask, other._mask))

    def __hash__(self):
        return hash(self.digest())

    def complement(self) -> "PointSet":
        return PointSet(~self._mask)

    def digest(self) -> str:
        if self._hash is None:
            self._hash = hashlib.sha256(np.packbits(self._mask).tobytes()
                                        + str(self.n).encode()).hexdigest()[:20]
        return self._hash

    def __repr__(self):
        idx = self.indices
        shown = ", ".join(map(str, idx[:8].tolist()))
        more = ", ..." if idx.size > 8 else ""
        return f"PointSet(n={self.n}, {{{shown}{more}}})"


@dataclass(frozen=True)
class BallSpec:
    center: int
    radius: float
    closed: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise PreconditionError(f"ball radius must be positive, got {self.radius}")

    def scaled(self, t: float) -> "BallSpec":
        return BallSpec(self.center, self.radius * t, self.closed)

    def as_closed(self) -> "BallSpec":
        return BallSpec(self.center, self.radius, True)

    def as_open(self) -> "BallSpec":
        return BallSpec(self.center, self.radius, False)


class MetricMeasureSpace:
    """A finite set of weighted atoms with an exact pairwise metric.

    The metric is either Euclidean on ``coords`` or an explicit symmetric
    matrix. Instances are treated as immutable; derived matrices are cached.
    """

    def __init__(self, weights, coords=None, matrix=None, validate=True):
        weights = np.array(weights, dtype=np.float64, copy=True).ravel()
        n = weights.size
        if (coords is None) == (matrix is None):
            raise ValidationError("give exactly one of coords or matrix")
        if n > MAX_POINTS:
            raise ValidationError(f"n={n} exceeds the hard cap of {MAX_POINTS} points")
        if n < 1:
            raise ValidationError("a space needs at least one point")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            bad = int(np.flatnonzero(~(weights > 0) | ~np.isfinite(weights))[0])
            raise ValidationError(f"weight of point {bad} must be positive and finite")
        weights.setflags(write=False)
        self.weights = weights
        self.n = n
        self.coords = None
        self._matrix = None
        if coords is not None:
            coords = np.array(coords, dtype=np.float64, copy=True)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != n:
                raise ValidationError("coords and weights disagree on the point count")
            if not np.all(np.isfinite(coords)):
                raise ValidationError("coords must be finite")
            coords.setflags(write=False)
            self.coords = coords
        else:
            matrix = np.array(matrix, dtype=np.float64, copy=True)
            if matrix.shape != (n, n):
                raise ValidationError("metric matrix must be n x n")
            matrix.setflags(write=False)
            self._matrix = matrix
        self._cache = {}
        if validate:
            self.validate()

    # -- metric access -------------------------------------------------

    @property
    def kind(self) -> str:
        return "euclidean" if self.coords is not None else "matrix"

    def dist(self, rows=None, cols=None) -> np.ndarray:
        """Distance submatrix for index arrays ``rows`` x ``cols``."""
        rows = np.arange(self.n) if rows is None else np.atleast_1d(np.asarray(rows))
        cols = np.arange(self.n) if cols is None else np.atleast_1d(np.asarray(cols))
        full = self._cache.get("D")
        if full is not None:
            return full[np.ix_(rows, cols)]
        if self._matrix is not None:
            return self._matrix[np.ix_(rows, cols)]
        if rows.size * cols.size >= self.n * self.n and self.n <= FULL_MATRIX_LIMIT:
            return self.full_dist()[np.ix_(rows, cols)]
        return cdist(self.coords[rows], self.coords[cols])

    def full_dist(self) -> np.ndarray:
        if self.n > FULL_MATRIX_LIMIT:
            raise PreconditionError(
                f"full distance matrix not available for n={self.n} > {FULL_MATRIX_LIMIT}")
        D = self._cache.get("D")
        if D is None:
            if self._matrix is not None:
                D = self._matrix
            else:
                D = cdist(self.coords, self.coords)
                np.fill_diagonal(D, 0.0)
                D.setflags(write=False)
            self._cache["D"] = D
        return D

    def metric(self, i: int, j: int) -> float:
        return float(self.dist([i], [j])[0, 0])

    def dist_row(self, x: int) -> np.ndarray:
        return self.dist([x])[0]

    def mass(self, s) -> float:
        if isinstance(s, PointSet):
            s = s.mask
        return float(self.weights[s].sum())

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def diam(self) -> float:
        if "diam" not in self._cache:
            if self.n < 2:
                self._cache["diam"] = 0.0
            elif self._matrix is not None or self.n <= FULL_MATRIX_LIMIT:
                self._cache["diam"] = float(self.full_dist().max())
            else:
                self._cache["diam"] = float(max(self.dist([i]).max() for i in range(self.n)))
        return self._cache["diam"]

    @property
    def min_dist(self) -> float:
        if "min_dist" not in self._cache:
            if self.n < 2:
                raise PreconditionError("minimal distance needs n >= 2")
            best = math.inf
            for start in range(0, self.n, 512):
                rows = np.arange(start, min(start + 512, self.n))
                block = self.dist(rows)
                block[np.arange(rows.size), rows] = np.inf
                best = min(best, float(block.min()))
            self._cache["min_dist"] = best
        return self._cache["min_dist"]

    def digest(self) -> str:
        """Content hash of weights and metric; stable across save/load."""
        if "digest" not in self._cache:
            h = hashlib.sha256()
            h.update(self.kind.encode())
            h.update(self.weights.tobytes())
            h.update((self.coords if self.coords is not None else self._matrix).tobytes())
            self._cache["digest"] = h.hexdigest()[:24]
        return self._cache["digest"]

    def cached(self, key, factory):
        """Memoize a derived quantity on this (immutable) space."""
        value = self._cache.get(key)
        if value is None:
            value = factory()
            self._cache[key] = value
        return value

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    # -- validation ----------------------------------------------------

    def validate(self, sample_above: int = 512, samples: int = 200_000, seed: int = 0):
        """Check metric axioms; full triangle check for n <= ``sample_above``."""
        n = self.n
        if self._matrix is not None:
            M = self._matrix
            if not np.all(np.isfinite(M)):
                raise ValidationError("metric matrix must be finite")
            if np.any(np.diag(M) != 0):
                raise ValidationError("metric must vanish on the diagonal")
            if not np.array_equal(M, M.T):
                i, j = np.argwhere(M != M.T)[0]
                raise ValidationError(f"metric not symmetric at ({i},{j})")
            off = M[~np.eye(n, dtype=bool)]
            if off.size and off.min() <= 0:
                i, j = np.argwhere((M <= 0) & ~np.eye(n, dtype=bool))[0]
                raise ValidationError(f"distance between distinct points {i},{j} must be positive")
        elif n >= 2 and self.min_dist <= 0:
            raise ValidationError("coords contain duplicate points")
        if n < 3:
            return
        if n <= sample_above:
            D = self.full_dist() if n <= FULL_MATRIX_LIMIT else self.dist()
            for k in range(n):
                slack = D[:, k][:, None] + D[k, :][None, :] - D
                tol = TIE_RTOL * (D + 1e-300) * 4
                bad = slack < -tol
                if bad.any():
                    i, j = np.argwhere(bad)[0]
                    raise ValidationError(
                        f"triangle inequality fails for triple ({i},{k},{j}): "
                        f"d({i},{j})={float(D[i, j])!r} > d({i},{k})+d({k},{j})={float(D[i, k] + D[k, j])!r}")
        else:
            rng = np.random.default_rng(seed)
            for _ in range(max(1, samples // 4096)):
                t = rng.integers(0, n, size=(4096, 3))
                a, b, c = t[:, 0], t[:, 1], t[:, 2]
                dab = np.array([self.metric(i, j) for i, j in zip(a, b)]) if self.coords is None \
                    else np.linalg.norm(self.coords[a] - self.coords[b], axis=1)
                dac = np.array([self.metric(i, j) for i, j in zip(a, c)]) if self.coords is None \
                    else np.linalg.norm(self.coords[a] - self.coords[c], axis=1)
                dcb = np.array([self.metric(i, j) for i, j in zip(c, b)]) if self.coords is None \
                    else np.linalg.norm(self.coords[c] - self.coords[b], axis=1)
                bad = dab > (dac + dcb) * (1 + 4 * TIE_RTOL)
                if bad.any():
                    k = int(np.flatnonzero(bad)[0])
                    raise ValidationError(
                        f"triangle inequality fails for triple ({a[k]},{c[k]},{b[k]})")

    def __repr__(self):
        return f"MetricMeasureSpace(n={self.n}, kind={self.kind}, mass={self.total_mass:.6g})"


def _as_mask(space: MetricMeasureSpace, s) -> np.ndarray:
    if isinstance(s, PointSet):
        if s.n != space.n:
            raise PreconditionError("point set belongs to a different space")
        return s.mask
    s = np.asarray(s)
    if s.dtype == bool:
        return s
    return PointSet.from_indices(space.n, s).mask


def _check_point(space: MetricMeasureSpace, x) -> int:
    x = int(x)
    if not 0 <= x < space.n:
        raise PreconditionError(f"point index {x} out of range [0,{space.n})")
    return x


def within(d, r, closed: bool):
    """Tie-tolerant ball membership test for distances ``d`` and radius ``r``."""
    if closed:
        return d <= r * (1 + TIE_RTOL)
    return d < r * (1 - TIE_RTOL)


def ball_points(space: MetricMeasureSpace, ball: BallSpec) -> PointSet:
    c = _check_point(space, ball.center)
    mask = within(space.dist_row(c), ball.radius, ball.closed)
    mask[c] = True
    return PointSet(mask)


def ball_mass(space: MetricMeasureSpace, center: int, radius: float, closed=False) -> float:
    return space.mass(ball_points(space, BallSpec(center, radius, closed)))


def dist_to_set(space: MetricMeasureSpace, x: int, E) -> float:
    mask = _as_mask(space, E)
    if not mask.any():
        raise PreconditionError("distance to the empty set is undefined")
    x = _check_point(space, x)
    if mask[x]:
        return 0.0
    return float(space.dist([x], np.flatnonzero(mask))[0].min())


def dist_to_set_all(space: MetricMeasureSpace, E, rows=None) -> np.ndarray:
    """dist(x, E) for every x in ``rows`` (default all points)."""
    mask = _as_mask(space, E)
    if not mask.any():
        raise PreconditionError("distance to the empty set is undefined")
    rows = np.arange(space.n) if rows is None else np.asarray(rows)
    cols = np.flatnonzero(mask)
    out = np.empty(rows.size)
    for start in range(0, rows.size, 1024):
        r = rows[start:start + 1024]
        out[start:start + 1024] = space.dist(r, cols).min(axis=1)
    out[mask[rows]] = 0.0
    return out


def set_diam(space: MetricMeasureSpace, E) -> float:
    idx = np.flatnonzero(_as_mask(space, E))
    if idx.size < 2:
        return 0.0
    return float(space.dist(idx, idx).max())


def merge_ties(values: np.ndarray) -> np.ndarray:
    """Sorted unique values, merging runs that agree within TIE_RTOL."""
    v = np.unique(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        return v
    out = [v[0]]
    for val in v[1:]:
        if val > out[-1] * (1 + TIE_RTOL):
            out.append(val)
    return np.array(out)


def unique_distances(space: MetricMeasureSpace) -> np.ndarray:
    if space.n < 2:
        raise PreconditionError("unique_distances needs n >= 2")

    def build():
        vals = []
        for start in range(0, space.n, 512):
            rows = np.arange(start, min(start + 512, space.n))
            block = space.dist(rows)
            iu = block[np.arange(rows.size)[:, None] < (np.arange(space.n)[None, :] - start)]
            vals.append(np.unique(iu))
        out = merge_ties(np.concatenate(vals))
        out.setflags(write=False)
        return out

    return space.cached("unique_distances", build)


def open_ball_masses(space: MetricMeasureSpace, rows, cols) -> np.ndarray:
    """M[i, j] = mu(B(rows[i], d(rows[i], cols[j]))) with open balls."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if space.n <= FULL_MATRIX_LIMIT and rows.size * 4 >= space.n:
        full = _full_open_ball_masses(space)
        return full[np.ix_(rows, cols)]
    out = np.empty((rows.size, cols.size))
    w = space.weights
    for i, x in enumerate(rows):
        row = space.dist_row(x)
        order = np.argsort(row, kind="stable")
        sd = row[order]
        cw = np.concatenate(([0.0], np.cumsum(w[order])))
        thr = row[cols] * (1 - TIE_RTOL)
        out[i] = cw[np.searchsorted(sd, thr, side="left")]
    return out


def _full_open_ball_masses(space: MetricMeasureSpace) -> np.ndarray:
    def build():
        D = space.full_dist()
        n = space.n
        w = space.weights
        M = np.empty((n, n))
        for x in range(n):
            row = D[x]
            order = np.argsort(row, kind="stable")
            sd = row[order]
            cw = np.concatenate(([0.0], np.cumsum(w[order])))
            M[x] = cw[np.searchsorted(sd, row * (1 - TIE_RTOL), side="left")]
        M.setflags(write=False)
        return M

    return space.cached("open_ball_masses", build)


def dyadic_radii(lo: float, hi: float, include_hi=False) -> list[float]:
    """Powers of two in [lo, hi) (or [lo, hi]), descending."""
    out = []
    k = math.floor(-math.log2(hi))
    while True:
        r = 2.0 ** (-k)
        if r < lo * (1 - TIE_RTOL):
            break
        if r < hi * (1 - TIE_RTOL) or (include_hi and r <= hi * (1 + TIE_RTOL)):
            out.append(r)
        k += 1
    return out


# -- doubling profile ----------------------------------------------------


@dataclass(frozen=True)
class MetricSpaceProfile:
    c_mu: float
    Q: float
    c_Q: float
    sigma: float | None
    c_sigma: float | None
    kappa: float | None
    c_R: float | None
    diam: float
    n0: int


def _scale_index_n0(diam: float) -> int:
    # smallest integer n0 with 2^{-n0} <= 2 diam
    n0 = math.ceil(-math.log2(2 * diam))
    while 2.0 ** (-(n0 - 1)) <= 2 * diam:
        n0 -= 1
    while 2.0 ** (-n0) > 2 * diam:
        n0 += 1
    return n0


def doubling_profile(space: MetricMeasureSpace, radii: Sequence[float],
                     centers=None) -> MetricSpaceProfile:
    """Empirical doubling and reverse-doubling constants over sampled balls.

    ``c_mu`` is the largest observed mu(2B)/mu(B). The exponent pairs are the
    tightest envelopes of the sampled ball-mass ratios with the constant held
    at its iteration bound (c_Q >= c_mu^-2, c_sigma <= 1/c_R).
    """
    radii = sorted(set(float(r) for r in radii))
    if not radii:
        raise PreconditionError("doubling_profile needs at least one radius")
    if space.n < 2:
        raise PreconditionError("doubling_profile needs n >= 2")
    diam = space.diam
    if radii[0] <= 0 or radii[-1] > diam * (1 + TIE_RTOL):
        raise PreconditionError("radii must lie in (0, diam]")
    centers = np.arange(space.n) if centers is None else np.asarray(centers)
    w = space.weights
    probe = sorted(set(radii) | {2 * r for r in radii} | {r / 2 for r in radii} | {2 * diam})
    col = {r: k for k, r in enumerate(probe)}
    # table[y, k] = mu(B(y, probe[k])), open balls
    table = np.empty((space.n, len(probe)))
    for y in range(space.n):
        row = space.dist_row(y)
        srt = np.sort(row)
        cw = np.concatenate(([0.0], np.cumsum(w[np.argsort(row, kind="stable")])))
        idx = np.searchsorted(srt, np.array(probe) * (1 - TIE_RTOL), side="left")
        table[y] = np.maximum(cw[idx], w[y])

    ix = [col[r] for r in radii]
    ix2 = [col[2 * r] for r in radii]
    c_mu = max(1.0, float((table[np.ix_(centers, ix2)] / table[np.ix_(centers, ix)]).max()))
    small = [r for r in radii if r < diam / 2]
    c_R = 0.0
    if small:
        c_R = float((table[np.ix_(centers, [col[r / 2] for r in small])]
                     / table[np.ix_(centers, [col[r] for r in small])]).max())

    # quantitative doubling: c_Q (r/R)^Q <= mu(B(y,r)) / mu(B(x,R)) for y in B(x,R)
    c_floor = c_mu ** -2
    samples = []
    for x in centers:
        row = space.dist_row(x)
        for R in radii:
            inside = within(row, R, False)
            inside[x] = True
            big = table[x, col[R]]
            for r in radii:
                if r >= R:
                    break
                samples.append((math.log(R / r), float(table[inside, col[r]].min() / big)))
    Q = 1e-12
    for s, ratio in samples:
        Q = max(Q, (math.log(c_floor) - math.log(ratio)) / s)
    c_Q = min([ratio * math.exp(Q * s) for s, ratio in samples], default=1.0)

    sigma = c_sigma = kappa = c_Rout = None
    if 0 < c_R < 1:
        kappa, c_Rout = 0.5, c_R
        c_ceil = 1.0 / c_R
        rev = []
        for R in radii + [2 * diam]:
            for r in radii:
                if r < R:
                    ratios = table[centers, col[r]] / table[centers, col[R]]
                    rev.append((math.log(R / r), float(ratios.max())))
        if rev:
            sigma = min((math.log(c_ceil) - math.log(ratio)) / s for s, ratio in rev)
            if sigma > 0:
                c_sigma = max(ratio * math.exp(sigma * s) for s, ratio in rev)
            else:
                sigma = None
    return MetricSpaceProfile(c_mu=c_mu, Q=Q, c_Q=c_Q, sigma=sigma, c_sigma=c_sigma,
                              kappa=kappa, c_R=c_Rout, diam=diam, n0=_scale_index_n0(diam))
