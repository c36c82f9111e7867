import itertools

import numpy as np
import pytest

from fraccap.space import MetricMeasureSpace


def line(positions, weights=None):
    positions = np.asarray(positions, dtype=float)
    w = np.ones(positions.size) if weights is None else weights
    return MetricMeasureSpace(w, coords=positions[:, None])


def unit_lattice(m):
    """m x m lattice with unit spacing and unit weights."""
    pts = np.array(list(itertools.product(range(m), range(m))), dtype=float)
    return MetricMeasureSpace(np.ones(m * m), coords=pts)


def brute_G(S, u, beta, q, A, x):
    """Direct double loop over A with the open-ball mass computed per pair."""
    D = S.full_dist()
    total = 0.0
    for y in A:
        if y == x:
            continue
        d = D[x, y]
        mass = sum(S.weights[z] for z in range(S.n) if D[x, z] < d)
        total += abs(u[x] - u[y]) ** q / (d ** (beta * q) * mass) * S.weights[y]
    return total ** (1 / q)


@pytest.fixture
def two_point():
    return line([0.0, 1.0])


@pytest.fixture
def path3():
    return line([0.0, 1.0, 2.0])
