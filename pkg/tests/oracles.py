"""Independent brute-force oracles shared by the test modules."""
import itertools

import numpy as np
from scipy import stats

from capderiv.lattice import FiniteSet


def riesz_gram(points, alpha):
    P = np.asarray(points, dtype=float)
    r = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    return (1.0 + r) ** (-alpha)


def _simplex_grid(center, half, k, n):
    """Points of a k-per-axis grid on the free coordinates w_1..w_{n-1} within
    [center - half, center + half], kept inside the simplex."""
    axes = [np.linspace(max(0.0, c - half), min(1.0, c + half), k) for c in center[:-1]]
    W = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n - 1)
    last = 1.0 - W.sum(1)
    keep = last >= 0
    return np.hstack([W[keep], last[keep, None]])


def grid_min_energy(M, coarse=41, fine=21, stages=12):
    """Minimum of w^T M w over the probability simplex by grid search.

    A uniform grid of spacing 1/(coarse - 1) is followed by zoomed grids around
    the current best point, each 10 times finer. The objective is a convex
    quadratic, so the zoom cannot get trapped; after the last stage the grid
    spacing is far below the scale where the energy changes in double
    precision. Faces of the simplex are on every grid (w_i = 0 is a grid
    value), so optima on the boundary are reached too.
    """
    n = M.shape[0]
    if n == 1:
        return float(M[0, 0]), np.ones(1)
    W = _simplex_grid(np.full(n, 0.5), 0.5, coarse, n)
    E = np.einsum("ni,ij,nj->n", W, M, W)
    best = W[np.argmin(E)]
    Ebest = float(E.min())
    half = 2.0 / (coarse - 1)
    for _ in range(stages):
        W = _simplex_grid(best, half, fine, n)
        E = np.einsum("ni,ij,nj->n", W, M, W)
        if E.min() <= Ebest:
            best, Ebest = W[np.argmin(E)], float(E.min())
        half /= 10.0
    return Ebest, best


def riesz_catalog():
    """25 sets with at most four points, mixed dimensions and exponents."""
    out = []
    for d, alpha in ((3, 1.0), (5, 2.0)):
        z = (0,) * d

        def p(*c):
            return tuple(c) + (0,) * (d - len(c))

        out.append((FiniteSet([z]), alpha))
        out.append((FiniteSet([z, p(1)]), alpha))
        out.append((FiniteSet([z, p(3, 4)]), alpha))
        out.append((FiniteSet([z, p(1), p(2)]), alpha))
        out.append((FiniteSet([z, p(1), p(0, 1)]), alpha))
        out.append((FiniteSet([z, p(5), p(0, 2)]), alpha))
        out.append((FiniteSet([z, p(1), p(2), p(3)]), alpha))
        out.append((FiniteSet([z, p(1), p(0, 1), p(1, 1)]), alpha))
        out.append((FiniteSet([z, p(1), p(0, 1), p(0, 0, 1)]), alpha))
        out.append((FiniteSet([z, p(1), p(7), p(3, 3)]), alpha))
    # asymmetric sets at further exponents
    rng = np.random.default_rng(2024)
    for alpha in (0.5, 1.5):
        for size in (3, 4):
            pts = set()
            while len(pts) < size:
                pts.add(tuple(int(v) for v in rng.integers(-3, 4, size=3)))
            out.append((FiniteSet(sorted(pts)), alpha))
    out.append((FiniteSet([(0, 0, 0, 0, 0), (1, 2, 0, 0, 0), (4, 0, 1, 0, 0), (2, 2, 2, 2, 2)]), 4.5))
    assert len(out) == 25 and all(len(S) <= 4 for S, _ in out)
    return out


def all_subsets(points):
    for k in range(1, len(points) + 1):
        yield from itertools.combinations(points, k)


def chi2_pvalue(counts, probs):
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)[: len(counts)]
    n = counts.sum()
    exp = n * probs
    # pool the tail cells until every expected count is at least 5
    keep = np.flatnonzero(exp >= 5)
    last = keep[-1]
    obs = np.append(counts[: last], counts[last:].sum())
    ex = np.append(exp[: last], exp[last:].sum())
    obs, ex = obs[ex > 0], ex[ex > 0]
    return stats.chisquare(obs, ex * obs.sum() / ex.sum()).pvalue
