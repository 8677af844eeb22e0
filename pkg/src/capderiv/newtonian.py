"""Newtonian (random-walk) capacity through equilibrium measures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import green
from .errors import ConfigError, DomainError, NumericalError
from .lattice import FiniteSet, min_distance, translate
from .numerics import WeightVector, solve_spd
from .sweep import SweepRecord

NEGATIVE_WEIGHT_TOL = 1e-8


@dataclass(frozen=True)
class EquilibriumResult:
    base: FiniteSet
    measure: WeightVector
    capacity: float


def _kernel(d: int, tol: float) -> green.Kernel:
    if d < 3:
        raise DomainError(f"Newtonian capacity needs d >= 3, got d={d}")
    return green.srw_kernel(d, min(tol, 1e-11))


def cross_green(X: FiniteSet, Y: FiniteSet, tol: float = 1e-11) -> np.ndarray:
    """K[i, j] = g(y_j - x_i)."""
    k = _kernel(X.dimension, tol)
    diff = Y.points[None, :, :] - X.points[:, None, :]
    K = np.empty(diff.shape[:2])
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            K[i, j] = k(diff[i, j])
    return K


def equilibrium_measure(A: FiniteSet, tol: float = 1e-11) -> EquilibriumResult:
    """Solve sum_y g(x - y) e_A(y) = 1 on A (last-exit decomposition).

    e_A(x) is the escape probability P_x(H_A^+ = inf); its total mass is Cap(A).
    """
    M = green.green_matrix(A, _kernel(A.dimension, tol))
    e = solve_spd(M, np.ones(len(A)))
    if e.min() < -NEGATIVE_WEIGHT_TOL:
        raise NumericalError(f"negative equilibrium weight {e.min():.3g}; kernel values inaccurate")
    return EquilibriumResult(A, WeightVector(A, e), float(e.sum()))


def capacity(A: FiniteSet, tol: float = 1e-11) -> float:
    return equilibrium_measure(A, tol).capacity


def cross_term(A: FiniteSet, B: FiniteSet, tol: float = 1e-11) -> float:
    """chi(A, B) = sum_{x in A, y in B} e_{A u B}(x) g(y - x) e_B(y)."""
    U = A.union(B)
    eu = equilibrium_measure(U, tol).measure.weights
    eu_A = eu[[U.index_of(p) for p in A.points]]
    eb = equilibrium_measure(B, tol).measure.weights
    return float(eu_A @ cross_green(A, B, tol) @ eb)


def union_capacity_identity_check(A: FiniteSet, B: FiniteSet, tol: float = 1e-11):
    """Return (lhs, rhs, residual) for Cap(A u B) = Cap(A) + Cap(B) - chi(A,B) - chi(B,A)."""
    if min_distance(A, B) == 0:
        raise ConfigError("sets must be disjoint")
    lhs = capacity(A.union(B), tol)
    rhs = capacity(A, tol) + capacity(B, tol) - cross_term(A, B, tol) - cross_term(B, A, tol)
    return lhs, rhs, abs(lhs - rhs)


def derivative_sweep_newton(A: FiniteSet, B: FiniteSet, direction, radii, tol: float = 1e-11):
    """One record per radius r with z = r * direction:
    ratio = [Cap(A) + Cap(B) - Cap(A u (z+B))] / g(z), target = 2 Cap(A) Cap(B).
    """
    dvec = np.asarray(getattr(direction, "coords", direction), dtype=np.int64)
    if not dvec.any():
        raise ConfigError("direction must be nonzero")
    d = A.dimension
    k = _kernel(d, tol)
    ca, cb = capacity(A, tol), capacity(B, tol)
    target = 2.0 * ca * cb
    out = []
    for r in radii:
        z = tuple(int(v) for v in r * dvec)
        Bz = translate(B, z)
        gz = k(z)
        if min_distance(A, Bz) == 0:
            nan = float("nan")
            out.append(SweepRecord(int(r), z, ca, 0.0, cb, 0.0, nan, nan, gz, nan, nan, target, 0.0,
                                   flags=("overlap",)))
            continue
        cu = capacity(A.union(Bz), tol)
        ratio = (ca + cb - cu) / gz
        out.append(SweepRecord(int(r), z, ca, 0.0, cb, 0.0, cu, 0.0, gz, ratio, 0.0, target, 0.0))
    return out


@dataclass(frozen=True)
class EscapeEstimate:
    estimate: float
    stderr: float
    bias_bound: float
    n: int


def mc_escape_probability(x, A: FiniteSet, R: float, N: int, seed: int) -> EscapeEstimate:
    """Monte Carlo estimate of P_x(H_A^+ = inf) with exit from B(0, R) counted as escape.

    ``bias_bound`` bounds the probability of returning to A after the exit:
    sum_{a in A} g(y - a) for y at distance R - rad(A) from A.
    """
    from .branching import kernels

    xc = np.asarray(getattr(x, "coords", x), dtype=np.int64)
    if tuple(xc) not in {tuple(p) for p in A.points}:
        raise ConfigError("x must belong to A")
    d = A.dimension
    rad = float(np.sqrt((A.points ** 2).sum(1).max()))
    if R <= rad + 1:
        raise ConfigError("R must exceed the radius of A")
    from .branching.rng import stream_seed

    keys, _, lo, hi = kernels.target_table(A.points)
    escapes = kernels.srw_escape_block(stream_seed(seed, 0, 0, 0), int(N), xc, keys, lo, hi, float(R) ** 2)
    p = escapes / N
    se = float(np.sqrt(max(p * (1 - p), 0.0) / N))
    dist = max(R - rad, 1.0)
    bias = len(A) * green.srw_green((int(np.ceil(dist)),) + (0,) * (d - 1))
    return EscapeEstimate(float(p), se, float(min(bias, 1.0)), int(N))
