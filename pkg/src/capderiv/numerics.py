"""Dense symmetric solves and certified energy minimization on the simplex."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .lattice import FiniteSet

COND_LIMIT = 1e13
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class WeightVector:
    base: FiniteSet | None
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.base is not None and len(w) != len(self.base):
            raise ValueError(f"{len(w)} weights for a set of {len(self.base)} points")
        object.__setattr__(self, "weights", w)

    def total(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, i):
        return self.weights[i]


@dataclass(frozen=True)
class QpCertificate:
    """``energy`` is attained by the returned weights; the minimum lies in
    ``[energy - duality_gap, energy]``."""

    energy: float
    duality_gap: float
    iterations: int

    @property
    def lower(self) -> float:
        return self.energy - self.duality_gap


def solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M v = rhs for symmetric M with a Bunch-Kaufman factorization.

    Raises NumericalError (carrying the condition estimate) when M is
    numerically singular or the residual misses 1e-10 * ||rhs||_inf.
    """
    M = np.asarray(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] != rhs.shape[0]:
        raise ValueError(f"shape mismatch: {M.shape} vs {rhs.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-14 * np.abs(M).max()):
        raise ValueError("matrix is not symmetric")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalError(f"matrix is ill-conditioned (cond ~ {cond:.3g})", condition=cond)
    v = linalg.solve(M, rhs, assume_a="sym")
    r = rhs - M @ v
    v = v + linalg.solve(M, r, assume_a="sym")  # one step of refinement
    res = np.abs(M @ v - rhs).max()
    if res > 1e-10 * max(np.abs(rhs).max(), 1e-300):
        raise NumericalError(f"residual {res:.3g} too large", condition=cond)
    return v


def _gap(E: float, q: np.ndarray) -> float:
    guard = 8 * len(q) * _EPS * (abs(E) + np.abs(q).max())
    return max(2.0 * (E - q.min()), 0.0) + guard


def _polish(M, mu):
    """Solve the KKT system on the current support; None if it leaves the simplex."""
    S = np.flatnonzero(mu > 0)
    try:
        w = linalg.solve(M[np.ix_(S, S)], np.ones(len(S)), assume_a="sym")
    except (linalg.LinAlgError, ValueError):
        return None
    if not np.all(w > 0):
        return None
    nu = np.zeros_like(mu)
    nu[S] = w / w.sum()
    return nu


def min_energy_simplex(M: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000,
                       base: FiniteSet | None = None, polish_every: int = 25):
    """Minimize mu^T M mu over probability vectors with away-step Frank-Wolfe.

    Starts from the uniform vector; linear-minimization ties go to the lowest
    index. Every ``polish_every`` iterations the support's KKT system is
    solved and the result kept if it certifies a smaller gap.

    Returns ``(WeightVector, QpCertificate)`` with ``duality_gap <= tol``.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    mu = np.full(n, 1.0 / n)
    q = M @ mu
    E = float(mu @ q)
    gap = _gap(E, q)
    it = 0
    while gap > tol:
        if it >= max_iter:
            raise NumericalError(
                f"Frank-Wolfe stopped after {it} iterations with gap {gap:.3g} > {tol:.3g}",
                best=(WeightVector(base, mu), QpCertificate(E, gap, it)),
            )
        it += 1
        s = int(np.argmin(q))
        supp = np.flatnonzero(mu > 0)
        a = int(supp[np.argmax(q[supp])])
        if E - q[s] >= q[a] - E:
            slope = q[s] - E
            curv = M[s, s] - 2.0 * q[s] + E
            gmax = 1.0
            step = 1.0 if curv <= 0 else min(-slope / curv, gmax)
            mu *= 1.0 - step
            mu[s] += step
            q = q + step * (M[:, s] - q)
        else:
            slope = E - q[a]
            curv = E - 2.0 * q[a] + M[a, a]
            gmax = mu[a] / (1.0 - mu[a]) if mu[a] < 1.0 else np.inf
            step = gmax if curv <= 0 else min(-slope / curv, gmax)
            mu *= 1.0 + step
            mu[a] -= step
            if step == gmax:
                mu[a] = 0.0
            q = q + step * (q - M[:, a])
        np.clip(mu, 0.0, None, out=mu)
        mu /= mu.sum()
        if it % 50 == 0:
            q = M @ mu
        E = float(mu @ q)
        gap = _gap(E, q)
        if polish_every and it % polish_every == 0 and gap > tol:
            nu = _polish(M, mu)
            if nu is not None:
                qn = M @ nu
                En = float(nu @ qn)
                gn = _gap(En, qn)
                if gn < gap:
                    mu, q, E, gap = nu, qn, En, gn
        if gap <= tol:
            # incremental updates drift; confirm on a fresh product
            q = M @ mu
            E = float(mu @ q)
            gap = _gap(E, q)
    return WeightVector(base, mu), QpCertificate(E, gap, it)
