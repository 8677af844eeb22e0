"""Bessel-Riesz capacities with certified brackets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import green
from .errors import ConfigError, DomainError, NumericalError
from .lattice import FiniteSet, min_distance, translate
from .numerics import WeightVector, min_energy_simplex
from .sweep import SweepRecord

FEASIBILITY_MARGIN = 1e-12
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class RieszResult:
    base: FiniteSet
    alpha: float
    mu: WeightVector
    capacity_lower: float
    capacity_upper: float

    @property
    def capacity(self) -> float:
        return 0.5 * (self.capacity_lower + self.capacity_upper)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.capacity_upper - self.capacity_lower)

    @property
    def phi(self) -> np.ndarray:
        """Equilibrium function Cap_alpha(A) * mu."""
        return self.capacity * self.mu.weights


def _check_alpha(d: int, alpha: float) -> None:
    if not 0 < alpha < d:
        raise DomainError(f"alpha must lie in (0, {d}), got {alpha}")


def kernel_matrix(S: FiniteSet, alpha: float) -> np.ndarray:
    return green.green_matrix(S, green.riesz(S.dimension, alpha))


def _gram(pts: np.ndarray, alpha: float) -> np.ndarray:
    r = np.sqrt(((pts[None, :, :] - pts[:, None, :]).astype(float) ** 2).sum(-1))
    return (1.0 + r) ** (-alpha)


def capacity_alpha(A: FiniteSet, alpha: float, tol: float = DEFAULT_TOL) -> RieszResult:
    """Cap_alpha(A) = 1 / min energy over probability measures on A.

    The returned bracket [1/E, 1/(E - gap)] has relative width at most tol.
    """
    _check_alpha(A.dimension, alpha)
    if len(A) == 0:
        raise ConfigError("capacity of the empty set")
    if tol <= 0:
        raise ConfigError("tol must be positive")
    M = kernel_matrix(A, alpha)
    # energy >= sum mu_i^2 >= 1/n, so this gap keeps gap/(E - gap) below tol
    gap_tol = tol / (len(A) * (1.0 + tol))
    mu, cert = min_energy_simplex(M, gap_tol, base=A)
    lo = 1.0 / cert.energy
    hi = 1.0 / cert.lower if cert.lower > 0 else np.inf
    return RieszResult(A, float(alpha), mu, lo, hi)


def equilibrium_function_check(result: RieszResult, tol: float | None = None) -> float:
    """max over x in A of |(g_alpha * phi)(x) - 1| with phi = Cap_alpha(A) mu.

    Points outside the support of mu may sit strictly above 1; the deviation
    then reflects the set, not the solver. With ``tol`` the check raises
    NumericalError when the deviation exceeds it.
    """
    M = kernel_matrix(result.base, result.alpha)
    dev = float(np.abs(M @ result.phi - 1.0).max())
    if tol is not None and dev > tol:
        raise NumericalError(f"equilibrium deviation {dev:.3g} exceeds {tol:.3g}", best=dev)
    return dev


@dataclass(frozen=True)
class UnionBounds:
    lower: float
    upper: float | None
    violated_point: tuple[int, ...] | None = None
    a: float = float("nan")
    b: float = float("nan")

    def __iter__(self):
        return iter((self.lower, self.upper))


def union_bounds(A: FiniteSet, B: FiniteSet, z, alpha: float, eps_slack: float = 0.1,
                 tol: float = DEFAULT_TOL) -> UnionBounds:
    """Certified lower and upper bounds on Cap_alpha(A u (z+B)) built from the
    equilibrium functions of A and B.

    lower: 1/energy of phi_A + phi_B(. - z), normalized to a probability.
    upper: total mass of psi = a phi_A + b phi_B(. - z), with
    a = 1 - (1-eps) g(z) Cap(B), b = 1 - (1-eps) g(z) Cap(A), provided
    g * psi >= 1 on the union (checked pointwise); otherwise None together
    with the first violating point.
    """
    if not 0 < eps_slack < 1:
        raise ConfigError("eps_slack must lie in (0, 1)")
    _check_alpha(A.dimension, alpha)
    Bz = translate(B, z)
    if min_distance(A, Bz) == 0:
        raise ConfigError("A and z + B overlap")
    ra, rb = capacity_alpha(A, alpha, tol), capacity_alpha(B, alpha, tol)
    pa, pb = ra.phi, rb.phi
    gz = green.riesz_kernel(getattr(z, "coords", z), alpha)
    pts = np.vstack([A.points, Bz.points])
    M = _gram(pts, alpha)
    phi = np.concatenate([pa, pb])
    mu = phi / phi.sum()
    lower = 1.0 / float(mu @ M @ mu)
    a = 1.0 - (1.0 - eps_slack) * gz * ra.capacity
    b = 1.0 - (1.0 - eps_slack) * gz * rb.capacity
    psi = np.concatenate([a * pa, b * pb])
    conv = M @ psi
    bad = np.flatnonzero(conv < 1.0 - FEASIBILITY_MARGIN)
    if len(bad):
        return UnionBounds(lower, None, tuple(int(v) for v in pts[bad[0]]), a, b)
    return UnionBounds(lower, float(psi.sum()), None, a, b)


def derivative_sweep_riesz(A: FiniteSet, B: FiniteSet, direction, radii, alpha: float,
                           tol: float = DEFAULT_TOL):
    """ratio = [Cap(A) + Cap(B) - Cap(A u (z+B))] / g_alpha(z) per radius,
    target 2 Cap(A) Cap(B); errors are the propagated bracket half-widths."""
    dvec = np.asarray(getattr(direction, "coords", direction), dtype=np.int64)
    if not dvec.any():
        raise ConfigError("direction must be nonzero")
    _check_alpha(A.dimension, alpha)
    ra, rb = capacity_alpha(A, alpha, tol), capacity_alpha(B, alpha, tol)
    ca, cb = ra.capacity, rb.capacity
    target = 2.0 * ca * cb
    target_err = 2.0 * (ra.half_width * cb + rb.half_width * ca)
    out = []
    for r in radii:
        z = tuple(int(v) for v in r * dvec)
        gz = green.riesz_kernel(z, alpha)
        Bz = translate(B, z)
        if min_distance(A, Bz) == 0:
            nan = float("nan")
            out.append(SweepRecord(int(r), z, ca, ra.half_width, cb, rb.half_width, nan, nan, gz, nan, nan,
                                   target, target_err, flags=("overlap",)))
            continue
        ru = capacity_alpha(A.union(Bz), alpha, tol)
        ratio = (ca + cb - ru.capacity) / gz
        err = (ra.half_width + rb.half_width + ru.half_width) / gz
        out.append(SweepRecord(int(r), z, ca, ra.half_width, cb, rb.half_width, ru.capacity, ru.half_width,
                               gz, ratio, err, target, target_err))
    return out
