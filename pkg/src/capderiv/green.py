"""Lattice kernels: SRW Green's function, Bessel-Riesz kernel, and the
Green's function of the past of the invariant branching tree.

Both random-walk kernels come from the continuous-time representation

    sum_n (n + 1)^k P(S_n = x) ~ int_0^inf t^k prod_i e^{-t/d} I_{x_i}(t/d) dt,

with ``k = 0`` giving g exactly and ``k = 1`` giving sum_n (n + 1) P(S_n = x).
The integral is split into [0, 1], [1, T] (integrated in log t) and an
analytic tail from the large-argument expansion of the scaled Bessel
functions.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, sparse
from scipy.sparse import linalg as splinalg
from scipy.special import gamma, ive

from .errors import DomainError, NumericalError
from .lattice import FiniteSet

_TAIL_TERMS = 14
_cache: dict = {}
_cache_lock = threading.Lock()


def _coords(x) -> tuple[int, ...]:
    return tuple(int(v) for v in getattr(x, "coords", x))


def _canonical(x) -> tuple[int, ...]:
    # SRW kernels are invariant under coordinate sign flips and permutations.
    return tuple(sorted(abs(v) for v in _coords(x)))


def _bessel_tail_coeffs(n: int, terms: int) -> np.ndarray:
    # ive(n, y) ~ (2 pi y)^{-1/2} sum_k c_k y^{-k}
    c = np.empty(terms + 1)
    c[0] = 1.0
    mu = 4.0 * n * n
    for k in range(1, terms + 1):
        c[k] = -c[k - 1] * (mu - (2 * k - 1) ** 2) / (8.0 * k)
    return c


def _time_moment(x: tuple[int, ...], power: int, rtol: float) -> float:
    d = len(x)
    xa = np.array(x, dtype=float)
    n2 = max(max(v * v for v in x), 1)
    T = max(400.0, 80.0 * n2 * d)

    def f(t):
        return float(np.prod(ive(xa, t / d))) * t ** power

    eps = max(rtol / 20.0, 1e-14)
    head, e1 = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=eps, limit=200)
    mid, e2 = integrate.quad(lambda s: f(math.exp(s)) * math.exp(s), 0.0, math.log(T),
                             epsabs=0.0, epsrel=eps, limit=800)
    poly = np.array([1.0])
    for n in x:
        poly = np.convolve(poly, _bessel_tail_coeffs(n, _TAIL_TERMS))[: _TAIL_TERMS + 1]
    pref = (d / (2.0 * math.pi)) ** (d / 2.0)
    tail = 0.0
    last = 0.0
    for k, ck in enumerate(poly):
        e = d / 2.0 + k - power
        last = ck * pref * d ** k * T ** (1.0 - e) / (e - 1.0)
        tail += last
    total = head + mid + tail
    err = e1 + e2 + abs(last)
    if not np.isfinite(total) or err > rtol * abs(total):
        raise NumericalError(f"quadrature for x={x} did not reach rtol={rtol:g} (err {err:.2e})")
    return float(total)


def _cached(key, compute):
    with _cache_lock:
        if key in _cache:
            return _cache[key]
    val = compute()
    with _cache_lock:
        _cache.setdefault(key, val)
    return val


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


def srw_green(x, tol: float = 1e-11) -> float:
    """Green's function g(x) of simple random walk on Z^d, d >= 3."""
    c = _canonical(x)
    if len(c) < 3:
        raise DomainError(f"SRW Green's function needs d >= 3, got d={len(c)}")
    if not 0 < tol < 1:
        raise DomainError("tol must lie in (0, 1)")
    return _cached(("g", c), lambda: _time_moment(c, 0, min(tol, 1e-11)))


def _first_time_moment(x, tol: float) -> float:
    """sum_{n>=0} (n + 1) P(S_n = x); finite for d >= 5."""
    c = _canonical(x)
    return _cached(("m1", c), lambda: _time_moment(c, 1, min(tol, 1e-11)))


def riesz_kernel(x, alpha: float) -> float:
    c = _coords(x)
    d = len(c)
    if not 0 < alpha < d:
        raise DomainError(f"alpha must lie in (0, {d}), got {alpha}")
    return (1.0 + math.sqrt(sum(v * v for v in c))) ** (-alpha)


def brw_past_green(z, offspring, tol: float = 1e-10) -> float:
    """G(z): expected number of vertices of the past T_- sitting at z.

    The spine X_1, X_2, ... is a SRW started at 0 (the root X_0 is not in the
    past) and every spine vertex carries on average ``m = sum_i i mu~(i)``
    critical trees to its left, each rooted one step off the spine. With
    h = g - delta_0 this gives G = h + m (h * h), and
    (h * h)(z) = sum_{k>=2} (k - 1) P(S_k = z) = M1(z) - 2 g(z) + delta_0(z).
    """
    c = _canonical(z)
    d = len(c)
    if d < 5:
        raise DomainError(f"branching Green's function needs d >= 5, got d={d}")
    m = offspring.tilde_mean
    g = srw_green(c, tol)
    m1 = _first_time_moment(c, tol)
    delta = 1.0 if not any(c) else 0.0
    return (g - delta) + m * (m1 - 2.0 * g + delta)


@dataclass(frozen=True)
class GreenTables:
    """g and M1 on the box max|x_i| <= M, plus far-field fits beyond it.

    ``g_tab`` and ``m1_tab`` are indexed by sum_i |x_i| (M + 1)^i. Outside the
    box g ~ a_g r^{2-d} (1 + (b_g + c_g q) / r^2) with q = sum x_i^4 / r^4, and
    likewise M1 with r^{4-d}; the coefficients are fitted on exact values
    along several lattice directions at r in [10, 40].
    These feed sampling proposals and truncation corrections, never a
    capacity directly.
    """

    d: int
    M: int
    g_tab: np.ndarray
    m1_tab: np.ndarray
    coef: np.ndarray  # (a_g, b_g, c_g, a_m, b_m, c_m)


_tables: dict = {}


def green_tables(d: int, M: int | None = None) -> GreenTables:
    if d < 5:
        raise DomainError(f"tables need d >= 5, got d={d}")
    if M is None:
        M = 8 if d <= 6 else 5
    key = (d, M)
    with _cache_lock:
        if key in _tables:
            return _tables[key]
    import itertools

    size = (M + 1) ** d
    g_tab = np.empty(size)
    m1_tab = np.empty(size)
    weights = (M + 1) ** np.arange(d)
    for c in itertools.combinations_with_replacement(range(M + 1), d):
        g = srw_green(c)
        m1 = _first_time_moment(c, 1e-10)
        for perm in set(itertools.permutations(c)):
            i = int(np.dot(perm, weights))
            g_tab[i] = g
            m1_tab[i] = m1
    rows, vg, vm = [], [], []
    dirs = [[1], [1, 1], [1, 1, 1], [2, 1], [3, 2, 1], [1] * d]
    for dv in dirs:
        base = np.array(dv + [0] * (d - len(dv)), dtype=float)
        for t in (10, 14, 20, 28, 40):
            n = max(1, int(round(t / np.linalg.norm(base))))
            x = tuple(int(v) for v in base * n)
            r2 = float(sum(v * v for v in x))
            q = sum(v ** 4 for v in x) / r2 ** 2
            rows.append((1.0, 1.0 / r2, q / r2))
            vg.append(srw_green(x) * r2 ** ((d - 2) / 2))
            vm.append(_first_time_moment(x, 1e-10) * r2 ** ((d - 4) / 2))
    X = np.asarray(rows)
    cg, *_ = np.linalg.lstsq(X, np.asarray(vg), rcond=None)
    cm, *_ = np.linalg.lstsq(X, np.asarray(vm), rcond=None)
    coef = np.array([cg[0], cg[1] / cg[0], cg[2] / cg[0], cm[0], cm[1] / cm[0], cm[2] / cm[0]])
    out = GreenTables(d, M, g_tab, m1_tab, coef)
    with _cache_lock:
        _tables.setdefault(key, out)
    return _tables[key]


def srw_green_constant(d: int) -> float:
    """Exact far-field constant a_d with g(x) ~ a_d |x|^{2-d}."""
    return d * gamma(d / 2.0 - 1.0) / (2.0 * math.pi ** (d / 2.0))


def far_field_constant(kernel_fn: Callable[[tuple], float], d: int, exponent: float,
                       radii=(64, 128, 256)) -> float:
    """Estimate lim k(r e_1) r^{-exponent} by Richardson extrapolation in 1/r^2.

    Used for display and extrapolation only; capacities never depend on it.
    """
    vals = []
    for r in radii:
        x = (r,) + (0,) * (d - 1)
        vals.append(kernel_fn(x) * r ** (-exponent))
    r = np.asarray(radii, dtype=float)
    A = np.vstack([np.ones_like(r), r ** -2.0]).T
    coef, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
    return float(coef[0])


def box_green_oracle(x, d: int, L: int) -> float:
    """Green's function of SRW killed on leaving the box [-L, L]^d (sparse solve).

    Independent cross-check for ``srw_green``: it increases to g as L grows.
    """
    n = 2 * L + 1
    size = n ** d
    if size > 3_000_000:
        raise DomainError("box too large for the direct oracle")
    idx = np.arange(size).reshape((n,) * d)
    rows, cols = [], []
    for axis in range(d):
        for shift in (1, -1):
            src = np.moveaxis(idx, axis, 0)
            if shift == 1:
                a, b = src[:-1], src[1:]
            else:
                a, b = src[1:], src[:-1]
            rows.append(a.ravel())
            cols.append(b.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    P = sparse.csr_matrix((np.full(len(rows), 1.0 / (2 * d)), (rows, cols)), shape=(size, size))
    M = sparse.identity(size, format="csr") - P
    rhs = np.zeros(size)
    rhs[idx[(L,) * d]] = 1.0
    u = splinalg.spsolve(M.tocsc(), rhs)
    c = tuple(L + v for v in _coords(x))
    return float(u[idx[c]])  # symmetric: G_box(0, x) = G_box(x, 0)


@dataclass(frozen=True)
class Kernel:
    """Symmetric lattice kernel.

    ``kind`` is one of ``srw_green``, ``riesz``, ``brw_past_green``,
    ``asymptotic``.
    """

    kind: str
    dimension: int
    alpha: float | None = None
    offspring: object = None
    constant: float | None = None
    exponent: float | None = None
    tol: float = 1e-11
    _memo: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        d = self.dimension
        if self.kind == "srw_green":
            if d < 3:
                raise DomainError("srw_green needs d >= 3")
        elif self.kind == "riesz":
            if self.alpha is None or not 0 < self.alpha < d:
                raise DomainError(f"riesz kernel needs 0 < alpha < {d}")
        elif self.kind == "brw_past_green":
            if d < 5:
                raise DomainError("brw_past_green needs d >= 5")
            if self.offspring is None:
                raise DomainError("brw_past_green needs an offspring distribution")
        elif self.kind == "asymptotic":
            if self.constant is None or self.exponent is None or self.constant <= 0:
                raise DomainError("asymptotic kernel needs a positive constant and an exponent")
        else:
            raise DomainError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, x) -> float:
        c = _coords(x)
        if len(c) != self.dimension:
            raise DomainError(f"point of dimension {len(c)} for a d={self.dimension} kernel")
        if self.kind == "riesz":
            return riesz_kernel(c, self.alpha)
        if self.kind == "srw_green":
            return srw_green(c, self.tol)
        if self.kind == "brw_past_green":
            return brw_past_green(c, self.offspring, self.tol)
        r = math.sqrt(sum(v * v for v in c))
        if r == 0:
            raise DomainError("asymptotic kernel is undefined at the origin")
        return self.constant * r ** self.exponent


def srw_kernel(d: int, tol: float = 1e-11) -> Kernel:
    return Kernel("srw_green", d, tol=tol)


def riesz(d: int, alpha: float) -> Kernel:
    return Kernel("riesz", d, alpha=float(alpha))


def green_matrix(S: FiniteSet, k: Kernel) -> np.ndarray:
    """M[i, j] = k(x_j - x_i) over the canonical ordering of S."""
    pts = S.points
    n = len(pts)
    M = np.empty((n, n))
    diffs = pts[None, :, :] - pts[:, None, :]
    vals: dict = {}
    for i in range(n):
        M[i, i] = vals.setdefault(("0",), k((0,) * S.dimension))
        for j in range(i + 1, n):
            key = _canonical(diffs[i, j]) if k.kind != "riesz" else tuple(diffs[i, j])
            if key not in vals:
                vals[key] = k(diffs[i, j])
            M[i, j] = M[j, i] = vals[key]
    return M


def mc_past_green(z, offspring, N: int, R_trunc: float, seed: int, workers: int | None = None):
    """Monte Carlo estimate of G(z) from simulated pasts; see ``branching``."""
    from .branching.estimators import mc_past_green as _impl

    return _impl(z, offspring, N, R_trunc, seed, workers=workers)
