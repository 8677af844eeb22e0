"""Monte Carlo estimators for branching capacity and its derivative formula.

All estimators split their samples into fixed blocks of ``rng.BLOCK`` draws;
block ``b`` of site ``i`` for estimator tag ``t`` always uses the seed
``stream_seed(seed, t, i, b)``. Blocks are farmed out to worker processes and
reassembled in order, so the numbers never depend on the worker count.
"""
from __future__ import annotations

import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import green
from ..errors import BudgetError, ConfigError, DomainError
from ..lattice import FiniteSet, min_distance, translate
from ..sweep import SweepRecord
from . import kernels
from .offspring import OffspringDistribution
from .rng import blocks, stream_seed

EXHAUSTION_ALERT = 1e-4
# allowed relative error of the first-order truncation corrections
CORRECTION_RTOL = 0.25

TAG_BCAP, TAG_HIT, TAG_DEFICIT, TAG_TWO_SIDED, TAG_PAST_ONLY, TAG_OCCUPATION = 1, 2, 3, 4, 5, 6
# 7 is the past occupation run
TAG_DEFICIT_MARKED, TAG_TWO_SIDED_MARKED, TAG_PAST_ONLY_MARKED = 8, 9, 10


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CAPDERIV_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RadiiParams:
    """Truncation of the simulated trees.

    The simulation region is a ball around the bounding-box center c of the
    points that matter (targets, plus the start for the far-start estimators),
    whose radius rho reaches all of them.

    prune: vertices outside B(c, rho + prune) get no children.
    spine: the spine stops when it leaves B(c, rho + spine); ``None`` means
        3 * prune.
    """

    prune: float = 8.0
    spine: float | None = None
    node_budget: int = 10_000_000
    retries: int = 3

    def __post_init__(self):
        if self.prune <= 0 or self.node_budget <= 0 or self.retries < 0:
            raise ConfigError("prune and node_budget must be positive, retries >= 0")
        if self.spine is not None and self.spine <= 0:
            raise ConfigError("spine radius must be positive")


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    bias_bound: float = 0.0
    n: int = 0
    exhausted: int = 0
    flags: tuple[str, ...] = ()

    def __iter__(self):
        yield self.estimate
        yield self.stderr


@dataclass(frozen=True)
class DeficitEstimate(MCEstimate):
    escape_own: float = 0.0
    escape_union: float = 0.0
    own_counts: tuple[int, ...] = ()
    union_counts: tuple[int, ...] = ()
    deficit_counts: tuple[int, ...] = ()
    method: str = "direct"


@dataclass
class _Geometry:
    keys: np.ndarray
    masks: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    pc: np.ndarray
    pr2: np.ndarray
    sc: np.ndarray
    sr2: float

    def as_tuple(self):
        return (self.keys, self.masks, self.lo, self.hi, self.pc, self.pr2, self.sc, float(self.sr2))

    @property
    def points(self) -> np.ndarray:
        return kernels.key_points(self.keys, len(self.lo))


def _geometry(target_sets, prune_balls, spine_center, spine_radius) -> _Geometry:
    keys, masks, lo, hi = kernels.target_table(*[s.points for s in target_sets])
    pc = np.array([c for c, _ in prune_balls], dtype=float)
    pr2 = np.array([r * r for _, r in prune_balls], dtype=float)
    return _Geometry(keys, masks, lo, hi, pc, pr2, np.asarray(spine_center, dtype=float), float(spine_radius) ** 2)


def _tab(geo: _Geometry, tail: bool, sidem: float):
    """Green tables plus the points at which missed visits are tracked."""
    d = len(geo.lo)
    t = green.green_tables(d)
    pts = geo.points if tail else np.zeros((0, d), dtype=np.int64)
    return (pts, t.g_tab, t.m1_tab, int(t.M), t.coef, float(sidem))


@dataclass
class _BlockResult:
    flags: np.ndarray
    nodes: np.ndarray
    pruned: np.ndarray
    exited: np.ndarray
    attempts: np.ndarray
    tails: np.ndarray
    moments: np.ndarray
    hist: np.ndarray


def _run_one(args) -> _BlockResult:
    (seed, n, kind, x, root_cdf, cdf, geo, tail, sidem, stop_mask, budget, retries, K) = args
    hist = np.zeros((3, K + 1), dtype=np.int64)
    out = kernels.run_block(seed, n, kind, x, root_cdf, cdf, geo.as_tuple(), _tab(geo, tail, sidem),
                            stop_mask, budget, retries, hist)
    return _BlockResult(*out, hist)


def _pool_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        return list(ex.map(fn, tasks))


def _merge(results: list[_BlockResult]) -> _BlockResult:
    return _BlockResult(
        np.concatenate([r.flags for r in results]),
        np.concatenate([r.nodes for r in results]),
        np.concatenate([r.pruned for r in results]),
        np.concatenate([r.exited for r in results]),
        np.concatenate([r.attempts for r in results]),
        np.concatenate([r.tails for r in results]),
        np.sum([r.moments for r in results], axis=0),
        np.sum([r.hist for r in results], axis=0),
    )


def run_sites(kind, sites, root_cdf, cdf, geo, stop_masks, N, seed, tag, radii: RadiiParams,
              workers=None, K=None, tail=True, sidem=0.0):
    """Run N samples from each site; returns one merged _BlockResult per site.

    With ``tail`` the samples also track the expected visits to each target
    that truncation removed; ``sidem`` is the mean number of side trees per
    spine vertex (used when the spine leaves its ball).
    """
    workers = default_workers() if workers is None else workers
    K = (len(cdf) - 1) if K is None else K
    if tail:
        green.green_tables(len(geo.lo))  # build once before forking
    tasks, owner = [], []
    for i, x in enumerate(sites):
        for b, m in blocks(int(N)):
            tasks.append((stream_seed(seed, tag, i, b), m, kind, np.asarray(x, dtype=np.int64),
                          root_cdf, cdf, geo, tail, sidem, int(stop_masks[i]), int(radii.node_budget),
                          int(radii.retries), max(K, len(root_cdf) - 1)))
            owner.append(i)
    res = _pool_map(_run_one, tasks, workers)
    per_site = []
    for i in range(len(sites)):
        per_site.append(_merge([r for r, o in zip(res, owner) if o == i]))
    return per_site


# ---------------------------------------------------------------------------
# marked-visit (size-biased) runs


def _pmf_cdf(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    c = np.cumsum(p / p.sum())
    c[-1] = 1.0
    return np.minimum(c, 1.0)


def marked_laws(offspring: OffspringDistribution):
    """cdfs of (mu, mu~, mu_sb, size-biased mu~, full-tree side law)."""
    mu = np.asarray(offspring.pmf, dtype=float)
    K = len(mu) - 1
    tilde = np.array([mu[i + 1:].sum() for i in range(K + 1)])
    i = np.arange(K + 1)
    sbt = i * tilde
    # pick one normal child of a spine vertex with k ~ mu_sb: t = k - 1 normal
    # children, weight t (t + 1) mu(t + 1)
    sfull = np.zeros(K + 1)
    sfull[:K] = i[:K] * (i[:K] + 1) * mu[1:]
    if sbt.sum() == 0:
        raise DomainError("offspring law has zero variance")
    return (offspring.cdf, offspring.tilde_cdf, offspring.size_biased_cdf, _pmf_cdf(sbt), _pmf_cdf(sfull))


def _gh(rel) -> tuple[float, float]:
    """(h, h*h) at rel, with h = g - delta_0."""
    rel = tuple(int(v) for v in rel)
    g = green.srw_green(rel)
    m1 = green._first_time_moment(rel, 1e-10)
    delta = 1.0 if not any(rel) else 0.0
    return g - delta, m1 - 2.0 * g + delta


def marked_choice(kind, x, K_points, offspring: OffspringDistribution):
    """Choice table for the marked vertex and the total expected visits to K.

    Position types and expected visit counts at k (rel = k - x):
    past: spine vertex h(rel); inside a left tree m~ (h*h)(rel).
    full tree: root's own tree h(rel); spine vertex h(rel); inside a side tree
    2 m~ (h*h)(rel).
    """
    xv = np.asarray(x, dtype=np.int64)
    mt = offspring.tilde_mean
    rows = []
    for i, k in enumerate(np.asarray(K_points, dtype=np.int64)):
        rel = k - xv
        if not rel.any():
            raise ConfigError("the start point must not belong to the marked set")
        h, hh = _gh(rel)
        if kind == kernels.PAST:
            rows += [(i, kernels.SPINE, h, h), (i, kernels.SIDE, mt * hh, hh)]
        else:
            rows += [(i, kernels.ROOT, h, h), (i, kernels.SPINE, h, h), (i, kernels.SIDE, 2 * mt * hh, hh)]
    w = np.array([r[2] for r in rows])
    total = float(w.sum())
    cum = np.cumsum(w) / total
    cum[-1] = 1.0
    ck = np.array([r[0] for r in rows], dtype=np.int64)
    ct = np.array([r[1] for r in rows], dtype=np.int64)
    clw = np.log(total / np.array([r[3] for r in rows]))
    return (cum, ck, ct, clw, np.asarray(K_points, dtype=np.int64)), total


@dataclass
class _MarkedResult:
    values: np.ndarray  # rows: (value, weight, n_k, tail_k, tail_b)
    nodes: np.ndarray
    pruned: np.ndarray
    attempts: np.ndarray


def _marked_one(args) -> _MarkedResult:
    (seed, n, kind, x, choice, laws, geo, sidem, kbit, abit, budget, retries, L0, K) = args
    hist = np.zeros((3, K + 1), dtype=np.int64)
    out = kernels.marked_block(seed, n, kind, x, choice, laws, geo.as_tuple(), _tab(geo, True, sidem),
                               kbit, abit, budget, retries, L0, hist)
    return _MarkedResult(*out)


def run_marked(kind, sites, K_sets, offspring, geo, kbits, abits, N, seed, tag, radii: RadiiParams,
               workers=None):
    """N marked samples per site; returns per site (merged result, expected visits to K)."""
    workers = default_workers() if workers is None else workers
    laws = marked_laws(offspring)
    sidem = offspring.tilde_mean if kind == kernels.PAST else 2.0 * offspring.tilde_mean
    green.green_tables(len(geo.lo))
    K = len(offspring.pmf) - 1
    tasks, owner, totals = [], [], []
    for i, x in enumerate(sites):
        xv = np.asarray(x, dtype=np.int64)
        choice, total = marked_choice(kind, xv, K_sets[i], offspring)
        totals.append(total)
        far = float(((np.asarray(K_sets[i]) - xv) ** 2).sum(1).max())
        L0 = int(max(256, 16 * far))
        for b, m in blocks(int(N)):
            tasks.append((stream_seed(seed, tag, i, b), m, kind, xv, choice, laws, geo, sidem,
                          int(kbits[i]), int(abits[i]), int(radii.node_budget), int(radii.retries), L0, K))
            owner.append(i)
    res = _pool_map(_marked_one, tasks, workers)
    out = []
    for i in range(len(sites)):
        rs = [r for r, o in zip(res, owner) if o == i]
        merged = _MarkedResult(np.vstack([r.values for r in rs]), np.concatenate([r.nodes for r in rs]),
                               np.concatenate([r.pruned for r in rs]), np.concatenate([r.attempts for r in rs]))
        out.append((merged, totals[i]))
    return out


def _corrected_values(r: _MarkedResult, c_k: float, c_b: float) -> tuple[np.ndarray, np.ndarray]:
    """First-order truncation correction of marked values; returns (values, corrections).

    A cut-off piece with expected visits t to a set S meets S with
    probability about c_S t, where c_S = BCap(S) / |S|, and then brings
    1 / c_S visits on average. Meeting B zeroes the value; extra visits to K
    scale it by about N_K / (N_K + 1 / c_K).
    """
    v, _w, nk, tk, tb = r.values.T
    mbar = 1.0 / c_k
    frac = mbar / (np.maximum(nk, 1.0) + mbar)
    corr = -v * np.minimum(1.0, c_b * tb + c_k * tk * frac)
    return v + corr, corr


def _marked_summary(per_site, N, c_k, c_b):
    """(estimate, stderr, bias, retried, flags) summed over sites.

    ``c_k``/``c_b`` give per site the hit-per-visit coefficients of the
    marked and avoided sets. The bias bound allows the first-order
    correction a relative error of one half.
    """
    est = se2 = bias = 0.0
    retried = failed = capped = 0
    for (r, _total), ck, cb in zip(per_site, c_k, c_b):
        v, corr = _corrected_values(r, ck, cb)
        est += float(v.mean())
        se2 += float(v.var(ddof=1)) / N if N > 1 else 0.0
        bias += CORRECTION_RTOL * abs(float(corr.mean()))
        failed += int((r.attempts < 0).sum())
        capped += int((r.attempts == 0).sum())
        retried += int((r.attempts > 1).sum())
    if failed:
        raise BudgetError(f"{failed} samples exhausted the node budget after all retries")
    total = N * len(per_site)
    flags = ("biased",) if (retried + capped) / total > EXHAUSTION_ALERT else ()
    if capped:
        flags += ("capped_paths",)
    return est, math.sqrt(se2), bias, retried + capped, flags


def _budget_check(per_site):
    failed = sum(int((r.attempts < 0).sum()) for r in per_site)
    if failed:
        raise BudgetError(f"{failed} samples exhausted the node budget after all retries")
    retried = sum(int((r.attempts > 1).sum()) for r in per_site)
    total = sum(len(r.attempts) for r in per_site)
    flags = ("biased",) if total and retried / total > EXHAUSTION_ALERT else ()
    return retried, flags


def _check_d5(d):
    if d < 5:
        raise DomainError(f"branching capacity needs d >= 5, got d={d}")


def _tail_bias(per_site) -> float:
    """Expected target visits lost to truncation, summed over sites.

    It bounds the probability that truncation changed a hit indicator.
    """
    return float(sum(float(r.tails.mean()) for r in per_site))


def _region(points, radii: RadiiParams):
    """(center, prune radius, spine radius) of the ball covering ``points``."""
    P = np.asarray(points, dtype=float)
    c = (P.min(0) + P.max(0)) / 2.0
    rho = float(np.sqrt(((P - c) ** 2).sum(1)).max())
    spine = 3.0 * radii.prune if radii.spine is None else float(radii.spine)
    if spine < radii.prune:
        raise ConfigError("spine margin must be at least the prune margin")
    return c, rho + radii.prune, rho + spine


def _ball(S: FiniteSet, margin: float):
    c = S.center()
    return c, _radius(S, c) + margin


def estimate_bcap(A: FiniteSet, offspring: OffspringDistribution, N: int, radii: RadiiParams | None = None,
                  seed: int = 0, workers=None) -> MCEstimate:
    """BCap(A) = sum_{x in A} P(T_-^x does not meet A), by direct simulation.

    Truncation only removes hits, so raw escape frequencies run high. Every
    sample records the expected visits t to A of the parts cut off; such a
    part meets A with probability about c t, c = BCap(A) / |A|, and the
    estimate subtracts that (c solved self-consistently). ``bias_bound`` is
    CORRECTION_RTOL times the size of the correction.
    """
    _check_d5(A.dimension)
    radii = radii or RadiiParams()
    c, rho, spine = _region(A.points, radii)
    geo = _geometry([A], [(c, rho)], c, spine)
    per_site = run_sites(kernels.PAST, A.points, offspring.tilde_cdf, offspring.cdf, geo,
                         [1] * len(A), N, seed, TAG_BCAP, radii, workers, sidem=offspring.tilde_mean)
    retried, flags = _budget_check(per_site)
    esc = [(r.flags == 0).astype(float) for r in per_site]
    raw = float(sum(e.mean() for e in esc))
    est = raw
    for _ in range(4):
        coef = est / len(A)
        vals = [e * (1.0 - np.minimum(1.0, coef * r.tails)) for e, r in zip(esc, per_site)]
        est = float(sum(v.mean() for v in vals))
    se = float(np.sqrt(sum(v.var(ddof=1) for v in vals) / N)) if N > 1 else float("inf")
    return MCEstimate(est, se, CORRECTION_RTOL * abs(raw - est), int(N), retried, flags)


_hit_coef_cache: dict = {}


def _set_key(S: FiniteSet, offspring) -> tuple:
    P = np.asarray(S.points, dtype=np.int64)
    P = P - P.min(0)
    return (tuple(sorted(map(tuple, P.tolist()))), tuple(np.round(offspring.pmf, 15)))


def hit_coefficient(S: FiniteSet, offspring: OffspringDistribution, N: int = 20_000) -> float:
    """BCap(S) / |S|: far-away pieces meet S about this often per expected visit.

    Used only for first-order truncation corrections. The value comes from a
    fixed-seed run of estimate_bcap, cached per (shape, offspring law, N), so
    it never depends on what else was computed before.
    """
    key = _set_key(S, offspring) + (int(N),)
    if key not in _hit_coef_cache:
        _hit_coef_cache[key] = estimate_bcap(S, offspring, N, seed=7919).estimate / len(S)
    return _hit_coef_cache[key]


def _radius(S: FiniteSet, c) -> float:
    return S.radius_about(np.asarray(c, dtype=float))


def estimate_hitting_ratio(A: FiniteSet, w, offspring: OffspringDistribution, N: int, seed: int = 0,
                           prune: float | None = None, node_budget: int = 10_000_000,
                           workers=None) -> MCEstimate:
    """P(T_c^w meets A) / g(w), critical tree rooted at w.

    Vertices farther than ``prune`` (default 2 * dist(w, A)) from A are not
    expanded.
    """
    d = A.dimension
    _check_d5(d)
    wv = np.asarray(getattr(w, "coords", w), dtype=np.int64)
    gw = green.srw_green(tuple(wv))
    if tuple(wv) in {tuple(p) for p in A.points}:
        return MCEstimate(1.0 / gw, 0.0, 0.0, int(N), 0, ("root_in_A",))
    c = A.center()
    rho = _radius(A, c)
    dist = float(np.sqrt(((A.points - wv) ** 2).sum(1).min()))
    prune = 2.0 * dist if prune is None else float(prune)
    radii = RadiiParams(prune=prune, node_budget=node_budget)
    geo = _geometry([A], [(c, rho + prune)], c, rho + prune)
    if not (((geo.pc - wv) ** 2).sum(1) <= geo.pr2).any():
        raise ConfigError("pruning radius must reach the starting point")
    per_site = run_sites(kernels.CRITICAL, [wv], offspring.cdf, offspring.cdf, geo, [1], N, seed,
                         TAG_HIT, radii, workers)
    retried, flags = _budget_check(per_site)
    r = per_site[0]
    hit = (r.flags != 0).astype(float)
    raw = float(hit.mean())
    # cut-off pieces that would have reached A (first order, see estimate_bcap)
    v = hit + (1.0 - hit) * np.minimum(1.0, hit_coefficient(A, offspring) * r.tails)
    p = float(v.mean())
    # with few or no hits the plug-in variance collapses; floor it at one hit
    pv = max(p, 1.0 / N)
    se = max(math.sqrt(pv * (1 - pv) / N), float(v.std()) / math.sqrt(N))
    return MCEstimate(p / gw, se / gw, CORRECTION_RTOL * (p - raw) / gw, int(N), retried, flags)


def coupled_union_deficit(A: FiniteSet, B: FiniteSet, z, offspring: OffspringDistribution, N: int,
                          radii: RadiiParams | None = None, seed: int = 0, workers=None,
                          method: str = "marked") -> DeficitEstimate:
    """BCap(A) + BCap(B) - BCap(A u (z+B)).

    The deficit is the sum over x in A of P(T_-^x misses A, meets z+B) plus the
    mirror terms over x in z+B.

    method ``direct``: one past sample per draw scores the escape events from
    its own set and from the union together (common random numbers), so the
    deficit equals escape_own - escape_union realization by realization. The
    regions must then be large enough to carry trees between the two sets.

    method ``marked`` (default): each term is sampled size-biased by the
    number of visits to the far set, so every draw connects the two sets and
    the truncation only affects the neighbourhoods of A and z+B.
    """
    d = A.dimension
    _check_d5(d)
    radii = radii or RadiiParams()
    Bz = translate(B, z)
    if min_distance(A, Bz) == 0:
        raise ConfigError("A and z + B overlap")
    U = A.union(Bz)
    own = [1] * len(A) + [2] * len(Bz)
    sites = np.vstack([A.points, Bz.points])
    cU, rho, spine = _region(U.points, radii)
    if method == "marked":
        balls = [_ball(A, radii.prune), _ball(Bz, radii.prune)]
        geo = _geometry([A, Bz], balls, cU, spine)
        K_sets = [Bz.points] * len(A) + [A.points] * len(Bz)
        per_site = run_marked(kernels.PAST, sites, K_sets, offspring, geo, [3 - m for m in own], own, N,
                              seed, TAG_DEFICIT_MARKED, radii, workers)
        ca, cb = hit_coefficient(A, offspring), hit_coefficient(B, offspring)
        c_k = [cb] * len(A) + [ca] * len(Bz)
        c_b = [ca] * len(A) + [cb] * len(Bz)
        est, se, bias, retried, flags = _marked_summary(per_site, N, c_k, c_b)
        return DeficitEstimate(est, se, bias, int(N), retried, flags, method="marked")
    if method != "direct":
        raise ConfigError(f"unknown method {method!r}")
    geo = _geometry([A, Bz], [(cU, rho)], cU, spine)
    per_site = run_sites(kernels.PAST, sites, offspring.tilde_cdf, offspring.cdf, geo, own, N, seed,
                         TAG_DEFICIT, radii, workers, sidem=offspring.tilde_mean)
    retried, flags = _budget_check(per_site)
    own_c, uni_c, def_c = [], [], []
    for r, m in zip(per_site, own):
        other = 3 - m
        miss_own = (r.flags & m) == 0
        miss_all = r.flags == 0
        hit_other = (r.flags & other) != 0
        own_c.append(int(miss_own.sum()))
        uni_c.append(int(miss_all.sum()))
        def_c.append(int((miss_own & hit_other).sum()))
    ps = np.array(def_c) / N
    est = float(ps.sum())
    se = float(np.sqrt((ps * (1 - ps)).sum() / N))
    return DeficitEstimate(est, se, _tail_bias(per_site), int(N), retried, flags,
                           float(np.sum(own_c) / N), float(np.sum(uni_c) / N),
                           tuple(own_c), tuple(uni_c), tuple(def_c), method="direct")


def estimate_two_sided_hit(A: FiniteSet, z, offspring: OffspringDistribution, N: int,
                           radii: RadiiParams | None = None, seed: int = 0, past_only: bool = False,
                           workers=None, method: str = "marked") -> MCEstimate:
    """P(T^z meets A) / G(z) for the invariant tree T started at z.

    With ``past_only`` the event is about T_-^z instead, whose limit is BCap(A)
    rather than 2 BCap(A). ``method`` is ``marked`` (size-biased by visits to
    A, default) or ``direct``.
    """
    d = A.dimension
    _check_d5(d)
    radii = radii or RadiiParams()
    zv = np.asarray(getattr(z, "coords", z), dtype=np.int64)
    if tuple(zv) in {tuple(p) for p in A.points}:
        raise ConfigError("z must lie outside A")
    Gz = green.brw_past_green(tuple(zv), offspring)
    kind = kernels.PAST if past_only else kernels.FULL
    c, rho, spine = _region(np.vstack([A.points, zv[None, :]]), radii)
    if method == "marked":
        geo = _geometry([A], [_ball(A, radii.prune)], c, spine)
        tag = TAG_PAST_ONLY_MARKED if past_only else TAG_TWO_SIDED_MARKED
        per_site = run_marked(kind, [zv], [A.points], offspring, geo, [1], [0], N, seed, tag, radii, workers)
        est, se, bias, retried, flags = _marked_summary(per_site, N, [hit_coefficient(A, offspring)], [0.0])
        return MCEstimate(est / Gz, se / Gz, bias / Gz, int(N), retried, flags)
    if method != "direct":
        raise ConfigError(f"unknown method {method!r}")
    geo = _geometry([A], [(c, rho)], c, spine)
    if past_only:
        per_site = run_sites(kernels.PAST, [zv], offspring.tilde_cdf, offspring.cdf, geo, [1], N, seed,
                             TAG_PAST_ONLY, radii, workers, sidem=offspring.tilde_mean)
    else:
        per_site = run_sites(kernels.FULL, [zv], offspring.size_biased_cdf, offspring.cdf, geo, [1], N,
                             seed, TAG_TWO_SIDED, radii, workers, sidem=2.0 * offspring.tilde_mean)
    retried, flags = _budget_check(per_site)
    r = per_site[0]
    hit = (r.flags != 0).astype(float)
    raw = float(hit.mean())
    v = hit + (1.0 - hit) * np.minimum(1.0, hit_coefficient(A, offspring) * r.tails)
    p = float(v.mean())
    pv = max(p, 1.0 / N)
    se = max(math.sqrt(pv * (1 - pv) / N), float(v.std()) / math.sqrt(N))
    return MCEstimate(p / Gz, se / Gz, CORRECTION_RTOL * (p - raw) / Gz, int(N), retried, flags)


# relative accuracy of the tabulated Green's functions used for completion
TABLE_RTOL = 2e-3


@dataclass(frozen=True)
class Occupation:
    probes: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    raw_mean: np.ndarray | None = None  # visits actually simulated, before completion
    bias_bound: np.ndarray | None = None


def occupation(kind: str, x, probes, offspring: OffspringDistribution, N: int, prune: float,
               spine: float | None = None, seed: int = 0, node_budget: int = 10_000_000,
               workers=None) -> Occupation:
    """Mean number of visits to each probe point by a simulated range.

    kind: ``critical`` (T_c from x, pruned outside B(0, prune)) or ``past``
    (T_- from x, pruned outside B(0, prune), spine stopped outside
    B(0, spine), default 2 * prune). Each sample adds the expected visits of
    the parts removed by truncation, so ``mean`` is unbiased up to the table
    accuracy reported in ``bias_bound``; ``raw_mean`` counts simulated visits
    only.
    """
    xv = np.asarray(getattr(x, "coords", x), dtype=np.int64)
    d = len(xv)
    P = FiniteSet(np.asarray(probes, dtype=np.int64))
    origin = np.zeros(d)
    spine = 2.0 * prune if spine is None else spine
    geo = _geometry([P], [(origin, prune)], origin, spine)
    radii = RadiiParams(prune=prune, spine=spine, node_budget=node_budget)
    if kind == "critical":
        res = run_sites(kernels.CRITICAL, [xv], offspring.cdf, offspring.cdf, geo, [0], N, seed,
                        TAG_OCCUPATION, radii, workers)[0]
    elif kind == "past":
        res = run_sites(kernels.PAST, [xv], offspring.tilde_cdf, offspring.cdf, geo, [0], N, seed,
                        TAG_OCCUPATION + 1, radii, workers, sidem=offspring.tilde_mean)[0]
    else:
        raise ConfigError(f"unknown range kind {kind!r}")
    _budget_check([res])
    s1, s2, c1, c2 = res.moments
    raw = s1 / N
    mean = c1 / N
    var = np.maximum(c2 / N - mean ** 2, 0.0)
    # moments follow the sorted key table
    idx = [int(np.searchsorted(geo.keys, kernels.encode(np.asarray(p, dtype=np.int64))))
           for p in np.asarray(probes, dtype=np.int64)]
    bias = TABLE_RTOL * (mean - raw)
    return Occupation(np.asarray(probes), mean[idx], np.sqrt(var[idx] / N), int(N), raw[idx], bias[idx])


def mc_past_green(z, offspring: OffspringDistribution, N: int, R_trunc: float, seed: int = 0,
                  workers=None) -> MCEstimate:
    """Monte Carlo G(z): visits to z by the past from 0, pruned outside B(0, R_trunc).

    The spine stops outside B(0, 2 R_trunc). Visits removed by truncation are
    added back in expectation per sample; ``bias_bound`` covers the accuracy
    of the tabulated Green's functions used for that.
    """
    zv = np.asarray(getattr(z, "coords", z), dtype=np.int64)
    d = len(zv)
    _check_d5(d)
    if N < 1:
        raise ConfigError("N must be >= 1")
    if R_trunc <= 2 * float(np.sqrt((zv ** 2).sum())):
        raise ConfigError("R_trunc must exceed 2 |z|")
    occ = occupation("past", np.zeros(d, dtype=np.int64), [zv], offspring, N, R_trunc, 2 * R_trunc,
                     seed, workers=workers)
    return MCEstimate(float(occ.mean[0]), float(occ.stderr[0]), float(occ.bias_bound[0]), int(N))


def derivative_sweep_branching(A: FiniteSet, B: FiniteSet, direction, radii_list, offspring, N: int,
                               seed: int = 0, radii: RadiiParams | None = None, workers=None,
                               bcap_a: MCEstimate | None = None, bcap_b: MCEstimate | None = None,
                               method: str = "marked", N_bcap: int | None = None):
    """ratio(r) = deficit(z) / G(z) with z = r * direction; target 2 BCap(A) BCap(B).

    The capacities use ``N_bcap`` samples (default N) unless given as
    ``bcap_a``/``bcap_b``; each deficit uses N samples per site.
    """
    _check_d5(A.dimension)
    radii = radii or RadiiParams()
    dvec = np.asarray(getattr(direction, "coords", direction), dtype=np.int64)
    if not dvec.any():
        raise ConfigError("direction must be nonzero")
    nb = int(N_bcap or N)
    ba = bcap_a or estimate_bcap(A, offspring, nb, radii, seed, workers)
    if bcap_b is not None:
        bb = bcap_b
    elif B == A:
        bb = ba
    else:
        bb = estimate_bcap(B, offspring, nb, radii, seed + 1, workers)
    target = 2.0 * ba.estimate * bb.estimate
    if B == A and bcap_b is None:
        target_err = 4.0 * ba.estimate * ba.stderr
    else:
        target_err = 2.0 * math.hypot(ba.stderr * bb.estimate, bb.stderr * ba.estimate)
    out = []
    for r in radii_list:
        z = tuple(int(v) for v in r * dvec)
        Gz = green.brw_past_green(z, offspring)
        if min_distance(A, translate(B, z)) == 0:
            nan = float("nan")
            out.append(SweepRecord(int(r), z, ba.estimate, ba.stderr, bb.estimate, bb.stderr, nan, nan, Gz,
                                   nan, nan, target, target_err, int(N), ("overlap",)))
            continue
        dfc = coupled_union_deficit(A, B, z, offspring, N, radii, seed, workers, method)
        cu = ba.estimate + bb.estimate - dfc.estimate
        cu_err = math.sqrt(ba.stderr ** 2 + bb.stderr ** 2 + dfc.stderr ** 2)
        out.append(SweepRecord(int(r), z, ba.estimate, ba.stderr, bb.estimate, bb.stderr, float(cu), cu_err,
                               float(Gz), float(dfc.estimate / Gz), float(dfc.stderr / Gz), target, target_err,
                               int(N), dfc.flags))
    return out
