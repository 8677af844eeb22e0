"""Single realizations of tree-indexed walk ranges."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BudgetError, ConfigError, DomainError
from ..lattice import FiniteSet
from . import kernels
from .estimators import _Geometry, _tab
from .offspring import OffspringDistribution
from .rng import stream_seed

TAG_RANGE = 20
DEFAULT_BUDGET = 10_000_000
RETRIES = 3


@dataclass(frozen=True)
class RangeSample:
    visited: FiniteSet
    hit_flags: tuple[bool, ...]
    pruned: bool
    nodes_used: int
    attempts: int = 1


def _empty_geometry(d, prune_radius, spine_radius) -> _Geometry:
    # no keys and an empty bounding box: nothing is ever looked up
    return _Geometry(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                     np.full(d, 1, dtype=np.int64), np.full(d, -1, dtype=np.int64),
                     np.zeros((1, d)), np.array([float(prune_radius) ** 2]),
                     np.zeros(d), float(spine_radius) ** 2)


def _run(kind, x, root_cdf, offspring, prune_radius, spine_radius, node_budget, seed, targets, tag):
    xv = np.asarray(getattr(x, "coords", x), dtype=np.int64)
    d = len(xv)
    if prune_radius <= 0 or node_budget <= 0:
        raise ConfigError("prune_radius and node_budget must be positive")
    geo = _empty_geometry(d, prune_radius, spine_radius)
    tab = (np.zeros((0, d), dtype=np.int64), np.zeros(1), np.zeros(1), 0, np.zeros(6), 0.0)
    K = max(len(offspring.cdf), len(root_cdf)) - 1
    for a in range(1, RETRIES + 2):
        hist = np.zeros((3, K + 1), dtype=np.int64)
        rec, fl, used, pr, ex, status = kernels.record_sample(
            stream_seed(seed, tag, 0, a - 1), kind, xv, root_cdf, offspring.cdf, geo.as_tuple(), tab,
            int(node_budget), hist)
        if status == kernels.OK:
            break
    else:
        raise BudgetError(f"node budget {node_budget} exhausted {RETRIES + 1} times")
    visited = FiniteSet(np.unique(rec, axis=0), dimension=d)
    vis = {tuple(p) for p in visited.points}
    flags = tuple(any(tuple(p) in vis for p in T.points) for T in targets)
    return RangeSample(visited, flags, bool(pr > 0), int(used), a)


def sample_tree_range(kind: str, x, offspring: OffspringDistribution, prune_radius: float,
                      node_budget: int = DEFAULT_BUDGET, seed: int = 0,
                      targets: tuple[FiniteSet, ...] = ()) -> RangeSample:
    """Range of one tree-indexed SRW rooted at x.

    kind: ``critical`` (root law mu), ``adjoint`` (root law mu~) or ``hat``
    (root law mu_sb minus one); all other vertices have law mu. Vertices
    outside B(0, prune_radius) are recorded but not expanded. A sample over
    the node budget is redrawn up to three times.
    """
    roots = {"critical": offspring.cdf, "adjoint": offspring.tilde_cdf, "hat": offspring.hat_cdf}
    if kind not in roots:
        raise ConfigError(f"unknown tree kind {kind!r}")
    return _run(kernels.CRITICAL, x, roots[kind], offspring, prune_radius, prune_radius, node_budget, seed,
                targets, TAG_RANGE)


def sample_past_range(x, offspring: OffspringDistribution, spine_exit_radius: float, prune_radius: float,
                      node_budget: int = DEFAULT_BUDGET, seed: int = 0,
                      targets: tuple[FiniteSet, ...] = ()) -> RangeSample:
    """Range of the past T_-^x: spine from x (x excluded) until it leaves
    B(0, spine_exit_radius), mu~ critical trees per spine vertex."""
    xv = np.asarray(getattr(x, "coords", x), dtype=np.int64)
    if len(xv) < 5:
        raise DomainError("the past of the invariant tree is simulated for d >= 5")
    if spine_exit_radius <= 0:
        raise ConfigError("spine_exit_radius must be positive")
    return _run(kernels.PAST, xv, offspring.tilde_cdf, offspring, prune_radius, spine_exit_radius,
                node_budget, seed, targets, TAG_RANGE + 1)


def degree_counts(law: str, offspring: OffspringDistribution, n_samples: int, seed: int = 0,
                  radius: float = 3.0) -> np.ndarray:
    """Histogram of the offspring counts actually drawn by the samplers.

    law ``mu``: roots of critical trees (one draw per tree); ``tilde``:
    spine vertices of the past; ``size_biased``: spine vertices of the full
    invariant tree. ``n_samples`` trees (or pasts) are simulated inside
    B(0, radius). Draws inside a finished tree are not used: the tree stops
    when its leaves catch up with its branchings, so their histogram is
    biased toward leaves.
    """
    from .estimators import RadiiParams, run_sites, _geometry

    rows = {"mu": (kernels.CRITICAL, offspring.cdf, 0), "tilde": (kernels.PAST, offspring.tilde_cdf, 2),
            "size_biased": (kernels.FULL, offspring.size_biased_cdf, 2)}
    if law not in rows:
        raise ConfigError(f"unknown law {law!r}")
    kind, root, row = rows[law]
    d = 5  # the laws do not depend on the dimension
    o = np.zeros(d, dtype=np.int64)
    dummy = FiniteSet([(10 * int(radius) + 5,) + (0,) * (d - 1)])
    geo = _geometry([dummy], [(np.zeros(d), radius)], np.zeros(d), radius)
    radii = RadiiParams(prune=radius, spine=radius)
    res = run_sites(kind, [o], root, offspring.cdf, geo, [0], int(n_samples), seed, TAG_RANGE + 2, radii,
                    workers=1, tail=False)[0]
    return res.hist[row].copy()
