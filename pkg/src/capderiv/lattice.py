"""Points and finite subsets of Z^d."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LatticePoint:
    coords: tuple[int, ...]

    def __init__(self, coords: Iterable[int]):
        c = tuple(int(v) for v in coords)
        if len(c) < 1:
            raise ConfigError("a lattice point needs at least one coordinate")
        object.__setattr__(self, "coords", c)

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def __add__(self, other: "LatticePoint") -> "LatticePoint":
        _check_dims(self.dimension, other.dimension)
        return LatticePoint(a + b for a, b in zip(self.coords, other.coords))

    def __neg__(self) -> "LatticePoint":
        return LatticePoint(-a for a in self.coords)

    def __mul__(self, k: int) -> "LatticePoint":
        return LatticePoint(int(k) * a for a in self.coords)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(sum(a * a for a in self.coords)))

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.int64)


def point(*coords: int) -> LatticePoint:
    if len(coords) == 1 and not isinstance(coords[0], (int, np.integer)):
        return LatticePoint(coords[0])
    return LatticePoint(coords)


def unit(i: int, d: int) -> LatticePoint:
    c = [0] * d
    c[i] = 1
    return LatticePoint(c)


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise ConfigError(f"dimension mismatch: {a} vs {b}")


class FiniteSet:
    """Nonempty finite subset of Z^d, stored in lexicographic order.

    ``points`` is an ``(n, d)`` int64 array; row ``i`` is the point with
    canonical index ``i``.
    """

    __slots__ = ("_pts", "_d")

    def __init__(self, points: Iterable[Sequence[int]] | np.ndarray, dimension: int | None = None):
        arr = np.asarray([list(getattr(p, "coords", p)) for p in points] if not isinstance(points, np.ndarray) else points)
        if arr.size == 0:
            raise ConfigError("a finite set must be nonempty")
        arr = np.atleast_2d(arr).astype(np.int64)
        if dimension is not None and arr.shape[1] != dimension:
            raise ConfigError(f"points have dimension {arr.shape[1]}, expected {dimension}")
        if arr.shape[1] < 1:
            raise ConfigError("dimension must be >= 1")
        uniq = np.unique(arr, axis=0)
        if len(uniq) != len(arr):
            raise ConfigError("duplicate points in finite set")
        uniq.setflags(write=False)
        self._pts = uniq
        self._d = arr.shape[1]

    @property
    def points(self) -> np.ndarray:
        return self._pts

    @property
    def dimension(self) -> int:
        return self._d

    def __len__(self) -> int:
        return len(self._pts)

    def __iter__(self):
        return (LatticePoint(p) for p in self._pts)

    def __contains__(self, p) -> bool:
        c = np.asarray(getattr(p, "coords", p), dtype=np.int64)
        return bool(np.any(np.all(self._pts == c, axis=1)))

    def __eq__(self, other) -> bool:
        return isinstance(other, FiniteSet) and self._pts.shape == other._pts.shape and bool(np.all(self._pts == other._pts))

    def __hash__(self) -> int:
        return hash(self._pts.tobytes())

    def __repr__(self) -> str:
        if len(self) <= 6:
            return f"FiniteSet({[tuple(int(v) for v in p) for p in self._pts]})"
        return f"FiniteSet(<{len(self)} points in Z^{self._d}>)"

    def union(self, other: "FiniteSet") -> "FiniteSet":
        _check_dims(self._d, other._d)
        return FiniteSet(np.unique(np.vstack([self._pts, other._pts]), axis=0))

    def is_disjoint(self, other: "FiniteSet") -> bool:
        return min_distance(self, other) > 0

    def diameter(self) -> float:
        p = self._pts.astype(float)
        if len(p) == 1:
            return 0.0
        diff = p[:, None, :] - p[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1).max()))

    def center(self) -> np.ndarray:
        """Midpoint of the bounding box (float)."""
        return (self._pts.min(0) + self._pts.max(0)) / 2.0

    def radius_about(self, c: np.ndarray) -> float:
        return float(np.sqrt(((self._pts - c) ** 2).sum(1).max()))

    def index_of(self, p) -> int:
        c = np.asarray(getattr(p, "coords", p), dtype=np.int64)
        hits = np.flatnonzero(np.all(self._pts == c, axis=1))
        if len(hits) == 0:
            raise KeyError(tuple(c))
        return int(hits[0])


def make_shape(kind: str, params: dict | None = None, d: int = 3, seed: int | None = None) -> FiniteSet:
    """Build a ball, box, segment or seeded random subset of a box.

    ``params`` keys: ``r`` (ball radius), ``s`` (box side), ``n`` (segment
    length), ``side`` and ``size`` (random: box side and cardinality).
    """
    params = dict(params or {})
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ConfigError(f"invalid dimension {d!r}")
    if kind == "ball":
        r = float(params.get("r", params.get("radius", 0)))
        if r < 0:
            raise ConfigError("ball radius must be >= 0")
        m = int(np.floor(r))
        axes = [np.arange(-m, m + 1)] * d
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
        pts = grid[(grid ** 2).sum(1) <= r * r + 1e-9]
    elif kind == "box":
        s = int(params.get("s", params.get("side", 0)))
        if s < 0:
            raise ConfigError("box side must be >= 0")
        axes = [np.arange(0, s + 1)] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    elif kind == "segment":
        n = int(params.get("n", 0))
        if n < 0:
            raise ConfigError("segment length must be >= 0")
        pts = np.zeros((n + 1, d), dtype=np.int64)
        pts[:, 0] = np.arange(n + 1)
    elif kind == "random":
        if seed is None or "size" not in params:
            raise ConfigError("random shapes need a seed and a 'size'")
        side = int(params.get("side", params.get("s", 4)))
        size = int(params["size"])
        total = (side + 1) ** d
        if size < 1 or size > total:
            raise ConfigError(f"cannot draw {size} points from a box with {total} sites")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(total, size=size, replace=False))
        pts = np.stack(np.unravel_index(idx, (side + 1,) * d), -1)
    elif kind == "points":
        pts = np.asarray(params["points"], dtype=np.int64).reshape(-1, d)
    else:
        raise ConfigError(f"unknown shape kind {kind!r}")
    if len(pts) == 0:
        raise ConfigError("shape is empty")
    return FiniteSet(pts, d)


def translate(S: FiniteSet, z) -> FiniteSet:
    c = np.asarray(getattr(z, "coords", z), dtype=np.int64)
    _check_dims(S.dimension, len(c))
    return FiniteSet(S.points + c)


def min_distance(S: FiniteSet, T: FiniteSet) -> float:
    _check_dims(S.dimension, T.dimension)
    diff = S.points[:, None, :].astype(float) - T.points[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1).min()))
