"""Critical offspring laws with their tail (adjoint) and size-biased companions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

_TRUNC_TAIL = 1e-15


def _cdf(pmf: np.ndarray) -> np.ndarray:
    c = np.cumsum(pmf)
    c[-1] = 1.0
    # inversion sampling picks the first k with u < cdf[k]; zero-mass tail
    # entries must never be reachable
    return np.minimum(c, 1.0)


@dataclass(frozen=True)
class OffspringDistribution:
    """Offspring pmf mu on {0, 1, ..., K}.

    Derived laws: ``tilde`` (mu~(i) = sum_{j>i} mu(j), the number of children
    on one side of a spine vertex) and ``size_biased`` (i mu(i)).
    """

    pmf: np.ndarray
    name: str = "custom"
    critical: bool = True
    tilde: np.ndarray = field(init=False, repr=False)
    size_biased: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        if p.ndim != 1 or len(p) == 0 or np.any(p < 0):
            raise ConfigError("pmf must be a nonempty vector of nonnegative numbers")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError(f"pmf sums to {p.sum()!r}, not 1")
        k = np.arange(len(p))
        if self.critical and abs(float(k @ p) - 1.0) > 1e-12:
            raise ConfigError(f"offspring mean is {float(k @ p)!r}; a critical law needs mean 1")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)
        tail = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
        object.__setattr__(self, "tilde", tail)
        object.__setattr__(self, "size_biased", k * p)

    @property
    def mean(self) -> float:
        return float(np.arange(len(self.pmf)) @ self.pmf)

    @property
    def variance(self) -> float:
        k = np.arange(len(self.pmf))
        return float((k - self.mean) ** 2 @ self.pmf)

    @property
    def third_moment(self) -> float:
        k = np.arange(len(self.pmf))
        return float(k ** 3 @ self.pmf)

    @property
    def tilde_mean(self) -> float:
        """Mean number of children on one side of a spine vertex (sigma^2 / 2)."""
        return float(np.arange(len(self.tilde)) @ self.tilde)

    # sampling tables
    @property
    def cdf(self) -> np.ndarray:
        return _cdf(self.pmf)

    @property
    def tilde_cdf(self) -> np.ndarray:
        return _cdf(self.tilde)

    @property
    def size_biased_cdf(self) -> np.ndarray:
        return _cdf(self.size_biased)

    @property
    def hat_cdf(self) -> np.ndarray:
        """Law of (size-biased count) - 1: root of the hat tree."""
        return _cdf(np.append(self.size_biased[1:], 0.0))

    @property
    def max_degree(self) -> int:
        return len(self.pmf) - 1


def builtin_offspring(name: str) -> OffspringDistribution:
    if name == "binary":
        return OffspringDistribution(np.array([0.5, 0.0, 0.5]), "binary")
    if name == "geometric_half":
        # 2^-(k+1) for k <= 60; the dropped tail (2^-61) is far below rounding
        K = 60
        p = 0.5 ** (np.arange(K + 1) + 1.0)
        return OffspringDistribution(_fix_mean(p), "geometric_half")
    if name == "poisson1":
        p = [math.exp(-1.0)]
        while 1.0 - sum(p) >= _TRUNC_TAIL:
            p.append(p[-1] / len(p))
        return OffspringDistribution(_fix_mean(np.array(p)), "poisson1")
    raise ConfigError(f"unknown offspring law {name!r}")


def _fix_mean(p: np.ndarray) -> np.ndarray:
    """Renormalize a truncated pmf and move O(tail) mass between cells 0 and 2
    so the mean is exactly one in floating point."""
    p = p / p.sum()
    for _ in range(3):
        k = np.arange(len(p))
        excess = float(k @ p) - 1.0
        # moving t from cell 2 to cell 0 lowers the mean by 2t and keeps the total
        p[2] -= excess / 2.0
        p[0] += excess / 2.0
    return p
