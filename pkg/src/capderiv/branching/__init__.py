"""Critical branching random walks and Monte Carlo branching capacity."""
from .estimators import (
    DeficitEstimate,
    MCEstimate,
    Occupation,
    RadiiParams,
    coupled_union_deficit,
    derivative_sweep_branching,
    estimate_bcap,
    estimate_hitting_ratio,
    estimate_two_sided_hit,
    mc_past_green,
    occupation,
)
from .offspring import OffspringDistribution, builtin_offspring
from .samplers import RangeSample, sample_past_range, sample_tree_range

__all__ = [
    "DeficitEstimate",
    "MCEstimate",
    "Occupation",
    "OffspringDistribution",
    "RadiiParams",
    "RangeSample",
    "builtin_offspring",
    "coupled_union_deficit",
    "derivative_sweep_branching",
    "estimate_bcap",
    "estimate_hitting_ratio",
    "estimate_two_sided_hit",
    "mc_past_green",
    "occupation",
    "sample_past_range",
    "sample_tree_range",
]
