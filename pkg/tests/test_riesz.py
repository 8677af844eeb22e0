import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capderiv import riesz
from capderiv.errors import ConfigError, DomainError, NumericalError
from capderiv.lattice import FiniteSet, make_shape, translate
from oracles import grid_min_energy, riesz_catalog, riesz_gram

O5 = FiniteSet([(0, 0, 0, 0, 0)])


def test_singleton_capacity_is_one():
    r = riesz.capacity_alpha(O5, 2.0)
    assert r.capacity_lower == 1.0
    assert r.capacity_lower <= 1.0 <= r.capacity_upper
    assert r.mu.weights.tolist() == [1.0]


@pytest.mark.parametrize("r", [1, 5, 20])
def test_two_points(r):
    S = FiniteSet([(0, 0, 0, 0, 0), (r, 0, 0, 0, 0)])
    res = riesz.capacity_alpha(S, 2.0)
    want = 2 / (1 + (1 + r) ** -2.0)
    assert res.capacity_lower <= want * (1 + 1e-14)
    assert res.capacity_upper >= want * (1 - 1e-14)
    assert np.allclose(res.mu.weights, 0.5)


def test_segment_matches_grid():
    S = make_shape("segment", {"n": 2}, 5)
    res = riesz.capacity_alpha(S, 2.0)
    E, _ = grid_min_energy(riesz_gram(S.points, 2.0))
    assert abs(res.capacity - 1 / E) <= 2e-3
    assert res.capacity_lower <= 1 / E <= res.capacity_upper


@pytest.mark.parametrize("i", range(25))
def test_catalog_bracket_contains_grid_value(i):
    S, alpha = riesz_catalog()[i]
    res = riesz.capacity_alpha(S, alpha)
    E, _ = grid_min_energy(riesz_gram(S.points, alpha))
    assert res.capacity_lower <= 1 / E <= res.capacity_upper
    assert res.capacity_upper - res.capacity_lower <= 1e-6 * res.capacity_lower


def test_result_invariants():
    res = riesz.capacity_alpha(make_shape("ball", {"r": 1}, 5), 2.0, tol=1e-9)
    assert res.capacity_lower <= res.capacity_upper
    assert (res.capacity_upper - res.capacity_lower) <= 1e-9 * res.capacity_lower
    assert res.mu.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(res.mu.weights >= 0)


def test_alpha_domain():
    with pytest.raises(DomainError):
        riesz.capacity_alpha(FiniteSet([(0, 0, 0)]), 3.0)
    with pytest.raises(DomainError):
        riesz.capacity_alpha(FiniteSet([(0, 0, 0)]), -1.0)
    with pytest.raises(ConfigError):
        riesz.capacity_alpha(O5, 2.0, tol=0.0)


def test_equilibrium_function_examples():
    assert riesz.equilibrium_function_check(riesz.capacity_alpha(O5, 2.0)) == pytest.approx(0.0, abs=1e-14)
    two = FiniteSet([(0, 0, 0, 0, 0), (3, 0, 0, 0, 0)])
    assert riesz.equilibrium_function_check(riesz.capacity_alpha(two, 2.0)) <= 1e-14
    seg = make_shape("segment", {"n": 4}, 5)
    res = riesz.capacity_alpha(seg, 2.0, tol=1e-8)
    assert riesz.equilibrium_function_check(res) <= 1e-3
    # phi is feasible for the sup characterization: g * phi <= 1 + deviation
    assert riesz.equilibrium_function_check(res, tol=1e-3) <= 1e-3


def test_equilibrium_function_check_raises_over_tol():
    res = riesz.capacity_alpha(make_shape("segment", {"n": 4}, 5), 2.0, tol=1e-8)
    dev = riesz.equilibrium_function_check(res)
    if dev > 0:
        with pytest.raises(NumericalError):
            riesz.equilibrium_function_check(res, tol=dev / 2)


def test_union_bounds_sandwich_singletons():
    feasible_from = None
    for r in range(2, 80, 3):
        z = (r, 0, 0, 0, 0)
        ub = riesz.union_bounds(O5, O5, z, 2.0, 0.1)
        cu = riesz.capacity_alpha(O5.union(FiniteSet([z])), 2.0)
        assert ub.lower <= cu.capacity_upper
        if ub.upper is not None:
            assert ub.upper >= cu.capacity_lower
            feasible_from = feasible_from or r
        else:
            assert feasible_from is None, "feasibility must persist once reached"
            assert ub.violated_point is not None
    assert feasible_from is not None


def test_union_bounds_overlap_and_slack():
    with pytest.raises(ConfigError):
        riesz.union_bounds(O5, O5, (0, 0, 0, 0, 0), 2.0)
    with pytest.raises(ConfigError):
        riesz.union_bounds(O5, O5, (4, 0, 0, 0, 0), 2.0, eps_slack=1.0)


def test_singleton_sweep_closed_form():
    recs = riesz.derivative_sweep_riesz(O5, O5, (1, 0, 0, 0, 0), [8, 16, 32, 64], 2.0)
    for rec in recs:
        want = 2 / (1 + rec.kernel)
        assert abs(rec.ratio - want) <= 1e-9 * want + 2 * rec.ratio_err
        assert rec.target == pytest.approx(2.0, rel=1e-12)
        ub = riesz.union_bounds(O5, O5, rec.z, 2.0)
        # deficit bracketed by the sandwich
        assert (2 - ub.lower) / rec.kernel >= rec.ratio - rec.ratio_err
        if ub.upper is not None:
            assert (2 - ub.upper) / rec.kernel <= rec.ratio + rec.ratio_err


def test_ball_sweep_approaches_target():
    B = make_shape("ball", {"r": 1}, 5)
    recs = riesz.derivative_sweep_riesz(B, B, (1, 0, 0, 0, 0), [8, 16, 32, 64], 2.0)
    gaps = [r.relative_gap for r in recs]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.05
    assert all(r.ratio_err < 1e-3 * r.ratio for r in recs)


def test_sweep_overlap_flag():
    B = make_shape("ball", {"r": 1}, 5)
    recs = riesz.derivative_sweep_riesz(B, B, (1, 0, 0, 0, 0), [1, 4], 2.0)
    assert recs[0].flags == ("overlap",)
    assert not recs[1].flags


small_sets = st.lists(st.lists(st.integers(-3, 3), min_size=3, max_size=3), min_size=1, max_size=6,
                      unique_by=tuple)


@settings(max_examples=25, deadline=None)
@given(small_sets, st.lists(st.integers(-10, 10), min_size=3, max_size=3), st.floats(0.3, 2.7))
def test_translation_and_reflection_invariance(P, z, alpha):
    S = FiniteSet(P)
    c = riesz.capacity_alpha(S, alpha).capacity
    assert riesz.capacity_alpha(translate(S, z), alpha).capacity == pytest.approx(c, rel=1e-9)
    assert riesz.capacity_alpha(FiniteSet(-np.asarray(P)), alpha).capacity == pytest.approx(c, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(small_sets, st.lists(st.integers(-3, 3), min_size=3, max_size=3), st.floats(0.3, 2.7))
def test_monotone_under_inclusion(P, extra, alpha):
    S = FiniteSet(P)
    T = S.union(FiniteSet([extra]))
    a = riesz.capacity_alpha(S, alpha)
    b = riesz.capacity_alpha(T, alpha)
    assert a.capacity_lower <= b.capacity_upper


@settings(max_examples=20, deadline=None)
@given(small_sets, st.integers(4, 30))
def test_sandwich_property(P, r):
    S = FiniteSet(P)
    z = (r + 7, 1, 0)
    ub = riesz.union_bounds(S, S, z, 1.5)
    cu = riesz.capacity_alpha(S.union(translate(S, z)), 1.5)
    assert ub.lower <= cu.capacity_upper * (1 + 1e-12)
    if ub.upper is not None:
        assert ub.upper >= cu.capacity_lower * (1 - 1e-12)
