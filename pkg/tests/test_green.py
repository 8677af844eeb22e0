import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capderiv import green
from capderiv.branching import builtin_offspring
from capderiv.errors import DomainError
from capderiv.lattice import FiniteSet

# Reference values from 30-digit mpmath quadrature of
# int_0^inf t^k e^{-t} prod_i I_{x_i}(t/d) dt (k = 0: g, k = 1: M1), and for
# g_3(0) also Watson's closed form in Gamma functions.
WATSON = 1.5163860591519780182
G5 = {
    (0, 0, 0, 0, 0): 1.15630812484023118,
    (1, 0, 0, 0, 0): 0.156308124840231179,
    (1, 1, 0, 0, 0): 0.0474085960372957198,
    (2, 1, 0, 0, 0): 0.0139794831248237784,
    (5, 0, 0, 0, 0): 0.00115372648708945513,
    (3, 2, 1, 0, 0): 0.00249663232409575419,
}
M1_5 = {
    (0, 0, 0, 0, 0): 1.93494144038235115,
    (1, 0, 0, 0, 0): 0.778633315542119975,
    (1, 1, 0, 0, 0): 0.48955628433206218,
    (2, 1, 0, 0, 0): 0.304547355169162776,
    (5, 0, 0, 0, 0): 0.129679084178672648,
    (3, 2, 1, 0, 0): 0.171835849352568938,
}


def watson_closed_form():
    g = math.gamma
    return math.sqrt(6) / (32 * math.pi ** 3) * g(1 / 24) * g(5 / 24) * g(7 / 24) * g(11 / 24)


def test_g3_origin_matches_watson():
    assert watson_closed_form() == pytest.approx(WATSON, rel=1e-14)
    assert green.srw_green((0, 0, 0)) == pytest.approx(WATSON, rel=1e-11)


def test_g3_neighbor_is_g0_minus_one():
    assert green.srw_green((1, 0, 0)) == pytest.approx(WATSON - 1.0, rel=1e-10)


@pytest.mark.parametrize("x", list(G5))
def test_g5_reference_values(x):
    assert green.srw_green(x) == pytest.approx(G5[x], rel=1e-10)


@pytest.mark.parametrize("x", list(M1_5))
def test_first_time_moment_reference_values(x):
    assert green._first_time_moment(x, 1e-11) == pytest.approx(M1_5[x], rel=1e-10)


def test_srw_green_domain():
    with pytest.raises(DomainError):
        green.srw_green((0, 0))
    with pytest.raises(DomainError):
        green.srw_green((0, 0, 0), tol=2.0)


def test_srw_green_returns_float():
    assert type(green.srw_green((1, 2, 3))) is float


small = st.lists(st.integers(-4, 4), min_size=3, max_size=5)


@settings(max_examples=40, deadline=None)
@given(small)
def test_srw_green_symmetry_and_positivity(x):
    g = green.srw_green(x)
    assert g > 0
    assert green.srw_green([-v for v in x]) == g
    if any(x):
        assert green.srw_green((0,) * len(x)) > g


@settings(max_examples=25, deadline=None)
@given(small)
def test_srw_green_harmonic(x):
    d = len(x)
    s = 0.0
    for i in range(d):
        for e in (1, -1):
            y = list(x)
            y[i] += e
            s += green.srw_green(y)
    s /= 2 * d
    want = green.srw_green(x) - (1.0 if not any(x) else 0.0)
    assert s == pytest.approx(want, rel=5e-11, abs=5e-13)


def test_box_oracle_bounds_g_from_below():
    # g - g_box = E[g(x - S_exit)], and every exit point is at sup-distance
    # at least L + 1 - max|x_i| from x
    L = 10
    for x in [(0, 0, 0), (2, 1, 0)]:
        gap = green.srw_green(x) - green.box_green_oracle(x, 3, L)
        assert 0 < gap <= green.srw_green((L + 1 - max(x), 0, 0))


def test_far_field_constant_d3():
    a = green.far_field_constant(green.srw_green, 3, -1.0)
    assert a == pytest.approx(green.srw_green_constant(3), rel=1e-3)
    assert green.srw_green_constant(3) == pytest.approx(3 / (2 * math.pi), rel=1e-12)


def test_riesz_kernel_examples():
    assert green.riesz_kernel((0, 0, 0), 1.3) == 1.0
    assert green.riesz_kernel((3, 4, 0, 0, 0), 2.0) == pytest.approx(1 / 36, rel=1e-15)
    assert green.riesz_kernel((-3, -4, 0), 1.5) == green.riesz_kernel((3, 4, 0), 1.5)
    with pytest.raises(DomainError):
        green.riesz_kernel((1, 0, 0), 3.0)
    with pytest.raises(DomainError):
        green.riesz_kernel((1, 0, 0), 0.0)


@settings(max_examples=40, deadline=None)
@given(small, st.floats(0.1, 2.9))
def test_riesz_kernel_decreasing(x, alpha):
    r = math.sqrt(sum(v * v for v in x))
    y = [2 * v for v in x]
    assert green.riesz_kernel(x, alpha) == pytest.approx((1 + r) ** -alpha, rel=1e-14)
    assert green.riesz_kernel(y, alpha) <= green.riesz_kernel(x, alpha)


def test_green_matrix_examples():
    k = green.riesz(3, 2.0)
    assert green.green_matrix(FiniteSet([(0, 0, 0)]), k).tolist() == [[1.0]]
    M = green.green_matrix(FiniteSet([(0, 0, 0), (3, 4, 0)]), k)
    assert np.allclose(np.diag(M), 1.0)
    assert M[0, 1] == pytest.approx(1 / 36, rel=1e-15)
    S = FiniteSet([(0, 0, 0), (1, 0, 0), (0, 2, 1), (3, 1, 1)])
    for kern in (k, green.srw_kernel(3)):
        M = green.green_matrix(S, kern)
        assert np.array_equal(M, M.T)
        assert np.all(np.diag(M) == kern((0, 0, 0)))


def test_kernel_domains():
    with pytest.raises(DomainError):
        green.Kernel("srw_green", 2)
    with pytest.raises(DomainError):
        green.Kernel("brw_past_green", 4, offspring=builtin_offspring("binary"))
    with pytest.raises(DomainError):
        green.Kernel("riesz", 3, alpha=3.5)
    with pytest.raises(DomainError):
        green.Kernel("asymptotic", 3, constant=-1.0, exponent=-1.0)


def past_green_oracle(x, m):
    g, m1 = G5[x], M1_5[x]
    delta = 1.0 if not any(x) else 0.0
    return (g - delta) + m * (m1 - 2 * g + delta)


@pytest.mark.parametrize("name", ["binary", "geometric_half"])
@pytest.mark.parametrize("x", [(0, 0, 0, 0, 0), (1, 0, 0, 0, 0), (5, 0, 0, 0, 0), (3, 2, 1, 0, 0)])
def test_brw_past_green_spine_formula(name, x):
    off = builtin_offspring(name)
    # binary: mu~ = (1/2, 1/2) so m = 1/2; geometric(1/2): mu~(i) = 2^-(i+1), m = 1
    m = {"binary": 0.5, "geometric_half": 1.0}[name]
    assert off.tilde_mean == pytest.approx(m, rel=1e-12)
    assert green.brw_past_green(x, off) == pytest.approx(past_green_oracle(x, m), rel=1e-9)


def test_brw_past_green_symmetric_and_decaying():
    off = builtin_offspring("binary")
    z = (3, -2, 1, 0, 0)
    assert green.brw_past_green(z, off) == pytest.approx(green.brw_past_green([-v for v in z], off), rel=1e-12)
    # G(z) |z|^{d-4} levels off at a positive constant
    vals = [green.brw_past_green((r, 0, 0, 0, 0), off) * r for r in (16, 32, 64)]
    assert all(v > 0 for v in vals)
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])
    assert vals[2] == pytest.approx(vals[1], rel=0.05)


def test_brw_past_green_domain():
    with pytest.raises(DomainError):
        green.brw_past_green((1, 0, 0, 0), builtin_offspring("binary"))


def test_green_tables_match_direct_values():
    T = green.green_tables(5)
    w = (T.M + 1) ** np.arange(5)
    for x in [(0, 0, 0, 0, 0), (2, 1, 0, 0, 0), (3, 2, 1, 0, 0)]:
        i = int(np.dot(sorted(x, reverse=True), w))
        assert T.g_tab[i] == pytest.approx(G5[x], rel=1e-10)
        assert T.m1_tab[i] == pytest.approx(M1_5[x], rel=1e-9)
    # the far-field fits are good to a few parts per thousand just outside the box
    a, b, c = T.coef[:3]
    x = (12, 3, 0, 0, 0)
    r2 = sum(v * v for v in x)
    q = sum(v ** 4 for v in x) / r2 ** 2
    assert a * r2 ** -1.5 * (1 + (b + c * q) / r2) == pytest.approx(green.srw_green(x), rel=2e-3)


@pytest.mark.slow
def test_mc_past_green_agrees_with_formula():
    off = builtin_offspring("binary")
    z = (2, 0, 0, 0, 0)
    est = green.mc_past_green(z, off, 40_000, R_trunc=6.0, seed=11)
    want = green.brw_past_green(z, off)
    assert abs(est.estimate - want) <= 3 * est.stderr + est.bias_bound
    est_neg = green.mc_past_green((-2, 0, 0, 0, 0), off, 40_000, R_trunc=6.0, seed=12)
    assert abs(est.estimate - est_neg.estimate) <= 3 * math.hypot(est.stderr, est_neg.stderr)
