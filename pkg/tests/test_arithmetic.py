import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from torusflow import errors
from torusflow.arithmetic import (
    ContinuedFraction, Profile, best_approx_bounds, build_y_vector, circle_distance,
    convergents, independence_spot_check, log_compare, stretch_windows, window_for,
)
from torusflow.suites import exact_profile, relaxed_profile


def nested_value(coeffs):
    """Evaluate [0; a_1, ..., a_n] from the inside out."""
    v = Fraction(0)
    for a in reversed(coeffs):
        v = 1 / (a + v)
    return v


def test_fibonacci_denominators():
    cf = ContinuedFraction((1, 1, 1, 1, 1))
    assert cf.q == (1, 1, 2, 3, 5, 8)
    assert [q for _, q in convergents([1, 1, 1, 1, 1])] == [1, 2, 3, 5, 8]


def test_two_term_convergent():
    assert convergents([2, 3])[-1] == (3, 7)
    assert ContinuedFraction((2, 3)).value == Fraction(3, 7)


def test_large_coefficient_matches_nested_fraction():
    coeffs = (2, 8, 3000)
    cf = ContinuedFraction(coeffs)
    for n in range(1, 4):
        assert cf.convergent(n) == nested_value(coeffs[:n])


def test_rejects_nonpositive_coefficients():
    with pytest.raises(errors.InvalidInputError):
        ContinuedFraction((2, 0))


def test_exact_profile_level_one():
    fv = exact_profile()
    assert [fv.q(j, 1) for j in (1, 2, 3)] == [2, 8, 2981]
    # each denominator is the least integer above e**(previous)
    assert math.ceil(math.exp(8)) == 2981
    assert fv.fully_certified
    assert len(str(fv.q(4, 1))) == 1295


def test_exact_level_two_exceeds_digit_budget():
    with pytest.raises(errors.ResourceLimitError) as info:
        build_y_vector(depth=2)
    assert info.value.level == 2


def test_relaxed_profile_is_capped():
    fv = relaxed_profile()
    qs = [[fv.q(j, n) for n in (1, 2)] for j in range(1, 5)]
    assert qs == [[2, 13], [3, 37879], [4, 999997], [6, 999997]]
    assert all(q <= 10**6 for row in qs for q in row)
    # only denominators pinned at the cap miss their growth certificate
    assert all(c.holds or c.clamped for c in fv.certificates)
    assert {(c.level, c.j) for c in fv.certificates if c.clamped} == {(2, 3), (2, 4)}


def test_seed_violating_growth_is_rejected():
    with pytest.raises(errors.GrowthConditionError):
        build_y_vector(seed=((2, 3), (), (), ()), depth=2, profile=Profile.exact())


def test_independence_spot_check_passes():
    assert independence_spot_check(exact_profile()) is None
    assert independence_spot_check(relaxed_profile()) is None


def test_independence_spot_check_finds_relation():
    fv = build_y_vector(seed=((2,), (4,), (), ()), profile=Profile.relaxed())
    # alpha_1 and alpha_2 share the leading coefficients 2 vs 4 only; force a rational clash
    bad = type(fv)(
        (ContinuedFraction((2,)), ContinuedFraction((4,)), fv.cfs[2], fv.cfs[3]),
        1, fv.profile,
    )
    assert independence_spot_check(bad) is not None


def test_golden_ratio_best_approximation():
    cf = ContinuedFraction((1,) * 12)
    alpha = (math.sqrt(5) - 1) / 2
    for n in range(1, 11):
        lo, hi = best_approx_bounds(cf, n)
        d = abs(cf.q[n] * alpha - round(cf.q[n] * alpha))
        assert float(lo) <= d < float(hi)


def test_best_approx_needs_next_level():
    with pytest.raises(errors.InsufficientDepthError):
        best_approx_bounds(ContinuedFraction((1, 2)), 2)


def test_windows_at_one_hundred():
    c = stretch_windows(100, exact_profile())
    assert {w.key for w in c.windows} == {(1, 1), (3, 0), (4, 0)}
    assert c.case == 3


def test_windows_just_above_e_squared():
    c = stretch_windows(Fraction(74, 10), exact_profile())
    assert (1, 1) in c.triple


def test_windows_need_depth_for_small_t():
    with pytest.raises(errors.InsufficientDepthError):
        stretch_windows(Fraction(1, 2), exact_profile())


def test_window_endpoints():
    fv = relaxed_profile()
    w = window_for(fv, 2, 1)
    assert w.lo_exp == 3 and w.hi == Fraction(37879, 2)
    assert w.contains(100) and not w.contains(19000)
    assert window_for(fv, 1, 3) is None


def test_log_compare_is_exact_near_ties():
    assert log_compare(2, 7) == 1
    assert log_compare(2, 8) == -1
    assert log_compare(3, 8, base=2) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 10**6), min_size=2, max_size=12))
def test_convergent_recurrence(coeffs):
    cf = ContinuedFraction(tuple(coeffs))
    for n in range(1, cf.depth + 1):
        assert math.gcd(cf.p[n], cf.q[n]) == 1
        # consecutive convergents differ by exactly 1/(q_{n-1} q_n)
        assert abs(cf.p[n] * cf.q[n - 1] - cf.p[n - 1] * cf.q[n]) == 1
        assert cf.convergent(n) == nested_value(coeffs[:n])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=4, max_size=8))
def test_best_approximation_minimality(coeffs):
    cf = ContinuedFraction(tuple(coeffs))
    alpha = cf.value
    for n in range(1, cf.depth):
        qn = cf.q[n]
        if qn > 10**4:
            break
        d = circle_distance(qn * alpha)
        lo, hi = best_approx_bounds(cf, n)
        assert lo <= d <= hi
        # nothing below the next denominator approximates better
        assert all(circle_distance(k * alpha) >= d for k in range(1, min(cf.q[n + 1], 10**4)))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 300))
def test_window_coverage_property(log10_t):
    t = Fraction(10.0 ** log10_t)
    c = stretch_windows(t, exact_profile())
    assert len(c.windows) >= 3
    assert c.case in (1, 2, 3, 4)
    assert all(w.contains(t) for w in c.windows)
