import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusflow import errors
from torusflow.ceiling import birkhoff_partial
from torusflow.flow import canonical_box
from torusflow.stretch import (
    DirectedInterval, atoms_intersect, build_partition, claim_good_decomposition_check,
    corollary_stretch_check, good_interval_report, good_interval_test, margin_for,
    measured_partial_extrema, stretch_lower_bound, stretch_quantities,
)
from torusflow.suites import spec_for

EXACT = spec_for("exact")
FV = EXACT.fv
BASE = (0, Fraction(1, 5), Fraction(1, 7), Fraction(1, 11))


def interval(j, a, b, base=BASE, s=0.0):
    return DirectedInterval(j, base, s, Fraction(a), Fraction(b))


def test_good_interval_example():
    # q = 8: {8x} over [0.02, 0.04] is [0.16, 0.32], inside [0.05, 0.45]
    I = interval(2, Fraction(2, 100), Fraction(4, 100))
    assert good_interval_test(I, 1, Fraction(5, 100), FV)


def test_interval_through_rational_point_is_bad():
    for theta in (Fraction(1, 1000), Fraction(1, 10)):
        assert not good_interval_test(interval(2, Fraction(1, 10), Fraction(3, 20)), 1, theta, FV)


def test_interval_through_half_period_is_bad():
    # {8x} = 1/2 at x = 1/16
    assert not good_interval_test(interval(2, Fraction(6, 100), Fraction(7, 100)), 1,
                                  Fraction(1, 1000), FV)


def test_long_interval_flagged():
    rep = good_interval_report(interval(2, 0, Fraction(1, 10)), 1, Fraction(1, 20), FV)
    assert not rep.good and rep.too_long


def test_theta_range_enforced():
    with pytest.raises(errors.InvalidInputError):
        good_interval_test(interval(2, 0, Fraction(1, 100)), 1, Fraction(1, 4), FV)


def test_stretch_with_constant_hit_count():
    I = interval(1, Fraction(6, 100), Fraction(6, 100) + Fraction(1, 10**5))
    rep = stretch_quantities(I, 1000, EXACT)
    assert rep.n_range[0] == rep.n_range[1]
    m = rep.n_range[0]
    grid = [abs(birkhoff_partial(I.point(I.a + I.length * k / 512), m, 1, 1, EXACT))
            for k in range(513)]
    assert rep.r == pytest.approx(min(grid), rel=1e-3)


def test_stretch_vanishes_near_a_zero():
    # the dominant sine sin(4 pi x) vanishes at x = 1/4
    rep = stretch_quantities(interval(1, Fraction(23, 100), Fraction(27, 100)), 1000, EXACT)
    assert rep.r < 1e-6


def test_stretch_grid_refinement_is_stable():
    I = interval(1, Fraction(7, 100), Fraction(15, 100))
    coarse = stretch_quantities(I, 1000, EXACT, grid=256).r
    fine = stretch_quantities(I, 1000, EXACT, grid=512).r
    assert abs(fine - coarse) < 0.05 * fine


def test_stretch_lower_bound_formula():
    theta = Fraction(1, 50)
    d1, d2 = stretch_lower_bound(1, theta, 1, 1000, FV, EXACT)
    assert d1 == pytest.approx(1000 * 2 * float(theta) / math.e**2)
    assert d2 > 0
    with pytest.raises(errors.WindowError):
        stretch_lower_bound(1, theta, 1, 0, FV, EXACT)


def test_measured_stretch_meets_bounds():
    rng = np.random.default_rng(5)
    theta = Fraction(1, 10)
    for _ in range(20):
        c = Fraction(int(rng.integers(0, 10**6)), 10**6)
        a = Fraction(3, 40) + c * Fraction(1, 20)
        I = interval(1, a, a + Fraction(1, 100))
        if not good_interval_test(I, 1, theta, FV):
            continue
        m = int(10 ** rng.uniform(1, 5))
        try:
            d1, d2 = stretch_lower_bound(1, theta, 1, m, FV, EXACT)
        except errors.WindowError:
            continue
        inf1, sup2 = measured_partial_extrema(I, m, EXACT)
        assert inf1 >= d1
        assert sup2 <= d2


def test_corollary_check_on_good_interval():
    I = interval(1, Fraction(6, 100), Fraction(9, 100))
    rep = corollary_stretch_check(I, 1000, 0.01, FV, EXACT, theta=Fraction(1, 10))
    assert rep["good"] and rep["r_pass"] and rep["S_pass"]


def test_corollary_check_records_failure():
    I = interval(1, Fraction(23, 100), Fraction(27, 100))
    rep = corollary_stretch_check(I, 1000, 0.01, FV, EXACT, theta=Fraction(1, 10))
    assert not rep["good"] and not rep["r_pass"]


def test_corollary_check_window_guard():
    I = interval(1, Fraction(6, 100), Fraction(9, 100))
    with pytest.raises(errors.WindowError):
        corollary_stretch_check(I, Fraction(1, 2), 0.01, FV, EXACT)


def test_margin_rounds_down():
    theta = margin_for(1e4, 0.01)
    assert float(theta) <= 1e4 ** (-0.24)
    assert float(theta) == pytest.approx(1e4 ** (-0.24), rel=1e-15)


@pytest.mark.parametrize("t", [1e3, 1e4, 1e5])
def test_partition_bad_measure(t):
    eps = 0.01
    part = build_partition(t, eps, 0.05, FV, EXACT)
    theta = part.theta
    assert part.bad_measure == (4 * theta) ** 3
    ratio = float(part.bad_measure) / (64 * t ** (-0.75 + 3 * eps))
    assert 1 / 8 <= ratio <= 1
    # atoms plus bad set cover the base
    assert abs(float(part.covered_measure + part.bad_measure) - 1) < 1e-12


def test_partition_infeasible_margin():
    with pytest.raises(errors.InfeasibleMarginError):
        build_partition(1.0, 0.01, 0.05, FV, EXACT)


def test_partition_atoms_are_good_and_disjoint():
    part = build_partition(1e4, 0.01, 0.05, FV, EXACT)
    atoms = part.sample_atoms(40, np.random.default_rng(2))
    assert atoms
    levels = {s.j: s.n for s in part.stages}
    for I in atoms:
        assert good_interval_test(I, levels[I.j], part.theta, FV)
    for i, I1 in enumerate(atoms):
        for I2 in atoms[i + 1:]:
            if I1 != I2:
                assert not atoms_intersect(I1, I2)


def test_claim_decomposition():
    J = canonical_box(FV, 1)
    assert claim_good_decomposition_check(J, 4, FV)
    assert claim_good_decomposition_check(J, 0, FV)
    assert not claim_good_decomposition_check(J.widened(4), 4, FV, n=1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 10**4), st.integers(1, 249), st.integers(1, 249),
       st.integers(1, 2))
def test_goodness_monotone_in_theta(a, length, th1, th2, j):
    lo, hi = sorted((th1, th2))
    I = interval(j, Fraction(a, 10**6), Fraction(a, 10**6) + Fraction(length, 10**6))
    if good_interval_test(I, 1, Fraction(hi, 1000), FV):
        assert good_interval_test(I, 1, Fraction(lo, 1000), FV)
