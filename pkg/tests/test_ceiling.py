import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusflow import errors
from torusflow.arithmetic import FrequencyVector, Profile
from torusflow.ceiling import (
    CeilingSpec, ReparamSpec, birkhoff_brute, birkhoff_closed, birkhoff_partial,
    centered_shift, eval_Phi, eval_phi, eval_phi_partial, min_n0, phase, tail_sum,
    verify_fiber_integral, xfactor, xfactor_theta,
)
from torusflow.suites import spec_for

EXACT = spec_for("exact")
RELAXED = spec_for("relaxed")
SPECS = {"exact": EXACT, "relaxed": RELAXED}

dyadic = st.integers(0, 2**32 - 1).map(lambda k: Fraction(k, 2**32))
points = st.tuples(dyadic, dyadic, dyadic, dyadic)


def naive_phi(x, spec):
    return 1.0 + sum(t.amplitude * math.cos(2 * math.pi * float(t.q * x[t.j - 1] % 1))
                     for t in spec.terms)


def test_phi_at_origin_is_one_plus_amplitudes():
    assert eval_phi((0, 0, 0, 0), EXACT) == pytest.approx(1 + EXACT.amplitude_sum, abs=1e-15)


def test_phi_single_harmonic():
    x = (Fraction(1, 8), 0, 0, 0)
    # only the q = 2 harmonic moves: cos(pi/2) = 0
    expected = 1 + sum(t.amplitude for t in EXACT.terms if t.j != 1)
    assert eval_phi(x, EXACT) == pytest.approx(expected, abs=1e-15)


def test_phase_reduction_is_exact_for_huge_q():
    q = EXACT.fv.q(4, 1)
    x = Fraction(3, 7)
    assert phase(q, x, centered=False) == (q * 3 % 7) / 7


def test_partial_rejects_third_order():
    with pytest.raises(errors.InvalidInputError):
        eval_phi_partial((0, 0, 0, 0), 1, 3, EXACT)


def test_partial_matches_finite_difference():
    x = [Fraction(1, 10), Fraction(2, 10), Fraction(3, 10), Fraction(4, 10)]
    h = Fraction(1, 10**7)
    up = list(x); up[0] += h
    dn = list(x); dn[0] -= h
    fd = (eval_phi(up, EXACT) - eval_phi(dn, EXACT)) / (2 * float(h))
    assert eval_phi_partial(x, 1, 1, EXACT) == pytest.approx(fd, rel=1e-6)


def test_positivity_margin():
    assert EXACT.margin == pytest.approx(1 - 0.1356, abs=1e-4)
    assert RELAXED.margin == pytest.approx(0.794, abs=1e-3)


def test_xfactor_trivial_counts():
    theta = Fraction(1, 1000)
    assert xfactor_theta(0, theta) == 0
    assert xfactor_theta(1, theta) == pytest.approx(1)


def test_xfactor_matches_geometric_sum():
    theta = Fraction(3, 1000)
    direct = sum(cmath.exp(2j * math.pi * k * float(theta)) for k in range(37))
    assert xfactor_theta(37, theta) == pytest.approx(direct, abs=1e-12)


def test_xfactor_resonance():
    with pytest.raises(ZeroDivisionError):
        xfactor_theta(5, Fraction(2))


def test_xfactor_tiny_shift_is_linear():
    # the last-level shift of the exact profile underflows a float
    theta = EXACT.terms[-1].shift
    assert abs(xfactor(10, 1, 4, EXACT.fv)) == pytest.approx(10, rel=1e-12)
    assert theta != 0


def test_centered_shift_identity():
    for t in EXACT.terms:
        theta, l = centered_shift(t.q, EXACT.fv.alpha(t.j))
        assert t.q * EXACT.fv.alpha(t.j) + l == theta
        assert abs(theta) <= Fraction(1, 2)


def test_birkhoff_small_counts():
    x = (Fraction(1, 3), Fraction(1, 5), Fraction(1, 7), Fraction(1, 11))
    assert birkhoff_closed(x, 0, EXACT) == 0
    assert birkhoff_closed(x, 1, EXACT) == eval_phi(x, EXACT)
    a = EXACT.fv.alphas
    x1 = tuple(xi + ai for xi, ai in zip(x, a))
    assert birkhoff_brute(x, 2, EXACT) == pytest.approx(eval_phi(x, EXACT) + eval_phi(x1, EXACT))


def test_birkhoff_negative_sign_convention():
    x = (Fraction(1, 3), Fraction(1, 5), Fraction(1, 7), Fraction(1, 11))
    a = RELAXED.fv.alphas
    xm = tuple(xi - ai for xi, ai in zip(x, a))
    assert birkhoff_brute(x, -1, RELAXED) == pytest.approx(-eval_phi(xm, RELAXED))
    assert birkhoff_closed(x, -1, RELAXED) == pytest.approx(-eval_phi(xm, RELAXED))


def test_birkhoff_long_sum_matches_brute():
    rng = np.random.default_rng(7)
    for spec in SPECS.values():
        x = tuple(Fraction(int(v), 2**32) for v in rng.integers(0, 2**32, 4))
        assert abs(birkhoff_closed(x, 10**4, spec) - birkhoff_brute(x, 10**4, spec)) <= 1e-5


def test_birkhoff_partial_finite_difference():
    x = [Fraction(1, 10), Fraction(2, 10), Fraction(3, 10), Fraction(4, 10)]
    h = Fraction(1, 10**8)
    up = list(x); up[1] += h
    dn = list(x); dn[1] -= h
    fd = (birkhoff_closed(up, 50, RELAXED) - birkhoff_closed(dn, 50, RELAXED)) / (2 * float(h))
    assert birkhoff_partial(x, 50, 2, 1, RELAXED) == pytest.approx(fd, rel=1e-5)


def test_min_n0_exact_profile():
    assert min_n0(EXACT.fv) == 1
    assert tail_sum(EXACT.fv, 1, 1) == pytest.approx(0.1356, abs=1e-4)


def test_min_n0_skips_tiny_denominators():
    fv = FrequencyVector.from_coefficients([(1, 1), (1, 1), (1, 1), (1, 1)], depth=2,
                                           profile=Profile.relaxed(), extension=(10**40,))
    assert tail_sum(fv, 1, 2) > 1
    assert min_n0(fv) == 2


def test_invalid_spec_without_certificate():
    fv = FrequencyVector.from_coefficients([(1,), (1,), (1,), (1,)], depth=1,
                                           profile=Profile.relaxed(), extension=(10**40,))
    with pytest.raises(errors.InvalidSpecError):
        CeilingSpec.build(fv, n0=1)


def test_Phi_without_amplitudes_is_one():
    rspec = ReparamSpec.build(RELAXED)
    empty = ReparamSpec(RELAXED, ())
    assert eval_Phi((0.1, 0.2, 0.3, 0.4, 0.5), empty) == 1.0
    assert eval_Phi((0, 0, 0, 0, 0), rspec) > 0


def test_Phi_single_term():
    rspec = ReparamSpec.build(RELAXED)
    t = rspec.terms[0]
    one = ReparamSpec(RELAXED, (t,))
    x = Fraction(1, 7)
    expected = 1 + (t.d * cmath.exp(2j * math.pi * t.q * float(x))).real
    assert eval_Phi((x, 0, 0, 0, 0), one) == pytest.approx(expected, abs=1e-14)


def test_fiber_identity_trivial_and_single_term():
    rspec = ReparamSpec.build(RELAXED)
    zero = ReparamSpec(CeilingSpec(RELAXED.fv, 1, 2, ()), ())
    assert verify_fiber_integral((0.1, 0.2, 0.3, 0.4), zero) == 0.0
    single_base = CeilingSpec(RELAXED.fv, 1, 2, RELAXED.terms[:1])
    single = ReparamSpec(single_base, rspec.terms[:1])
    assert verify_fiber_integral((0.1, 0.2, 0.3, 0.4), single) < 1e-10


@settings(max_examples=50, deadline=None)
@given(points, st.sampled_from(sorted(SPECS)))
def test_phi_matches_naive_sum(x, kind):
    spec = SPECS[kind]
    assert eval_phi(x, spec) == pytest.approx(naive_phi(x, spec), abs=1e-12)
    assert eval_phi(x, spec) > 0


@settings(max_examples=60, deadline=None)
@given(points, st.integers(-10**4, 10**4), st.sampled_from(sorted(SPECS)))
def test_closed_form_matches_brute_force(x, m, kind):
    spec = SPECS[kind]
    err = abs(birkhoff_closed(x, m, spec) - birkhoff_brute(x, m, spec))
    assert err <= 1e-9 * max(1, abs(m))


@settings(max_examples=100, deadline=None)
@given(points, st.integers(-10**4, 10**4), st.integers(-10**4, 10**4),
       st.sampled_from(sorted(SPECS)))
def test_cocycle_identity(x, m, k, kind):
    spec = SPECS[kind]
    xm = tuple(xi + m * a for xi, a in zip(x, spec.fv.alphas))
    lhs = birkhoff_closed(x, m + k, spec)
    rhs = birkhoff_closed(x, m, spec) + birkhoff_closed(xm, k, spec)
    assert lhs == pytest.approx(rhs, abs=1e-9 * max(1, abs(m) + abs(k)))


@settings(max_examples=100, deadline=None)
@given(points, st.integers(1, 10**4), st.sampled_from(sorted(SPECS)))
def test_mean_value_bound(x, m, kind):
    spec = SPECS[kind]
    bound = sum(t.amplitude * abs(xfactor(m, t.n, t.j, spec.fv)) for t in spec.active_terms)
    assert abs(birkhoff_closed(x, m, spec) - m) <= bound + 1e-9 * m


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**4), st.integers(1, 4), st.sampled_from(sorted(SPECS)))
def test_sine_factor_bounds(m, j, kind):
    spec = SPECS[kind]
    fv = spec.fv
    for n in range(1, fv.depth + 1):
        X = abs(xfactor(m, n, j, fv))
        assert X <= m * (1 + 1e-12)
        if m < fv.q(j, n):
            assert X <= fv.q(j, n)
        if n < fv.depth and 2 * m <= fv.q(j, n + 1):
            assert X >= 2 * m / math.pi * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(points)
def test_fiber_identity_property(x):
    assert verify_fiber_integral(x, ReparamSpec.build(RELAXED)) < 1e-8
