"""Shear along good and bad intervals.

On an interval where the dominant harmonic's sine stays away from zero the
derivative of the Birkhoff sum grows linearly with the number of returns.
Across a zero of that sine it does not.

    python3 demos/stretch.py
"""
from fractions import Fraction

from torusflow import CeilingSpec, build_y_vector
from torusflow.stretch import DirectedInterval, good_interval_test, stretch_quantities

fv = build_y_vector()
spec = CeilingSpec.build(fv)
base = (0, Fraction(1, 5), Fraction(1, 7), Fraction(1, 11))
theta = Fraction(1, 10)

intervals = {
    "good [0.06, 0.09]": DirectedInterval(1, base, 0.0, Fraction(6, 100), Fraction(9, 100)),
    "bad  [0.23, 0.27]": DirectedInterval(1, base, 0.0, Fraction(23, 100), Fraction(27, 100)),
}
print(f"{'interval':<18} {'good':>5} {'t':>7} {'r':>12} {'r/t':>8}")
for label, I in intervals.items():
    good = good_interval_test(I, 1, theta, fv)
    for t in (100, 1000, 10000):
        rep = stretch_quantities(I, t, spec)
        print(f"{label:<18} {good!s:>5} {t:>7} {rep.r:>12.4g} {rep.r / t:>8.3f}")
