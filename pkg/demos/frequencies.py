"""Build both frequency profiles and show which stretch windows cover a few times.

    python3 demos/frequencies.py
"""
from fractions import Fraction

from torusflow import Profile, build_y_vector, stretch_windows
from torusflow.errors import ResourceLimitError

exact = build_y_vector()
print("exact profile, level 1 denominators:")
for j in range(1, 5):
    q = exact.q(j, 1)
    text = str(q) if q < 10**12 else f"{str(q)[:12]}... ({len(str(q))} digits)"
    print(f"  q^({j}) = {text}")

try:
    build_y_vector(depth=2)
except ResourceLimitError as exc:
    print(f"\nexact level 2 is out of reach: {exc}")

relaxed = build_y_vector(depth=2, profile=Profile.relaxed())
print("\nrelaxed profile (base 3/2, cap 1e6):")
for n in (1, 2):
    print(f"  level {n}:", [relaxed.q(j, n) for j in range(1, 5)])

print("\nwindows containing t (exact profile):")
for t in (Fraction(74, 10), 100, 10**4, 10**50):
    c = stretch_windows(t, exact)
    keys = ", ".join(f"(j={j}, n={n})" for j, n in (w.key for w in c.windows))
    print(f"  t = {float(t):<8.3g} case {c.case}: {keys}")
