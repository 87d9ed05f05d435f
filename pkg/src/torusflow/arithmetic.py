"""Continued fractions, Liouville frequency vectors and stretch windows.

Frequencies are handled as exact big-integer continued fractions.  Growth
conditions of the form ``q >= e**E`` are decided without evaluating the
exponential: the comparison is made between ``E`` and ``log q`` with
outward-rounded interval arithmetic, widening the precision until the sign
is certain.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import mpmath
from mpmath import iv

from .errors import (
    GrowthConditionError,
    InsufficientDepthError,
    InvalidInputError,
    ResourceLimitError,
)

__all__ = [
    "ContinuedFraction",
    "Profile",
    "Certificate",
    "FrequencyVector",
    "StretchWindow",
    "WindowClassification",
    "log_compare",
    "convergents",
    "build_y_vector",
    "best_approx_bounds",
    "circle_distance",
    "independence_spot_check",
    "stretch_windows",
    "all_windows",
    "window_for",
    "DEFAULT_EXTENSION",
]

LOG10_E = math.log10(math.e)
# Uncertified tail appended to every coordinate so that the rational
# stand-in for alpha_j is non-resonant at every certified level.
DEFAULT_EXTENSION = (10**40,)


# ---------------------------------------------------------------------------
# exact exponential comparisons
# ---------------------------------------------------------------------------

@contextmanager
def _iv_precision(bits):
    old = iv.prec
    iv.prec = bits
    try:
        yield
    finally:
        iv.prec = old


def _sign(v):
    return (v > 0) - (v < 0)


def _ln(frac: Fraction) -> float:
    return math.log(frac.numerator) - math.log(frac.denominator)


def _iv_ln(frac: Fraction):
    return iv.log(iv.mpf(frac.numerator)) - iv.log(iv.mpf(frac.denominator))


def log_compare(x, y, base=None) -> int:
    """Return the sign of ``base**x - y``, decided exactly.

    ``x`` and ``y`` may be ints, Fractions or floats (floats are taken at
    their exact binary value).  ``base`` defaults to e; otherwise it must be
    a rational number greater than one.
    """
    x = Fraction(x)
    y = Fraction(y)
    if base is not None:
        base = Fraction(base)
        if base <= 1:
            raise InvalidInputError("base must exceed 1")
    if y <= 0:
        return 1
    if x == 0:
        return _sign(1 - y)
    lb = 1.0 if base is None else _ln(base)
    ly = _ln(y)
    if abs(x) < 1e300:
        lhs = float(x) * lb
        gap = lhs - ly
        if abs(gap) > 1e-9 * (1.0 + abs(ly) + abs(lhs)):
            return _sign(gap)
    elif abs(ly) < 1e290:
        return _sign(x)

    bits = 64 + max(y.numerator.bit_length(), y.denominator.bit_length())
    bits += max(x.numerator.bit_length(), x.denominator.bit_length())
    for extra in (0, 256, 2048, 16384, 131072):
        with _iv_precision(bits + extra):
            lhs = iv.mpf(x.numerator) / iv.mpf(x.denominator)
            if base is not None:
                lhs = lhs * _iv_ln(base)
            rhs = _iv_ln(y)
            if (lhs > rhs) is True:
                return 1
            if (lhs < rhs) is True:
                return -1
    if base is not None and x.denominator == 1 and abs(x) <= 10**6:
        return _sign(base ** int(x) - y)
    raise ArithmeticError("exponential comparison undecided at maximal precision")


# ---------------------------------------------------------------------------
# continued fractions
# ---------------------------------------------------------------------------

def _check_coeffs(coeffs):
    out = []
    for a in coeffs:
        if isinstance(a, bool) or int(a) != a:
            raise InvalidInputError(f"coefficient {a!r} is not an integer")
        a = int(a)
        if a < 1:
            raise InvalidInputError(f"coefficient {a} must be >= 1")
        out.append(a)
    return tuple(out)


@dataclass(frozen=True)
class ContinuedFraction:
    """alpha = [0; a_1, a_2, ...] truncated to the stored coefficients.

    ``p[n], q[n]`` are the convergents for ``n = 0 .. depth``, with
    ``p_0 = 0, q_0 = 1, p_1 = 1, q_1 = a_1``.
    """

    coeffs: tuple
    p: tuple = field(init=False, repr=False, compare=False)
    q: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = _check_coeffs(self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        p = [0]
        q = [1]
        p_prev, q_prev = 1, 0  # p_{-1}, q_{-1}
        for a in coeffs:
            pn = a * p[-1] + p_prev
            qn = a * q[-1] + q_prev
            p_prev, q_prev = p[-1], q[-1]
            p.append(pn)
            q.append(qn)
        object.__setattr__(self, "p", tuple(p))
        object.__setattr__(self, "q", tuple(q))

    @property
    def depth(self) -> int:
        return len(self.coeffs)

    @property
    def value(self) -> Fraction:
        """Deepest convergent p_N / q_N, the rational stand-in for alpha."""
        return Fraction(self.p[-1], self.q[-1])

    def convergent(self, n) -> Fraction:
        return Fraction(self.p[n], self.q[n])

    def extend(self, more) -> "ContinuedFraction":
        return ContinuedFraction(self.coeffs + tuple(more))


def convergents(coeffs, depth=None):
    """Convergents ``(p_n, q_n)`` for ``n = 1 .. depth``.

    >>> [q for _, q in convergents([1, 1, 1, 1, 1])]
    [1, 2, 3, 5, 8]
    """
    cf = ContinuedFraction(tuple(coeffs))
    if depth is None:
        depth = cf.depth
    if not 0 <= depth <= cf.depth:
        raise InvalidInputError(f"depth {depth} outside 0..{cf.depth}")
    return [(cf.p[n], cf.q[n]) for n in range(1, depth + 1)]


def circle_distance(x: Fraction) -> Fraction:
    """||x||, the distance from x to the nearest integer."""
    r = x - math.floor(x)
    return min(r, 1 - r)


def best_approx_bounds(cf: ContinuedFraction, n: int):
    """Bounds ``1/(q_n + q_{n+1}) <= ||q_n alpha|| <= 1/q_{n+1}``.

    For an infinite expansion the upper bound is strict.  The stand-in
    ``p_N/q_N`` attains it exactly when ``N = n + 1``.
    """
    if n < 0 or n + 1 > cf.depth:
        raise InsufficientDepthError(
            f"level {n} needs q_{n + 1}; only {cf.depth} levels stored"
        )
    q_n, q_next = cf.q[n], cf.q[n + 1]
    return Fraction(1, q_n + q_next), Fraction(1, q_next)


# ---------------------------------------------------------------------------
# frequency vectors in Y
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Growth profile: exact (base e) or relaxed (rational base, capped q)."""

    kind: str = "exact"
    base: Fraction | None = None
    cap: int | None = None

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def relaxed(cls, base=Fraction(3, 2), cap=10**6):
        base = Fraction(base)
        if base <= 1:
            raise InvalidInputError("relaxed base must exceed 1")
        return cls("relaxed", base, int(cap))

    @property
    def log_base(self):
        return None if self.kind == "exact" else self.base

    def to_dict(self):
        if self.kind == "exact":
            return {"kind": "exact"}
        return {"kind": "relaxed", "base": str(self.base), "cap": str(self.cap)}

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "exact":
            return cls.exact()
        return cls.relaxed(Fraction(d["base"]), int(d["cap"]))


@dataclass(frozen=True)
class Certificate:
    """One growth inequality ``q_level^(j) >= base**exponent``."""

    level: int
    j: int
    exponent: int
    holds: bool      # with respect to the profile base
    holds_e: bool    # with respect to e (the defining inequality of Y)
    clamped: bool = False

    def to_dict(self):
        return {
            "level": self.level,
            "j": self.j,
            "exponent": str(self.exponent),
            "holds": self.holds,
            "holds_e": self.holds_e,
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["level"]), int(d["j"]), int(d["exponent"]),
                   bool(d["holds"]), bool(d["holds_e"]), bool(d.get("clamped", False)))


def _growth_exponent(qs, j, n):
    """Exponent E with q_n^(j) >= e**E required by the growth conditions.

    ``qs[j][n]`` are denominators, j = 1..4.  Level 1 of coordinate 1 is
    unconstrained (E = 0).
    """
    if j == 1:
        return (n - 1) * qs[4][n - 1] if n >= 2 else 0
    return n * qs[j - 1][n]


@dataclass(frozen=True)
class FrequencyVector:
    """Four continued fractions whose first ``depth`` levels are certified.

    Coefficients beyond ``depth`` (the extension) only refine the rational
    stand-in ``alpha_j = p_N / q_N`` and carry no growth certificate.
    """

    cfs: tuple
    depth: int
    profile: Profile
    certificates: tuple = ()
    digit_cap: int = 10_000

    def __post_init__(self):
        if len(self.cfs) != 4:
            raise InvalidInputError("a frequency vector has four coordinates")
        for cf in self.cfs:
            if cf.depth < self.depth:
                raise InvalidInputError("certified depth exceeds stored coefficients")

    def cf(self, j) -> ContinuedFraction:
        return self.cfs[j - 1]

    def q(self, j, n) -> int:
        return self.cfs[j - 1].q[n]

    def alpha(self, j) -> Fraction:
        return self.cfs[j - 1].value

    @property
    def alphas(self):
        return tuple(cf.value for cf in self.cfs)

    def stored_depth(self, j) -> int:
        return self.cfs[j - 1].depth

    @property
    def fully_certified(self) -> bool:
        return all(c.holds for c in self.certificates)

    @classmethod
    def from_coefficients(cls, coeffs, depth=None, profile=None,
                          extension=(), digit_cap=10_000):
        """Wrap explicit coefficient lists and certify the first ``depth`` levels."""
        if len(coeffs) != 4:
            raise InvalidInputError("need four coefficient lists")
        profile = profile or Profile.exact()
        cfs = tuple(ContinuedFraction(tuple(c) + tuple(extension)) for c in coeffs)
        if depth is None:
            depth = min(len(c) for c in coeffs)
        fv = cls(cfs, depth, profile, (), digit_cap)
        return cls(cfs, depth, profile, tuple(certify(fv)), digit_cap)


def certify(fv: FrequencyVector):
    """Recheck every growth inequality on the certified levels exactly."""
    qs = {j: fv.cf(j).q for j in range(1, 5)}
    out = []
    for n in range(1, fv.depth + 1):
        for j in range(1, 5):
            if j == 1 and n == 1:
                continue
            E = _growth_exponent(qs, j, n)
            q = qs[j][n]
            holds_e = log_compare(E, q) <= 0
            if fv.profile.kind == "exact":
                holds = holds_e
            else:
                holds = log_compare(E, q, fv.profile.base) <= 0
            out.append(Certificate(n, j, E, holds, holds_e))
    return out


def _log10_power(E, base):
    """log10 of base**E as a float, inf when it does not fit."""
    factor = LOG10_E if base is None else math.log10(base)
    try:
        return float(E) * factor
    except OverflowError:
        return math.inf


def _digits_text(log10_bound):
    if math.isfinite(log10_bound):
        return f"about {log10_bound:.4g}"
    return "more than 1e308"


def _least_coefficient(q1, q2, E, base):
    """Least a >= 1 with a*q1 + q2 >= base**E (base None means e)."""
    bits = int(E * (math.log2(math.e) if base is None else math.log2(base))) + 96
    with mpmath.mp.workprec(max(bits, 64)):
        target = mpmath.exp(E) if base is None else mpmath.mpf(base.numerator) ** E / mpmath.mpf(base.denominator) ** E
        est = int(mpmath.floor(target))
    a = max(1, -(-(est - q2) // q1))
    while log_compare(E, a * q1 + q2, base) > 0:
        a += 1
    while a > 1 and log_compare(E, (a - 1) * q1 + q2, base) <= 0:
        a -= 1
    return a


def build_y_vector(seed=((2,), (), (), ()), depth=1, profile=None,
                   extension=DEFAULT_EXTENSION, digit_cap=10_000):
    """Greedy-minimal frequency vector satisfying the growth conditions.

    ``seed[j-1]`` lists coefficients a_1^(j), a_2^(j), ... that override the
    greedy choice.  Each free coefficient is the least integer meeting its
    inequality.  An exact profile whose next denominator would need more
    than ``digit_cap`` decimal digits raises :class:`ResourceLimitError`.
    """
    profile = profile or Profile.exact()
    if len(seed) != 4:
        raise InvalidInputError("seed must hold four coefficient lists")
    seed = [_check_coeffs(s) for s in seed]
    if depth < 1:
        raise InvalidInputError("depth must be at least 1")
    base = profile.log_base
    coeffs = {j: [] for j in range(1, 5)}
    qs = {j: [1] for j in range(1, 5)}
    qprev = {j: 0 for j in range(1, 5)}  # q_{-1}
    certs = []

    for n in range(1, depth + 1):
        for j in range(1, 5):
            q1 = qs[j][-1]
            q2 = qs[j][-2] if len(qs[j]) >= 2 else qprev[j]
            E = _growth_exponent(qs, j, n)
            clamped = False
            if n - 1 < len(seed[j - 1]):
                a = seed[j - 1][n - 1]
            else:
                log10_bound = _log10_power(E, base)
                if profile.kind == "exact" and log10_bound > digit_cap:
                    raise ResourceLimitError(
                        f"level {n}, coordinate {j}: q >= e**E needs "
                        f"{_digits_text(log10_bound)} decimal digits, over the budget of "
                        f"{digit_cap} (E itself has {len(str(E))} digits)",
                        level=n, coordinate=j,
                    )
                if profile.kind == "relaxed" and log_compare(E, profile.cap, base) > 0:
                    a = (profile.cap - q2) // q1
                    clamped = True
                    if a < 1:
                        raise ResourceLimitError(
                            f"level {n}, coordinate {j}: no denominator fits under "
                            f"cap {profile.cap}", level=n, coordinate=j,
                        )
                else:
                    a = _least_coefficient(q1, q2, E, base)
            qn = a * q1 + q2
            if profile.kind == "relaxed" and qn > profile.cap:
                raise ResourceLimitError(
                    f"seeded q_{n}^({j}) = {qn} exceeds cap {profile.cap}",
                    level=n, coordinate=j,
                )
            if len(str(qn)) > digit_cap:
                raise ResourceLimitError(
                    f"q_{n}^({j}) exceeds the digit budget", level=n, coordinate=j
                )
            coeffs[j].append(a)
            qs[j].append(qn)
            if not (j == 1 and n == 1):
                holds_e = log_compare(E, qn) <= 0
                holds = holds_e if base is None else log_compare(E, qn, base) <= 0
                if profile.kind == "exact" and not holds:
                    raise GrowthConditionError(
                        f"seeded a_{n}^({j}) = {a} gives q = {qn} < e**{E}"
                    )
                certs.append(Certificate(n, j, E, holds, holds_e, clamped))

    cfs = tuple(
        ContinuedFraction(tuple(coeffs[j]) + tuple(extension)) for j in range(1, 5)
    )
    return FrequencyVector(cfs, depth, profile, tuple(certs), digit_cap)


def independence_spot_check(fv: FrequencyVector, height=6):
    """Search for a relation k0 + ki*alpha_i + kj*alpha_j = 0 with |k| <= height.

    Returns ``None`` when the stand-ins pass, otherwise the offending
    ``(i, j, ki, kj)`` (``i == j`` encodes a single-coordinate relation).
    """
    alphas = fv.alphas
    rng = range(-height, height + 1)
    for i in range(4):
        for k in range(1, height + 1):
            if (k * alphas[i]).denominator == 1:
                return (i + 1, i + 1, k, 0)
    for i in range(4):
        for j in range(i + 1, 4):
            for ki, kj in product(rng, rng):
                if ki == 0 or kj == 0:
                    continue
                # cross-multiplied numerators: ki*p_i*q_j + kj*p_j*q_i
                s = ki * alphas[i] + kj * alphas[j]
                if s.denominator == 1:
                    return (i + 1, j + 1, ki, kj)
    return None


# ---------------------------------------------------------------------------
# stretch windows T_n^j
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StretchWindow:
    """T_n^j = [e**(n q_n), q_{n+1}/(n+1)], or its tenfold widening.

    The upper end is either exact (``hi``) when q_{n+1} is certified, or
    only known to exceed ``e**hi_exp / (n+1)`` from the growth conditions.
    """

    j: int
    n: int
    lo_exp: int
    hi: Fraction | None = None
    hi_exp: int | None = None
    widened: bool = False

    def contains(self, t) -> bool:
        t = Fraction(t)
        scale = 10 if self.widened else 1
        if log_compare(self.lo_exp, t * scale) > 0:
            return False
        if self.hi is not None:
            return t <= self.hi * scale
        return log_compare(self.hi_exp, t * (self.n + 1) / scale) >= 0

    @property
    def lo(self) -> float:
        scale = 0.1 if self.widened else 1.0
        return math.exp(self.lo_exp) * scale if self.lo_exp < 709 else math.inf

    @property
    def hi_value(self) -> float:
        """Upper end (or certified lower bound on it) as a float."""
        scale = 10.0 if self.widened else 1.0
        if self.hi is not None:
            return float(self.hi) * scale
        if self.hi_exp < 700:
            return math.exp(self.hi_exp) / (self.n + 1) * scale
        return math.inf

    def widen(self) -> "StretchWindow":
        return StretchWindow(self.j, self.n, self.lo_exp, self.hi, self.hi_exp, True)

    @property
    def key(self):
        return (self.j, self.n)


def window_for(fv: FrequencyVector, j: int, n: int, widened=False):
    """T_n^j for the certified data, or ``None`` if its upper end is unknown."""
    if n > fv.depth:
        return None
    lo_exp = n * fv.q(j, n)
    if n + 1 <= fv.depth:
        return StretchWindow(j, n, lo_exp, Fraction(fv.q(j, n + 1), n + 1), None, widened)
    if fv.profile.kind == "exact" and n >= 1:
        # q_{n+1}^(j) >= q_{n+1}^(1) >= e**(n q_n^(4))
        return StretchWindow(j, n, lo_exp, None, n * fv.q(4, n), widened)
    return None


def all_windows(fv: FrequencyVector, widened=False):
    out = []
    for n in range(0, fv.depth + 1):
        for j in range(1, 5):
            w = window_for(fv, j, n, widened)
            if w is not None:
                out.append(w)
    return out


_CASES = {
    1: ((1, 0), (2, 0), (3, 0)),
    2: ((2, 0), (3, 0), (4, 0)),
    3: ((3, 0), (4, 0), (1, 1)),
    4: ((4, 0), (1, 1), (2, 1)),
}


@dataclass(frozen=True)
class WindowClassification:
    t: Fraction
    windows: tuple          # every certified window containing t
    case: int               # 1..4
    level: int              # n in the case statement
    triple: tuple           # ((j, n), ...) in construction order

    def __len__(self):
        return len(self.windows)


def stretch_windows(t, fv: FrequencyVector) -> WindowClassification:
    """Classify t into one of the four triple-coverage cases.

    Returns all certified windows containing ``t`` together with the case
    tag.  When several cases apply the one using the deepest windows is
    reported.
    """
    t = Fraction(t)
    if t < 0:
        raise InvalidInputError("t must be non-negative")
    windows = [w for w in all_windows(fv) if w.contains(t)]
    keys = {w.key for w in windows}
    found = None
    for n in range(0, fv.depth + 1):
        for case, pattern in _CASES.items():
            triple = tuple((j, n + dn) for j, dn in pattern)
            if all(k in keys for k in triple):
                found = (case, n, triple)
    if found is None or len(windows) < 3:
        raise InsufficientDepthError(
            f"t = {float(t):.6g} is not covered by three certified windows "
            f"at depth {fv.depth}"
        )
    case, n, triple = found
    windows.sort(key=lambda w: (w.n, w.j))
    return WindowClassification(t, tuple(windows), case, n, triple)
