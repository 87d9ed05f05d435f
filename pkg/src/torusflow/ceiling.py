"""The analytic ceiling phi on T^4, its Birkhoff sums and the lift Phi on T^5.

    phi(x) = 1 + sum_{j, n >= n0} cos(2 pi q_n^(j) x_j) exp(-q_n^(j))

Points of the torus are tuples of four Fractions.  Every phase ``{q x}`` is
reduced exactly in integer arithmetic before any trigonometric call, which
keeps the evaluation meaningful for denominators with thousands of digits.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .arithmetic import FrequencyVector
from .errors import InvalidInputError, InvalidSpecError, ResonanceError

__all__ = [
    "CeilingTerm",
    "CeilingSpec",
    "ReparamTerm",
    "ReparamSpec",
    "as_point",
    "phase",
    "centered_shift",
    "eval_phi",
    "eval_phi_partial",
    "xfactor",
    "xfactor_theta",
    "birkhoff_closed",
    "birkhoff_partial",
    "birkhoff_brute",
    "eval_Phi",
    "fiber_integral",
    "verify_fiber_integral",
    "min_n0",
    "tail_sum",
]

TWO_PI = 2.0 * math.pi
# exp(-q) below this is stored as an exact zero
UNDERFLOW = 1e-300
Q_UNDERFLOW = -math.log(UNDERFLOW)


def _amplitude(q: int) -> float:
    return math.exp(-q) if q < Q_UNDERFLOW else 0.0


def as_point(x, dim=4):
    """Coerce a sequence of numbers to a tuple of Fractions reduced mod 1."""
    try:
        pts = tuple(Fraction(v) for v in x)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"cannot read point {x!r}") from exc
    if len(pts) != dim:
        raise InvalidInputError(f"expected {dim} coordinates, got {len(pts)}")
    return tuple(v - math.floor(v) for v in pts)


def phase(q: int, x: Fraction, centered=True) -> float:
    """{q x} as a float, reduced exactly; centered to [-1/2, 1/2) by default."""
    den = x.denominator
    r = (q * x.numerator) % den
    if centered and 2 * r >= den:
        r -= den
    return r / den


def centered_shift(q: int, alpha: Fraction):
    """Return (theta, l) with q*alpha + l = theta and |theta| <= 1/2, l integer."""
    num = q * alpha.numerator
    den = alpha.denominator
    r = num % den
    if 2 * r == den:
        raise InvalidSpecError(f"q*alpha = {num}/{den} is a half-integer; nearest integer tied")
    if 2 * r > den:
        r -= den
    theta = Fraction(r, den)
    l = -((num - r) // den)
    return theta, l


@dataclass(frozen=True)
class CeilingTerm:
    """One harmonic cos(2 pi q x_j) exp(-q) of the series."""

    j: int
    n: int
    q: int
    amplitude: float
    shift: Fraction   # centered q*alpha_j mod 1

    @property
    def active(self) -> bool:
        return self.amplitude != 0.0


@dataclass(frozen=True)
class CeilingSpec:
    """Truncated coefficient table for phi.

    Terms cover directions 1..4 and levels ``n0 .. nmax`` of the certified
    data.  Amplitudes that underflow are stored as exact zeros but the terms
    are retained.
    """

    fv: FrequencyVector
    n0: int
    nmax: int
    terms: tuple

    @classmethod
    def build(cls, fv: FrequencyVector, n0=None, nmax=None):
        if nmax is None:
            nmax = fv.depth
        if nmax > fv.depth:
            raise InvalidInputError(f"nmax {nmax} exceeds certified depth {fv.depth}")
        if n0 is None:
            n0 = min_n0(fv, nmax)
        if n0 < 1:
            raise InvalidInputError("n0 must be at least 1")
        terms = []
        for n in range(n0, nmax + 1):
            for j in range(1, 5):
                q = fv.q(j, n)
                theta, _ = centered_shift(q, fv.alpha(j))
                terms.append(CeilingTerm(j, n, q, _amplitude(q), theta))
        spec = cls(fv, n0, nmax, tuple(terms))
        spec.check()
        return spec

    def check(self):
        if self.margin <= 0:
            raise InvalidSpecError(
                f"positivity certificate fails: amplitude sum {self.amplitude_sum:.6g} >= 1"
            )
        return self

    @property
    def amplitude_sum(self) -> float:
        return math.fsum(t.amplitude for t in self.terms)

    @property
    def margin(self) -> float:
        """1 - sum of amplitudes, a lower bound for inf phi."""
        return 1.0 - self.amplitude_sum

    @property
    def sup_bound(self) -> float:
        return 1.0 + self.amplitude_sum

    @property
    def active_terms(self):
        return tuple(t for t in self.terms if t.active)

    def terms_for(self, j):
        return tuple(t for t in self.active_terms if t.j == j)

    def subset(self, keep):
        """Spec restricted to terms satisfying the predicate ``keep``."""
        return replace(self, terms=tuple(t for t in self.terms if keep(t)))

    def table(self):
        """Numpy view of the active terms for vectorized evaluation."""
        act = self.active_terms
        return {
            "j": np.array([t.j - 1 for t in act], dtype=np.int64),
            "q": [t.q for t in act],
            "amp": np.array([t.amplitude for t in act]),
            "shift": [t.shift for t in act],
        }


# ---------------------------------------------------------------------------
# phi and its derivatives
# ---------------------------------------------------------------------------

def eval_phi(x, spec: CeilingSpec) -> float:
    """phi(x), with each phase {q x_j} reduced exactly."""
    x = as_point(x)
    vals = [t.amplitude * math.cos(TWO_PI * phase(t.q, x[t.j - 1])) for t in spec.active_terms]
    return math.fsum([1.0] + vals)


def eval_phi_partial(x, j, order, spec: CeilingSpec) -> float:
    """Term-wise derivative of phi of the given order in direction j."""
    if order not in (1, 2):
        raise InvalidInputError(f"derivative order {order} unsupported (use 1 or 2)")
    x = as_point(x)
    vals = []
    for t in spec.terms_for(j):
        w = TWO_PI * t.q
        ph = TWO_PI * phase(t.q, x[j - 1])
        if order == 1:
            vals.append(-w * t.amplitude * math.sin(ph))
        else:
            vals.append(-w * w * t.amplitude * math.cos(ph))
    return math.fsum(vals)


# ---------------------------------------------------------------------------
# Birkhoff sums
# ---------------------------------------------------------------------------

_TINY = Fraction(1, 10**100)


def _mod2(v: Fraction) -> float:
    """v reduced to (-1, 1] as a float, exactly before rounding."""
    r = v - 2 * math.floor((v + 1) / 2)
    if r == -1:
        r = Fraction(1)
    return float(r)


def _reduce2(v: Fraction) -> Fraction:
    r = v - 2 * math.floor((v + 1) / 2)
    return Fraction(1) if r == -1 else r


def xfactor_theta(m: int, theta: Fraction) -> complex:
    """(1 - e(m theta)) / (1 - e(theta)) with e(u) = exp(2 pi i u).

    Evaluated as exp(i pi (m-1) theta) sin(pi m theta) / sin(pi theta)
    after reducing (m-1) theta and m theta exactly mod 2.
    """
    if theta.denominator == 1:
        raise ZeroDivisionError("resonant shift")
    rot = cmath.exp(1j * math.pi * _mod2((m - 1) * theta))
    r = _reduce2(m * theta)
    if abs(theta) < _TINY:
        # sin(pi theta) underflows; use sin u = u (1 + O(u^2)) exactly
        if abs(r) < _TINY:
            return rot * float(r / theta)
        return rot * float(Fraction(math.sin(math.pi * float(r))) / (Fraction(math.pi) * theta))
    return rot * math.sin(math.pi * float(r)) / math.sin(math.pi * float(theta))


def xfactor(m: int, n: int, j: int, fv: FrequencyVector) -> complex:
    """X_j(m, n) for the rational stand-in alpha_j."""
    m = int(m)
    theta, _ = centered_shift(fv.q(j, n), fv.alpha(j))
    if theta == 0:
        raise ResonanceError(j, n)
    return xfactor_theta(m, theta)


def _term_x(t: CeilingTerm, m: int) -> complex:
    if t.shift == 0:
        raise ResonanceError(t.j, t.n)
    return xfactor_theta(m, t.shift)


def birkhoff_closed(x, m, spec: CeilingSpec) -> float:
    """S_m phi(x) = m + Re sum A X(m) e(q x_j), valid for every integer m."""
    x = as_point(x)
    m = int(m)
    if m == 0:
        return 0.0
    if m == 1:
        return eval_phi(x, spec)
    vals = [float(m)]
    for t in spec.active_terms:
        e = cmath.exp(1j * TWO_PI * phase(t.q, x[t.j - 1]))
        vals.append((t.amplitude * _term_x(t, m) * e).real)
    return math.fsum(vals)


def birkhoff_partial(x, m, j, order, spec: CeilingSpec) -> float:
    """Derivative of S_m phi in direction j, of order 1 or 2."""
    if order not in (1, 2):
        raise InvalidInputError(f"derivative order {order} unsupported (use 1 or 2)")
    x = as_point(x)
    m = int(m)
    if m == 0:
        return 0.0
    vals = []
    for t in spec.terms_for(j):
        e = cmath.exp(1j * TWO_PI * phase(t.q, x[j - 1]))
        vals.append((t.amplitude * _term_x(t, m) * (1j * TWO_PI * t.q) ** order * e).real)
    return math.fsum(vals)


def birkhoff_brute(x, m, spec: CeilingSpec) -> float:
    """Literal Birkhoff sum along the exact rational orbit.

    For m >= 0 this is phi(x) + ... + phi(x + (m-1) alpha); for m < 0 it is
    -(phi(x + m alpha) + ... + phi(x - alpha)).
    """
    x = as_point(x)
    m = int(m)
    if m == 0:
        return 0.0
    lo, hi, sign = (0, m, 1.0) if m > 0 else (m, 0, -1.0)
    ks = np.arange(lo, hi, dtype=np.int64).astype(object)
    parts = [float(hi - lo)]
    alphas = spec.fv.alphas
    for t in spec.active_terms:
        xj = x[t.j - 1]
        a = alphas[t.j - 1]
        den = xj.denominator * a.denominator
        start = (t.q * xj.numerator * a.denominator) % den
        step = (t.q * a.numerator * xj.denominator) % den
        res = (start + ks * step) % den
        ph = np.array([r / den for r in res], dtype=float)
        parts.extend((t.amplitude * np.cos(TWO_PI * ph)).tolist())
    return sign * math.fsum(parts)


def tail_sum(fv: FrequencyVector, n0: int, nmax: int) -> float:
    return math.fsum(
        _amplitude(fv.q(j, n)) for n in range(n0, nmax + 1) for j in range(1, 5)
    )


def min_n0(fv: FrequencyVector, nmax=None) -> int:
    """Least n0 >= 1 whose amplitude tail over levels n0..nmax is below 1."""
    if nmax is None:
        nmax = fv.depth
    n0 = 1
    while n0 <= nmax and tail_sum(fv, n0, nmax) >= 1.0 - 1e-12:
        n0 += 1
    return n0


# ---------------------------------------------------------------------------
# the lift Phi on T^5
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReparamTerm:
    j: int
    n: int
    q: int
    l: int
    beta: Fraction   # q alpha_j + l
    d: complex


def _d_coefficient(beta: Fraction, amplitude: float) -> complex:
    if beta == 0 or amplitude == 0.0:
        return complex(amplitude)
    b = float(beta)
    return cmath.exp(-1j * math.pi * b) * (math.pi * b / math.sin(math.pi * b)) * amplitude


@dataclass(frozen=True)
class ReparamSpec:
    """Coefficients l_n^(j), d_n^(j) of Phi(x, x5) = 1 + Re sum d e(q x_j + l x5)."""

    base: CeilingSpec
    terms: tuple

    @classmethod
    def build(cls, base: CeilingSpec):
        terms = []
        for t in base.terms:
            _, l = centered_shift(t.q, base.fv.alpha(t.j))
            terms.append(ReparamTerm(t.j, t.n, t.q, l, t.shift, _d_coefficient(t.shift, t.amplitude)))
        spec = cls(base, tuple(terms))
        spec.check()
        return spec

    @property
    def abs_sum(self) -> float:
        return math.fsum(abs(t.d) for t in self.terms)

    def check(self):
        if self.abs_sum >= 1.0:
            raise InvalidSpecError(
                f"Phi positivity fails: sum |d| = {self.abs_sum:.6g} >= 1"
            )
        return self

    @property
    def active_terms(self):
        return tuple(t for t in self.terms if t.d != 0)


def eval_Phi(x5, rspec: ReparamSpec) -> float:
    """Phi at a point of T^5 with exact phase reduction."""
    x5 = as_point(x5, dim=5)
    rspec.check()
    vals = [1.0]
    for t in rspec.active_terms:
        ph = t.q * x5[t.j - 1] + t.l * x5[4]
        ph -= math.floor(ph)
        vals.append((t.d * cmath.exp(1j * TWO_PI * float(ph))).real)
    return math.fsum(vals)


def _fiber_integrand(x, rspec: ReparamSpec, s: np.ndarray) -> np.ndarray:
    """Phi(x + s alpha, s) on an array of s.

    The phase of a term is q (x_j + s alpha_j) + l s = {q x_j} + s beta,
    with {q x_j} reduced exactly.
    """
    out = np.ones_like(s)
    for t in rspec.active_terms:
        p0 = phase(t.q, x[t.j - 1])
        ph = p0 + s * float(t.beta)
        out += (t.d * np.exp(1j * TWO_PI * ph)).real
    return out


def fiber_integral(x, rspec: ReparamSpec, tol=1e-10, start=64, max_points=2**22):
    """Composite midpoint rule for int_0^1 Phi(x + s alpha, s) ds.

    The number of nodes doubles until two successive values agree to ``tol``.
    Returns (value, nodes).
    """
    x = as_point(x)
    n = start
    prev = None
    while True:
        s = (np.arange(n) + 0.5) / n
        val = math.fsum(_fiber_integrand(x, rspec, s)) / n
        if prev is not None and abs(val - prev) < tol:
            return val, n
        if n >= max_points:
            return val, n
        prev = val
        n *= 2


def verify_fiber_integral(x, rspec: ReparamSpec, tol=1e-10) -> float:
    """|phi(x) - int_0^1 Phi(x + s alpha, s) ds|, i.e. the quadrature error."""
    val, _ = fiber_integral(x, rspec, tol)
    return abs(eval_phi(x, rspec.base) - val)
