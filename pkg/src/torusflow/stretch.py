"""Uniform stretch of Birkhoff sums along directed intervals.

A j-interval is a segment of M on which only the coordinate x_j varies.
On a good interval the dominant harmonic of phi has its sine factor bounded
below, so the derivative of the Birkhoff sum grows linearly in the number
of iterates.  This module measures that stretch, compares it with the
analytic bounds, and builds the partial partitions of M into good
intervals used to control correlations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .arithmetic import FrequencyVector, stretch_windows, window_for
from .ceiling import (
    TWO_PI,
    CeilingSpec,
    as_point,
    birkhoff_partial,
    eval_phi,
    phase,
    xfactor_theta,
)
from .errors import InfeasibleMarginError, InvalidInputError, WindowError
from .flow import hit_count

__all__ = [
    "DirectedInterval",
    "GoodnessReport",
    "good_interval_test",
    "good_interval_report",
    "good_component",
    "StretchReport",
    "stretch_quantities",
    "measured_partial_extrema",
    "stretch_lower_bound",
    "second_derivative_constant",
    "corollary_stretch_check",
    "margin_for",
    "PartialPartition",
    "build_partition",
    "atoms_intersect",
    "claim_good_decomposition_check",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DirectedInterval:
    """{z = (x, s) : x_j in [a, b], other coordinates fixed by ``base``}.

    ``base`` holds all four coordinates; its j-th entry is ignored.
    """

    j: int
    base: tuple
    s: float
    a: Fraction
    b: Fraction

    def __post_init__(self):
        if self.j not in (1, 2, 3, 4):
            raise InvalidInputError("direction must be 1..4")
        a, b = Fraction(self.a), Fraction(self.b)
        if not a < b or b - a > 1:
            raise InvalidInputError("need a < b and b - a <= 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "base", tuple(Fraction(v) for v in self.base))
        object.__setattr__(self, "s", float(self.s))

    @property
    def length(self) -> Fraction:
        return self.b - self.a

    def point(self, xj):
        x = list(self.base)
        x[self.j - 1] = Fraction(xj)
        return as_point(x)

    def to_dict(self):
        return {
            "direction": self.j,
            "endpoints": [str(self.a), str(self.b)],
            "base": [str(v) for v in self.base],
            "s": repr(self.s),
        }


# ---------------------------------------------------------------------------
# good intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GoodnessReport:
    good: bool
    too_long: bool
    component: int | None   # index of the half-period containing q*a


def good_interval_report(I: DirectedInterval, n: int, theta, fv: FrequencyVector):
    """Exact test of pi_j(I) inside W(n, theta, j).

    W is the set of x with {q x} in [theta, 1/2 - theta] or
    [1/2 + theta, 1 - theta]; each connected component of W lies in a
    half-period [m/2, (m+1)/2] of q x.
    """
    theta = Fraction(theta)
    if not 0 < theta < Fraction(1, 4):
        raise InvalidInputError("theta must lie in (0, 1/4)")
    q = fv.q(I.j, n)
    A, B = q * I.a, q * I.b
    if B - A > Fraction(1, 2) - 2 * theta:
        return GoodnessReport(False, True, None)
    m = math.floor(2 * A)
    ok = A >= Fraction(m, 2) + theta and B <= Fraction(m + 1, 2) - theta
    return GoodnessReport(ok, False, m if ok else None)


def good_interval_test(I: DirectedInterval, n: int, theta, fv: FrequencyVector) -> bool:
    return good_interval_report(I, n, theta, fv).good


def good_component(x: Fraction, q: int, theta: Fraction):
    """The component [lo, hi] of W containing x (mod 1), or None."""
    A = q * x
    m = math.floor(2 * A)
    lo = Fraction(m, 2) + theta
    hi = Fraction(m + 1, 2) - theta
    if lo <= A <= hi:
        return lo / q, hi / q
    return None


# ---------------------------------------------------------------------------
# measured stretch
# ---------------------------------------------------------------------------

def _golden_min(f, lo, hi, iters=40):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def _refine(values, offsets, f, width, keep=3):
    """Golden-section refinement around the ``keep`` smallest grid samples."""
    best = float(np.min(values))
    arg = float(offsets[int(np.argmin(values))])
    h = width / (len(offsets) - 1)
    for idx in np.argsort(values)[:keep]:
        lo = max(0.0, float(offsets[idx]) - h)
        hi = min(width, float(offsets[idx]) + h)
        x, v = _golden_min(f, lo, hi)
        if v < best:
            best, arg = v, x
    return best, arg


class _DirectionalSum:
    """Derivatives of S_m phi along x_j from a base point, as functions of
    the float offset d = x_j - a (exact phase at a)."""

    def __init__(self, I: DirectedInterval, m: int, spec: CeilingSpec):
        x0 = I.point(I.a)
        self.terms = spec.terms_for(I.j)
        self.m = m
        self.p0 = np.array([phase(t.q, x0[I.j - 1], centered=False) for t in self.terms])
        self.q = np.array([float(t.q) for t in self.terms])
        self.coef = np.array(
            [t.amplitude * xfactor_theta(m, t.shift) for t in self.terms], dtype=complex
        )

    def derivs(self, d):
        d = np.atleast_1d(np.asarray(d, dtype=float))
        if len(self.terms) == 0 or self.m == 0:
            z = np.zeros(len(d))
            return z, z
        ph = self.p0[None, :] + self.q[None, :] * d[:, None]
        e = np.exp(1j * TWO_PI * ph) * self.coef[None, :]
        w = 1j * TWO_PI * self.q[None, :]
        return (e * w).real.sum(axis=1), (e * w * w).real.sum(axis=1)


def _offset_grid(I: DirectedInterval, grid: int):
    width = float(I.length)
    return np.linspace(0.0, width, grid), width


def measured_partial_extrema(I: DirectedInterval, m: int, spec: CeilingSpec, grid=256):
    """(inf |d_j S_m phi|, sup |d_j^2 S_m phi|) over I for a fixed m."""
    ds = _DirectionalSum(I, int(m), spec)
    offsets, width = _offset_grid(I, grid)
    d1, d2 = ds.derivs(offsets)
    inf1, _ = _refine(np.abs(d1), offsets, lambda d: abs(ds.derivs(d)[0][0]), width)
    sup2, _ = _refine(-np.abs(d2), offsets, lambda d: -abs(ds.derivs(d)[1][0]), width)
    return inf1, -sup2


@dataclass(frozen=True)
class StretchReport:
    r: float
    S: float
    argmin_r: float
    resolution: float
    n_range: tuple
    infinite_samples: int


def stretch_quantities(I: DirectedInterval, t, spec: CeilingSpec, grid=256) -> StretchReport:
    """r = inf |d_j S_N phi| and S = inf (d_j S_N phi)^2 / |d_j^2 S_N phi| over I,
    where N = N(z, t) is the hitting count of each point of I.

    Samples with a vanishing second derivative contribute S = +inf.
    """
    offsets, width = _offset_grid(I, grid)
    width_f = Fraction(I.length)
    cache = {}

    def point(d):
        xj = I.a + Fraction(d) if not isinstance(d, Fraction) else I.a + d
        return I.point(min(xj, I.b))

    def values(d):
        x = point(d)
        N = hit_count(x, I.s, t, spec, guess=cache.get("guess"))
        cache["guess"] = N
        g1 = birkhoff_partial(x, N, I.j, 1, spec)
        g2 = birkhoff_partial(x, N, I.j, 2, spec)
        return N, g1, g2

    Ns, r_vals, s_vals = [], [], []
    inf_count = 0
    for i in range(grid):
        N, g1, g2 = values(width_f * i / (grid - 1))
        Ns.append(N)
        r_vals.append(abs(g1))
        if g2 == 0.0:
            s_vals.append(math.inf)
            inf_count += 1
        else:
            s_vals.append(g1 * g1 / abs(g2))
    r_vals = np.array(r_vals)
    s_vals = np.array(s_vals)

    def f_r(d):
        return abs(values(d)[1])

    def f_s(d):
        _, g1, g2 = values(d)
        return math.inf if g2 == 0.0 else g1 * g1 / abs(g2)

    r, arg = _refine(r_vals, offsets, f_r, width)
    S, _ = _refine(s_vals, offsets, f_s, width)
    return StretchReport(r, S, arg, width / (grid - 1), (min(Ns), max(Ns)), inf_count)


# ---------------------------------------------------------------------------
# analytic bounds
# ---------------------------------------------------------------------------

def second_derivative_constant(spec: CeilingSpec) -> float:
    """C = sum over all terms of (2 pi q)^2 exp(-q).

    Since |X(m)| <= m, sup |d_j^2 S_m phi| <= C m in every direction j.
    """
    return math.fsum((TWO_PI * t.q) ** 2 * t.amplitude for t in spec.active_terms)


def stretch_lower_bound(n, theta, j, m, fv: FrequencyVector, spec: CeilingSpec | None = None):
    """(theta m q exp(-q), C m) for m in the widened window of (j, n)."""
    w = window_for(fv, j, n, widened=True)
    if w is None or not w.contains(m):
        raise WindowError(f"m = {m} is outside the widened window of direction {j}, level {n}")
    q = fv.q(j, n)
    amp = math.exp(-q) if q < 745 else 0.0
    d1 = float(theta) * float(m) * q * amp if amp else 0.0
    if spec is None:
        spec = CeilingSpec.build(fv)
    d2 = second_derivative_constant(spec) * float(m)
    return d1, d2


def margin_for(t, eps) -> Fraction:
    """theta = t**(-1/4 + eps), rounded down to a Fraction.

    The float value is confirmed against a 60-digit evaluation so that the
    returned theta never exceeds the true margin.
    """
    t = float(t)
    expo = -0.25 + float(eps)
    val = t ** expo
    theta = Fraction(val)
    with mpmath.workdps(60):
        exact = mpmath.mpf(t) ** (mpmath.mpf(-1) / 4 + mpmath.mpf(float(eps)))
        while mpmath.mpf(theta.numerator) / theta.denominator > exact:
            val = math.nextafter(val, 0.0)
            theta = Fraction(val)
    return theta


def _window_level(I: DirectedInterval, t, fv: FrequencyVector):
    for n in range(0, fv.depth + 1):
        w = window_for(fv, I.j, n)
        if w is not None and w.contains(t):
            return n
    return None


def corollary_stretch_check(I: DirectedInterval, t, eps, fv: FrequencyVector,
                            spec: CeilingSpec, theta=None, n=None, grid=256):
    """Compare the measured (r, S) on I with theta t^(1-eps/100) and
    theta^2 t^(1-eps/50)."""
    if n is None:
        n = _window_level(I, t, fv)
    if n is None:
        raise WindowError(f"t = {t} lies in no window of direction {I.j}")
    w = window_for(fv, I.j, n)
    if w is None or not w.contains(t):
        raise WindowError(f"t = {t} is outside the window of direction {I.j}, level {n}")
    if theta is None:
        theta = margin_for(t, eps)
    theta = Fraction(theta)
    rep = stretch_quantities(I, t, spec, grid)
    r_thr = float(theta) * float(t) ** (1 - eps / 100)
    s_thr = float(theta) ** 2 * float(t) ** (1 - eps / 50)
    return {
        "direction": I.j,
        "level": n,
        "t": float(t),
        "theta": float(theta),
        "good": good_interval_test(I, n, theta, fv) if theta < Fraction(1, 4) else False,
        "r": rep.r,
        "S": rep.S,
        "r_threshold": r_thr,
        "S_threshold": s_thr,
        "r_pass": rep.r >= r_thr,
        "S_pass": rep.S >= s_thr,
        "hit_counts": rep.n_range,
    }


# ---------------------------------------------------------------------------
# partial partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    """Atoms of one direction: components of W(n, theta, j) over the region
    where every earlier direction sits in its excluded bands."""

    j: int
    n: int
    q: int
    measure: Fraction     # base measure covered by this stage


@dataclass(frozen=True)
class PartialPartition:
    t: float
    eps: float
    zeta: float
    theta: Fraction
    case: int
    level: int
    stages: tuple
    bad_measure: Fraction
    spec: CeilingSpec = field(repr=False, compare=False, default=None)

    @property
    def covered_measure(self) -> Fraction:
        return sum((s.measure for s in self.stages), Fraction(0))

    def in_band(self, stage: Stage, x: Fraction) -> bool:
        """x lies in an excluded (open) band of the stage's direction."""
        return good_component(x, stage.q, self.theta) is None

    def atom_containing(self, x, s):
        """The atom through (x, s) or None if (x, s) is not covered."""
        x = as_point(x)
        for stage in self.stages:
            comp = good_component(x[stage.j - 1], stage.q, self.theta)
            if comp is None:
                continue
            I = DirectedInterval(stage.j, x, s, *comp)
            if self.spec is not None and not self.fiber_admissible(I):
                return None
            return I
        return None

    def fiber_admissible(self, I: DirectedInterval, grid=33) -> bool:
        """I meets M_zeta and avoids the complement of M_{zeta/2}."""
        vals = [eval_phi(I.point(I.a + I.length * k / (grid - 1)), self.spec) for k in range(grid)]
        return I.s <= max(vals) - self.zeta and I.s <= min(vals) - self.zeta / 2

    def fiber_heights(self, I: DirectedInterval, grid=33):
        """Admissible heights for the base segment of I on a grid of step zeta/4."""
        vals = [eval_phi(I.point(I.a + I.length * k / (grid - 1)), self.spec) for k in range(grid)]
        top = min(max(vals) - self.zeta, min(vals) - self.zeta / 2)
        step = self.zeta / 4
        return [k * step for k in range(int(math.floor(top / step)) + 1)] if top >= 0 else []

    def sample_atoms(self, count, rng):
        """Atoms through random points of the base (fiber height 0)."""
        out = []
        for _ in range(count):
            x = tuple(Fraction(int(rng.integers(0, 2**32)), 2**32) for _ in range(4))
            I = self.atom_containing(x, 0.0)
            if I is not None:
                out.append(I)
        return out

    def to_dict(self, atoms=()):
        return {
            "t": self.t,
            "eps": self.eps,
            "zeta": self.zeta,
            "theta": str(self.theta),
            "case": self.case,
            "level": self.level,
            "stages": [
                {"direction": s.j, "level": s.n, "q": str(s.q), "measure": str(s.measure)}
                for s in self.stages
            ],
            "bad_measure": str(self.bad_measure),
            "bad_measure_float": float(self.bad_measure),
            "bound": 64 * self.t ** (-0.75 + 3 * self.eps),
            "atoms": [a.to_dict() for a in atoms],
        }


def build_partition(t, eps, zeta, fv: FrequencyVector, spec: CeilingSpec | None = None):
    """Three-stage partial partition of M into good intervals at time t.

    Stage k uses the k-th window of the triple covering t: its atoms are
    the components of W(n, theta, j) in the coordinate x_j, over the base
    region left uncovered by the previous stages.  Each excluded band set
    has base measure 4 theta, so the uncovered set has measure (4 theta)^3.
    """
    theta = margin_for(t, eps)
    if theta >= Fraction(1, 4):
        raise InfeasibleMarginError(
            f"theta = {float(theta):.4g} >= 1/4 at t = {t}; t is too small"
        )
    cls = stretch_windows(Fraction(t), fv)
    band = 4 * theta
    stages = []
    for k, (j, n) in enumerate(cls.triple):
        stages.append(Stage(j, n, fv.q(j, n), band**k * (1 - band)))
    return PartialPartition(
        float(t), float(eps), float(zeta), theta, cls.case, cls.level,
        tuple(stages), band**3, spec,
    )


def atoms_intersect(I1: DirectedInterval, I2: DirectedInterval) -> bool:
    """Exact test whether two directed intervals share a point of M."""
    if I1.s != I2.s:
        return False
    for k in range(4):
        in1 = I1.j == k + 1
        in2 = I2.j == k + 1
        v1, v2 = I1.base[k] % 1, I2.base[k] % 1
        if in1 and in2:
            if max(I1.a, I2.a) > min(I1.b, I2.b):
                return False
        elif in1:
            if not _arc_contains(I1.a, I1.b, v2):
                return False
        elif in2:
            if not _arc_contains(I2.a, I2.b, v1):
                return False
        elif v1 != v2:
            return False
    return True


def _arc_contains(a, b, v):
    shift = math.floor(v - a)
    return a <= v - shift <= b


def claim_good_decomposition_check(J, T, fv: FrequencyVector, n=None, theta=Fraction(1, 50)):
    """Every translate R^k J, |k| <= 10 T, has an (n, theta, 1)-good 1-fiber."""
    from .flow import canonical_level

    if n is None:
        n = canonical_level(J, fv)
        if n is None:
            raise InvalidInputError("J is not canonical; pass the level explicitly")
    a, b = J.bounds[0]
    alpha = fv.alpha(1)
    K = int(math.floor(10 * T))
    for k in range(-K, K + 1):
        shift = k * alpha
        shift -= math.floor(shift)
        I = DirectedInterval(1, J.center, 0.0, a + shift, b + shift)
        if not good_interval_test(I, n, theta, fv):
            return False
    return True
