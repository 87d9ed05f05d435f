"""The special flow over the rotation R_alpha under the ceiling phi.

A point of the phase space M = {(x, s) : 0 <= s < phi(x)} moves up the
fiber at unit speed and jumps from (x, phi(x)) to (x + alpha, 0).  After
time t it sits at (x + N alpha, t + s - S_N phi(x)) where N is the hitting
count: the largest n with S_n phi(x) <= t + s.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .arithmetic import FrequencyVector
from .ceiling import CeilingSpec, as_point, birkhoff_closed, eval_phi
from .errors import (
    BoundaryTieError,
    InvalidInputError,
    UnsupportedShapeError,
)
from ._batch import TIE_RTOL, _frac_mul, _split

__all__ = [
    "FlowPoint",
    "MultiInterval",
    "FlowBox",
    "hit_count",
    "hit_count_incremental",
    "flow_map",
    "trajectory",
    "in_M",
    "in_M_zeta",
    "canonical_box",
    "return_time_lower_bound",
    "first_return_index",
    "make_flow_box",
    "stay_in_zeta_times",
    "intervals_from_mask",
]


@dataclass(frozen=True)
class FlowPoint:
    """(x, s) with x an exact point of T^4 and s the fiber height."""

    x: tuple
    s: float

    @classmethod
    def make(cls, x, s, spec: CeilingSpec | None = None):
        p = cls(as_point(x), float(s))
        if spec is not None and not in_M(p, spec):
            raise InvalidInputError(f"fiber height {s} outside [0, phi(x))")
        return p

    def to_dict(self):
        return {"x": [str(v) for v in self.x], "s": repr(self.s)}

    @classmethod
    def from_dict(cls, d):
        return cls(as_point(d["x"]), float(d["s"]))


def in_M(p: FlowPoint, spec: CeilingSpec) -> bool:
    return 0.0 <= p.s < eval_phi(p.x, spec)


def in_M_zeta(p: FlowPoint, zeta, spec: CeilingSpec) -> bool:
    """0 <= s <= phi(x) - zeta."""
    if zeta <= 0:
        raise InvalidInputError("zeta must be positive")
    if zeta >= spec.margin:
        warnings.warn(
            f"zeta = {zeta} is not below the certified lower bound {spec.margin:.6g} "
            "of phi; M_zeta misses whole fibers",
            RuntimeWarning,
            stacklevel=2,
        )
    return 0.0 <= p.s <= eval_phi(p.x, spec) - zeta


# ---------------------------------------------------------------------------
# hitting counts and the flow map
# ---------------------------------------------------------------------------

def _check_tie(tau, S, k):
    gap = abs(tau - S)
    if 0 < gap <= TIE_RTOL * max(1.0, abs(tau)):
        return gap
    return None


def hit_count(x, s, t, spec: CeilingSpec, guess=None) -> int:
    """The hitting count N with S_N phi(x) <= t + s < S_{N+1} phi(x).

    The search starts at round(t + s) (phi has mean one), widens the bracket
    geometrically and bisects on the closed-form Birkhoff sum.  The answer
    is then confirmed with the two neighbouring sums.  A neighbour closer
    than 1e-12 relative to t + s, but not equal, raises BoundaryTieError.
    """
    x = as_point(x)
    tau = float(s) + float(t)
    if not math.isfinite(tau):
        raise InvalidInputError("time must be finite")
    S = lambda n: birkhoff_closed(x, n, spec)
    n = int(round(tau)) if guess is None else int(guess)
    lo, hi = n, n + 1
    step = 1
    while S(lo) > tau:
        lo -= step
        step *= 2
    step = 1
    while S(hi) <= tau:
        hi += step
        step *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if S(mid) <= tau:
            lo = mid
        else:
            hi = mid
    N = lo
    s_n = S(N)
    s_next = s_n + eval_phi(_shift(x, N, spec.fv), spec)
    if not (s_n <= tau < s_next):
        s_next = S(N + 1)
    for k, val in ((N, s_n), (N + 1, s_next)):
        gap = _check_tie(tau, val, k)
        if gap is not None:
            raise BoundaryTieError(N, N + 1, gap)
    return N


def hit_count_incremental(x, s, t, spec: CeilingSpec) -> int:
    """Reference hitting count: add phi along the orbit one step at a time."""
    x = as_point(x)
    tau = float(s) + float(t)
    alphas = spec.fv.alphas
    acc = 0.0
    n = 0
    if tau >= 0:
        y = x
        while True:
            nxt = acc + eval_phi(y, spec)
            if nxt > tau:
                return n
            acc = nxt
            n += 1
            y = tuple(a + b for a, b in zip(y, alphas))
    y = x
    while acc > tau:
        y = tuple(a - b for a, b in zip(y, alphas))
        acc -= eval_phi(y, spec)
        n -= 1
    return n


def _shift(x, k, fv: FrequencyVector):
    return as_point(tuple(a + k * b for a, b in zip(x, fv.alphas)))


def flow_map(p: FlowPoint, t, spec: CeilingSpec) -> FlowPoint:
    """T^t(x, s) = (x + N alpha, t + s - S_N phi(x))."""
    N = hit_count(p.x, p.s, t, spec)
    s_new = p.s + float(t) - birkhoff_closed(p.x, N, spec)
    return FlowPoint(_shift(p.x, N, spec.fv), max(s_new, 0.0))


def trajectory(p: FlowPoint, times, spec: CeilingSpec):
    """Images of p at each time (each computed directly from p)."""
    return [flow_map(p, t, spec) for t in times]


# ---------------------------------------------------------------------------
# flow boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiInterval:
    """Product I_1 x ... x I_4 of closed intervals [a_j, b_j] in [0, 1)."""

    bounds: tuple

    def __post_init__(self):
        b = tuple((Fraction(a), Fraction(c)) for a, c in self.bounds)
        if len(b) != 4 or any(not (0 <= a < c <= 1) for a, c in b):
            raise InvalidInputError("a multi-interval needs four intervals 0 <= a < b <= 1")
        object.__setattr__(self, "bounds", b)

    @property
    def widths(self):
        return tuple(c - a for a, c in self.bounds)

    @property
    def volume(self) -> Fraction:
        v = Fraction(1)
        for w in self.widths:
            v *= w
        return v

    @property
    def center(self):
        return tuple((a + c) / 2 for a, c in self.bounds)

    def contains(self, x) -> bool:
        return all(a <= v <= c for v, (a, c) in zip(as_point(x), self.bounds))

    def widened(self, factor):
        """Same centre, widths scaled by ``factor`` (clipped to [0, 1])."""
        out = []
        for a, c in self.bounds:
            m, h = (a + c) / 2, (c - a) * Fraction(factor) / 2
            out.append((max(Fraction(0), m - h), min(Fraction(1), m + h)))
        return MultiInterval(tuple(out))

    def to_dict(self):
        return [[str(a), str(c)] for a, c in self.bounds]


def canonical_box(fv: FrequencyVector, n: int) -> MultiInterval:
    """J_n = prod_j [1/(8 q_n^(j)), 1/(4 q_n^(j))]."""
    if not 1 <= n <= fv.depth:
        raise InvalidInputError(f"level {n} not stored")
    return MultiInterval(tuple(
        (Fraction(1, 8 * fv.q(j, n)), Fraction(1, 4 * fv.q(j, n))) for j in range(1, 5)
    ))


def canonical_level(J: MultiInterval, fv: FrequencyVector):
    for n in range(1, fv.depth + 1):
        if J == canonical_box(fv, n):
            return n
    return None


def return_time_lower_bound(J: MultiInterval, fv: FrequencyVector) -> int:
    """The product q_n^(1) q_n^(2) q_n^(3) q_n^(4) for a canonical box J_n."""
    n = canonical_level(J, fv)
    if n is None:
        raise UnsupportedShapeError("J is not of the canonical form J_n")
    out = 1
    for j in range(1, 5):
        out *= fv.q(j, n)
    return out


def first_return_index(J: MultiInterval, fv: FrequencyVector, kmax=10**6, chunk=1 << 16):
    """Least k >= 1 with R^k(J) meeting J, or None if none up to kmax.

    R^k(J) meets J iff for each j the centered k alpha_j mod 1 lies within
    the width of I_j.  Candidates are screened in floating point and
    confirmed with exact rationals.  By symmetry -k returns iff k does.
    """
    widths = np.array([float(w) for w in J.widths])
    alphas = fv.alphas
    splits = [_split(a) for a in alphas]
    hi = np.array([s[0] for s in splits])
    lo = np.array([s[1] for s in splits])
    start = 1
    while start <= kmax:
        k = np.arange(start, min(start + chunk, kmax + 1), dtype=np.float64)
        d = np.abs(_frac_mul(k[:, None], hi[None, :], lo[None, :]))
        cand = np.nonzero(np.all(d <= widths[None, :] * (1 + 1e-9) + 1e-15, axis=1))[0]
        for idx in cand:
            kk = int(k[idx])
            if _exact_meets(J, kk, alphas):
                return kk
        start += chunk
    return None


def _exact_meets(J: MultiInterval, k, alphas) -> bool:
    for (a, c), al, w in zip(J.bounds, alphas, J.widths):
        v = k * al
        v -= math.floor(v)
        if min(v, 1 - v) > w:
            return False
    return True


@dataclass(frozen=True)
class FlowBox:
    """The embedded box {T^tau(y, anchor) : y in J, |tau| < T}.

    ``k_min`` is the first return index of J (exact), and
    ``TJ_lower = k_min * (1 - A)`` bounds from below the time between two
    visits of the transversal J x {anchor}.  The box is embedded as soon as
    2T <= TJ_lower.
    """

    J: MultiInterval
    T: float
    anchor: float
    k_min: int
    TJ_lower: float


def make_flow_box(J: MultiInterval, T, spec: CeilingSpec, anchor=0.0, kmax=10**6):
    if T <= 0:
        raise InvalidInputError("T must be positive")
    k_min = first_return_index(J, spec.fv, kmax)
    if k_min is None:
        k_min = kmax + 1
    TJ = k_min * spec.margin
    if 2 * T > TJ:
        raise InvalidInputError(
            f"T = {T} exceeds half the certified return time {TJ:.6g}"
        )
    return FlowBox(J, float(T), float(anchor), k_min, TJ)


def _box_samples(J: MultiInterval, per_direction=16):
    """Corners, per-direction lines through the centre, and the centre."""
    pts = [tuple(c) for c in product(*J.bounds)]
    center = J.center
    for j, (a, c) in enumerate(J.bounds):
        for i in range(per_direction):
            v = a + (c - a) * Fraction(2 * i + 1, 2 * per_direction)
            p = list(center)
            p[j] = v
            pts.append(tuple(p))
    pts.append(center)
    return pts


def intervals_from_mask(grid, mask):
    """Maximal runs of True in mask as closed intervals of the grid."""
    out = []
    start = None
    for i, ok in enumerate(mask):
        if ok and start is None:
            start = i
        if not ok and start is not None:
            out.append((float(grid[start]), float(grid[i - 1])))
            start = None
    if start is not None:
        out.append((float(grid[start]), float(grid[len(mask) - 1])))
    return out


def stay_in_zeta_times(J: MultiInterval, T, zeta, spec: CeilingSpec, anchor=0.0,
                       samples=None, steps_per_unit=64):
    """Times t in (-T, T) with T^t(y, anchor) in M_zeta for every sample y.

    For a single y the admissible set is the union over k of
    [S_k phi(y), S_{k+1} phi(y) - zeta] shifted by -anchor.  It is evaluated
    on a grid, intersected over the samples, and each surviving run is
    shrunk by one grid step so the result is an inner approximation.
    """
    if zeta <= 0:
        raise InvalidInputError("zeta must be positive")
    T = float(T)
    h = 1.0 / steps_per_unit
    n = int(math.floor(2 * T / h))
    grid = -T + h * np.arange(1, n)
    if samples is None:
        samples = _box_samples(J)
    ok = np.ones(len(grid), dtype=bool)
    tau = grid + anchor
    for y in samples:
        lo_k = hit_count(y, 0.0, float(tau[0]) - 1.0, spec) if len(grid) else 0
        hi_k = hit_count(y, 0.0, float(tau[-1]) + 1.0, spec) + 1 if len(grid) else 0
        sums = np.array([birkhoff_closed(y, k, spec) for k in range(lo_k, hi_k + 2)])
        good = np.zeros(len(grid), dtype=bool)
        for i in range(len(sums) - 1):
            good |= (tau >= sums[i]) & (tau <= sums[i + 1] - zeta)
        ok &= good
    runs = intervals_from_mask(grid, ok)
    shrunk = [(a + h, b - h) for a, b in runs if b - a > 2 * h]
    return shrunk
