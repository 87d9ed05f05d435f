"""Observables on M, their correlations under the flow, and decay fits.

Observables are products of a spatial factor on the base torus and a
temporal bump in the fiber coordinate.  Class F observables are flow
derivatives (coboundaries) ``chi(x) psi'(s)`` with transfer function
``chi(x) psi(s)``; class G observables are plain products ``chi(x) psi(s)``.

Correlations ``<f o T^t, g>`` are estimated by scrambled Sobol points in
the support of g, split into independent shards whose spread gives the
standard error.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial
from scipy.signal import get_window
from scipy.stats import qmc

from ._batch import BatchEngine, dyadic_from_unit, dyadic_to_fraction
from .ceiling import CeilingSpec, as_point, birkhoff_closed, birkhoff_partial
from .errors import InvalidInputError, SupportViolationError, WindowError
from .flow import FlowBox, MultiInterval, flow_map, hit_count, FlowPoint
from .stretch import DirectedInterval, stretch_quantities

__all__ = [
    "PolyBump",
    "ProductBump",
    "TrigProduct",
    "FlowBoxObservable",
    "FiberObservable",
    "make_observable",
    "make_fiber_observable",
    "norms",
    "correlation",
    "correlation_many",
    "correlation_quadrature",
    "CrossKernel",
    "temporal_cross_correlation",
    "autoconvolution_reference",
    "CorrelationSeries",
    "decay_series",
    "fit_decay",
    "DecayFit",
    "integration_by_parts_check",
    "spectral_density",
    "fourier_transform",
]


def _threads(shards):
    env = os.environ.get("TORUSFLOW_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, shards))


# ---------------------------------------------------------------------------
# bumps
# ---------------------------------------------------------------------------

def _sup_abs(p: Polynomial) -> float:
    """max |p(u)| over [-1, 1], from the endpoints and critical points."""
    pts = [-1.0, 1.0]
    if p.degree() >= 2:
        for r in p.deriv().roots():
            if abs(r.imag) < 1e-12 and -1 <= r.real <= 1:
                pts.append(r.real)
    return float(np.max(np.abs(p(np.array(pts)))))


@dataclass(frozen=True)
class PolyBump:
    """scale * P((x - center) / halfwidth) on the support, zero outside.

    P(u) = (1 - u^2)^k for the even shape and u (1 - u^2)^k for the odd one.
    With k >= 2 the bump and its first derivative vanish at the ends.
    """

    center: float
    halfwidth: float
    poly: Polynomial = field(compare=False)
    scale: float = 1.0
    parity: str = "even"

    @classmethod
    def make(cls, center, halfwidth, k=4, parity="even", scale=1.0):
        if halfwidth <= 0:
            raise InvalidInputError("halfwidth must be positive")
        if k < 2:
            raise InvalidInputError("need k >= 2 for a C^1 bump")
        base = Polynomial([1.0, 0.0, -1.0]) ** k
        if parity == "odd":
            base = base * Polynomial([0.0, 1.0])
        elif parity != "even":
            raise InvalidInputError("parity must be 'even' or 'odd'")
        return cls(float(center), float(halfwidth), base, float(scale), parity)

    @property
    def support(self):
        return (self.center - self.halfwidth, self.center + self.halfwidth)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.halfwidth
        inside = np.abs(u) <= 1
        return np.where(inside, self.scale * self.poly(np.clip(u, -1, 1)), 0.0)

    def deriv(self) -> "PolyBump":
        return PolyBump(self.center, self.halfwidth, self.poly.deriv(),
                        self.scale / self.halfwidth, "odd" if self.parity == "even" else "even")

    def scaled(self, c) -> "PolyBump":
        return PolyBump(self.center, self.halfwidth, self.poly, self.scale * c, self.parity)

    @property
    def sup(self) -> float:
        return abs(self.scale) * _sup_abs(self.poly)

    @property
    def c1_bound(self) -> float:
        return self.sup + self.deriv().sup

    def integral(self) -> float:
        P = self.poly.integ()
        return self.scale * self.halfwidth * float(P(1.0) - P(-1.0))

    def square_integral(self) -> float:
        P = (self.poly * self.poly).integ()
        return self.scale**2 * self.halfwidth * float(P(1.0) - P(-1.0))

    def as_polynomial(self) -> Polynomial:
        """The bump on its support as a polynomial in x."""
        sub = Polynomial([-self.center / self.halfwidth, 1.0 / self.halfwidth])
        return self.scale * self.poly(sub)


@dataclass(frozen=True)
class ProductBump:
    """chi(x) = c * prod_j b_j(x_j) with bumps fitted to the intervals of J,
    normalized so that the integral of chi^2 over J is one."""

    factors: tuple
    const: float

    @classmethod
    def on_box(cls, J: MultiInterval, parities=("even",) * 4, k=4):
        factors = []
        for (a, c), par in zip(J.bounds, parities):
            factors.append(PolyBump.make(float((a + c) / 2), float((c - a) / 2), k, par))
        sq = math.prod(f.square_integral() for f in factors)
        return cls(tuple(factors), 1.0 / math.sqrt(sq))

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), self.const)
        for j, f in enumerate(self.factors):
            out = out * f(x[:, j])
        return out

    def partial(self, x, j):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), self.const)
        for i, f in enumerate(self.factors):
            out = out * (f.deriv()(x[:, i]) if i == j - 1 else f(x[:, i]))
        return out

    @property
    def sup(self) -> float:
        return abs(self.const) * math.prod(f.sup for f in self.factors)

    def sup_partial(self, j) -> float:
        return abs(self.const) * math.prod(
            f.deriv().sup if i == j - 1 else f.sup for i, f in enumerate(self.factors)
        )

    def square_integral(self) -> float:
        return self.const**2 * math.prod(f.square_integral() for f in self.factors)

    def inner(self, other: "ProductBump") -> float:
        """Exact integral of chi * chi' over the common box."""
        total = self.const * other.const
        for f, g in zip(self.factors, other.factors):
            if (f.center, f.halfwidth) != (g.center, g.halfwidth):
                raise InvalidInputError("bumps live on different boxes")
            P = (f.poly * g.poly).integ()
            total *= f.scale * g.scale * f.halfwidth * float(P(1.0) - P(-1.0))
        return total

    def scaled(self, c) -> "ProductBump":
        return ProductBump(self.factors, self.const * c)


@dataclass(frozen=True)
class TrigProduct:
    """h(x) = c * prod_j (1 + a_j cos(2 pi k_j x_j + p_j)), a smooth function on T^4."""

    freqs: tuple = (1, 1, 1, 1)
    amps: tuple = (0.0, 0.0, 0.0, 0.0)
    phases: tuple = (0.0, 0.0, 0.0, 0.0)
    const: float = 1.0

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), self.const)
        for j in range(4):
            out = out * (1 + self.amps[j] * np.cos(2 * np.pi * self.freqs[j] * x[:, j] + self.phases[j]))
        return out

    def partial(self, x, j):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), self.const)
        for i in range(4):
            arg = 2 * np.pi * self.freqs[i] * x[:, i] + self.phases[i]
            if i == j - 1:
                out = out * (-2 * np.pi * self.freqs[i] * self.amps[i] * np.sin(arg))
            else:
                out = out * (1 + self.amps[i] * np.cos(arg))
        return out

    @property
    def sup(self) -> float:
        return abs(self.const) * math.prod(1 + abs(a) for a in self.amps)

    def sup_partial(self, j) -> float:
        return abs(self.const) * math.prod(
            2 * math.pi * abs(self.freqs[i] * self.amps[i]) if i == j - 1 else 1 + abs(self.amps[i])
            for i in range(4)
        )

    def integral(self) -> float:
        return self.const * math.prod(1.0 if k != 0 else 1 + a * math.cos(p)
                                      for k, a, p in zip(self.freqs, self.amps, self.phases))


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

class _Observable:
    """Shared interface: spatial factor ``chi``, temporal bump ``psi`` placed
    at fiber height ``offset``, class tag F or G."""

    @property
    def temporal(self) -> PolyBump:
        return self.psi.deriv() if self.cls == "F" else self.psi

    def __call__(self, x, s):
        s = np.asarray(s, dtype=float)
        return self.chi(x) * self.temporal(s - self.offset)

    def transfer(self, x, s):
        if self.cls != "F":
            raise InvalidInputError("only class F observables have a transfer function")
        return self.chi(x) * self.psi(np.asarray(s, dtype=float) - self.offset)

    def partial(self, x, s, j):
        """Derivative in x_j (j = 1..4) or in the fiber coordinate (j = 0)."""
        s = np.asarray(s, dtype=float)
        if j == 0:
            return self.chi(x) * self.temporal.deriv()(s - self.offset)
        return self.chi.partial(x, j) * self.temporal(s - self.offset)

    # sup norms
    @property
    def norm0(self) -> float:
        return self.chi.sup * self.temporal.sup

    def norm1(self, j) -> float:
        """||h||_0 + ||d_j h||_0, with j = 0 the fiber direction."""
        if j == 0:
            d = self.chi.sup * self.temporal.deriv().sup
        else:
            d = self.chi.sup_partial(j) * self.temporal.sup
        return self.norm0 + d

    @property
    def transfer_norm0(self) -> float:
        return self.chi.sup * self.psi.sup

    def transfer_norm1(self, j) -> float:
        if j == 0:
            d = self.chi.sup * self.psi.deriv().sup
        else:
            d = self.chi.sup_partial(j) * self.psi.sup
        return self.transfer_norm0 + d

    @property
    def fiber_support(self):
        lo, hi = self.temporal.support
        return lo + self.offset, hi + self.offset


@dataclass(frozen=True)
class FlowBoxObservable(_Observable):
    """chi_J(x) psi'(tau) (class F) or chi_J(x) psi(tau) (class G) on a flow box.

    The box is {T^tau(y, anchor) : y in J, |tau| < T}.  The temporal support
    of psi is kept inside the first fiber, where T^tau(y, anchor) is simply
    (y, anchor + tau); the observable is then evaluated directly in M.
    """

    box: FlowBox
    chi: ProductBump
    psi: PolyBump
    cls: str
    zeta: float

    @property
    def offset(self) -> float:
        return self.box.anchor

    @property
    def base_region(self):
        return tuple((float(a), float(c)) for a, c in self.box.J.bounds)


@dataclass(frozen=True)
class FiberObservable(_Observable):
    """h(x) b'(s) (class F) or h(x) b(s) (class G) with h smooth on T^4 and
    b a bump supported in [0, inf phi - zeta]."""

    chi: TrigProduct
    psi: PolyBump
    cls: str
    zeta: float

    @property
    def offset(self) -> float:
        return 0.0

    @property
    def base_region(self):
        return ((0.0, 1.0),) * 4


def _check_fiber_support(lo, hi, zeta, spec: CeilingSpec):
    top = spec.margin - zeta
    if lo < 0 or hi > top:
        raise SupportViolationError(
            f"temporal support [{lo:.6g}, {hi:.6g}] leaves [0, inf phi - zeta] = [0, {top:.6g}]"
        )


def make_observable(box: FlowBox, spec: CeilingSpec, cls="F", zeta=0.05,
                    parities=("even",) * 4, center=0.0, halfwidth=None, k=4,
                    psi_scale=1.0):
    """Flow-box observable with normalized chi and a temporal bump psi.

    The temporal support [center - halfwidth, center + halfwidth] must lie in
    (-T, T) and, shifted by the anchor, inside [0, inf phi - zeta]; the
    latter guarantees that psi vanishes outside the stay-in-M_zeta times.
    """
    if cls not in ("F", "G"):
        raise InvalidInputError("class must be 'F' or 'G'")
    if halfwidth is None:
        halfwidth = box.T
    if center - halfwidth < -box.T or center + halfwidth > box.T:
        raise SupportViolationError("temporal support escapes (-T, T)")
    _check_fiber_support(box.anchor + center - halfwidth, box.anchor + center + halfwidth, zeta, spec)
    chi = ProductBump.on_box(box.J, parities, k)
    psi = PolyBump.make(center, halfwidth, k, "even", psi_scale)
    return FlowBoxObservable(box, chi, psi, cls, float(zeta))


def make_fiber_observable(spec: CeilingSpec, cls="F", zeta=0.05, h=None,
                          center=None, halfwidth=None, k=4, parity="even", scale=1.0):
    if cls not in ("F", "G"):
        raise InvalidInputError("class must be 'F' or 'G'")
    top = spec.margin - zeta
    if center is None:
        center = top / 2
    if halfwidth is None:
        halfwidth = top / 2
    _check_fiber_support(center - halfwidth, center + halfwidth, zeta, spec)
    psi = PolyBump.make(center, halfwidth, k, parity, scale)
    return FiberObservable(h or TrigProduct(), psi, cls, float(zeta))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def norms(f, g, j=None):
    """(N_0, N_1) for a coboundary f with transfer psi and a test function g.

    N_0 = ||psi||_0 ||g||_0 and
    N_1(j) = (||f||_0 + ||psi||_0) ||g||_{1,j} + (||f||_{1,j} + ||psi||_{1,j}) ||g||_0.
    With j None, N_1 is the maximum over j = 0..4 (0 is the fiber direction).
    """
    if getattr(f, "cls", None) != "F":
        raise InvalidInputError("f must be a class F (coboundary) observable")
    N0 = f.transfer_norm0 * g.norm0

    def n1(i):
        return ((f.norm0 + f.transfer_norm0) * g.norm1(i)
                + (f.norm1(i) + f.transfer_norm1(i)) * g.norm0)

    if j is None:
        return N0, max(n1(i) for i in range(5))
    return N0, n1(j)


# ---------------------------------------------------------------------------
# Monte Carlo correlations
# ---------------------------------------------------------------------------

def _shard_points(seed, shards, per_shard):
    ss = np.random.SeedSequence(seed)
    out = []
    m = max(0, math.ceil(math.log2(max(1, per_shard))))
    for child in ss.spawn(shards):
        sob = qmc.Sobol(d=5, scramble=True, seed=np.random.default_rng(child))
        out.append(sob.random_base2(m))
    return out


def _sample_support(g, pts):
    """Map unit-cube points to g's support; returns (u, s, weight)."""
    region = g.base_region
    lo = np.array([r[0] for r in region])
    hi = np.array([r[1] for r in region])
    x = lo + pts[:, :4] * (hi - lo)
    u = dyadic_from_unit(x)
    xf = u.astype(np.float64) / 2.0**32
    s_lo, s_hi = g.fiber_support
    s = s_lo + pts[:, 4] * (s_hi - s_lo)
    vol = float(np.prod(hi - lo)) * (s_hi - s_lo)
    w = g(xf, s) * vol
    return u, s, w


def temporal_cross_correlation(a: PolyBump, b: PolyBump, t) -> float:
    """int a(tau + t) b(tau) d tau, by exact polynomial integration."""
    lo = max(a.support[0] - t, b.support[0])
    hi = min(a.support[1] - t, b.support[1])
    if hi <= lo:
        return 0.0
    pa = a.as_polynomial()(Polynomial([t, 1.0]))
    P = (pa * b.as_polynomial()).integ()
    return float(P(hi) - P(lo))


class CrossKernel:
    """K(u) = int a(sigma + u) b(sigma) d sigma as a piecewise polynomial.

    Between consecutive support breakpoints K is a polynomial of degree
    deg a + deg b + 1; each piece is recovered by interpolating the exact
    scalar value at Chebyshev nodes.
    """

    def __init__(self, a: PolyBump, b: PolyBump):
        (a0, a1), (b0, b1) = a.support, b.support
        br = sorted({a0 - b1, a0 - b0, a1 - b1, a1 - b0})
        self.lo, self.hi = br[0], br[-1]
        self.breaks = np.array(br)
        deg = a.poly.degree() + b.poly.degree() + 1
        self.pieces = []
        for left, right in zip(br[:-1], br[1:]):
            if right - left <= 0:
                continue
            k = np.arange(deg + 1)
            nodes = 0.5 * (left + right) + 0.5 * (right - left) * np.cos(np.pi * (k + 0.5) / (deg + 1))
            vals = [temporal_cross_correlation(a, b, u) for u in nodes]
            self.pieces.append((left, right, np.polynomial.Chebyshev.fit(nodes, vals, deg, domain=[left, right])))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape)
        for left, right, P in self.pieces:
            m = (u >= left) & (u < right)
            if np.any(m):
                out[m] = P(u[m])
        return out


def _direct_shard(f, g, times, engine, pts):
    u, s, w = _sample_support(g, pts)
    keep = w != 0
    u, s, w = u[keep], s[keep], w[keep]
    means = np.empty(len(times))
    ties = 0
    P0 = engine.phases(u)
    for i, t in enumerate(times):
        tau = s + t
        N, S, tie = engine.hit_counts(P0, tau)
        ties += int(tie.sum())
        x = engine.coords(u, N)
        means[i] = math.fsum(w * f(x, tau - S)) / len(pts)
    return means, ties


def _fiber_shard(f, g, times, engine, kernel, pts):
    """Fiber coordinate integrated exactly.

    Both temporal supports sit inside [0, inf phi - zeta] of every fiber,
    so f(T^t(x, s)) = sum_n chi_f(x + n alpha) T_f(s + t - S_n(x) - h_f)
    and the s-integral against g collapses to
    chi_g(x) sum_n chi_f(x + n alpha) K(t + h_g - h_f - S_n(x)).
    """
    region = g.base_region
    lo = np.array([r[0] for r in region])
    hi = np.array([r[1] for r in region])
    u = dyadic_from_unit(lo + pts[:, :4] * (hi - lo))
    xf = u.astype(np.float64) / 2.0**32
    w = g.chi(xf) * float(np.prod(hi - lo))
    keep = w != 0
    u, w = u[keep], w[keep]
    P0 = engine.phases(u)
    shift = g.offset - f.offset
    means = np.empty(len(times))
    ties = 0
    for i, t in enumerate(times):
        target = t + shift
        N, _, tie = engine.hit_counts(P0, np.full(len(u), target - kernel.hi))
        ties += int(tie.sum())
        acc = np.zeros(len(u))
        n = N + 1
        active = np.ones(len(u), dtype=bool)
        while np.any(active):
            idx = np.nonzero(active)[0]
            S = engine.birkhoff(P0[idx], n[idx])
            U = target - S
            live = U > kernel.lo
            if np.any(live):
                j = idx[live]
                x = engine.coords(u[j], n[j])
                acc[j] += f.chi(x) * kernel(U[live])
            active[idx[~live]] = False
            n = n + 1
        means[i] = math.fsum(w * acc) / len(pts)
    return means, ties


def correlation_many(f, g, times, spec: CeilingSpec, samples=2**15, seed=0, shards=32,
                     engine: BatchEngine | None = None, method="fiber"):
    """Estimates of <f o T^t, g> for each t, with shard standard errors.

    ``method="direct"`` samples (x, s) in the support of g and pushes each
    point through the flow.  ``method="fiber"`` samples only x and
    integrates the fiber coordinate exactly; it estimates the same integral
    with far smaller variance.  Returns (values, stderr, ties, total_samples).
    """
    if samples <= 0:
        raise InvalidInputError("samples must be positive")
    if shards < 2:
        raise InvalidInputError("need at least two shards for an error bar")
    if method not in ("direct", "fiber"):
        raise InvalidInputError("method must be 'direct' or 'fiber'")
    engine = engine or BatchEngine(spec)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    per = math.ceil(samples / shards)
    shard_pts = _shard_points(seed, shards, per)
    if method == "direct":
        run = lambda pts: _direct_shard(f, g, times, engine, pts)
    else:
        kernel = CrossKernel(f.temporal, g.temporal)
        run = lambda pts: _fiber_shard(f, g, times, engine, kernel, pts)
    with ThreadPoolExecutor(_threads(shards)) as ex:
        results = list(ex.map(run, shard_pts))
    M = np.array([r[0] for r in results])
    ties = sum(r[1] for r in results)
    values = M.mean(axis=0)
    stderr = M.std(axis=0, ddof=1) / math.sqrt(shards)
    total = sum(len(p) for p in shard_pts)
    return values, stderr, ties, total


# ---------------------------------------------------------------------------
# deterministic evaluation for fiber observables
# ---------------------------------------------------------------------------

def _coordinate_weight(f, g, j, n, fv):
    """Fourier coefficients of chi_g,j(x) chi_f,j(x + n alpha_j) (modes -31..32)."""
    M = 64
    x = np.arange(M) / M
    shift = float((Fraction(n * f.chi.freqs[j - 1]) * fv.alpha(j)) % 1)
    a_g, k_g, p_g = g.chi.amps[j - 1], g.chi.freqs[j - 1], g.chi.phases[j - 1]
    a_f, k_f, p_f = f.chi.amps[j - 1], f.chi.freqs[j - 1], f.chi.phases[j - 1]
    w = (1 + a_g * np.cos(2 * np.pi * k_g * x + p_g)) * \
        (1 + a_f * np.cos(2 * np.pi * (k_f * x + shift) + p_f))
    return np.fft.fft(w) / M


def _cosine_masses(coef, q, r, psi, delta):
    """Bin masses of the pushforward of w(x) dx under r cos(2 pi q x + psi).

    Only Fourier modes of w that are multiples of q survive; in v = r cos y
    they become Chebyshev densities T_l(v/r) / (pi sqrt(r^2 - v^2)) whose
    distribution functions are elementary.  Bins are centred on k * delta.
    """
    M = len(coef)
    beta = [coef[0].real]
    l = 1
    while l * q < M // 2:
        beta.append(2 * (coef[l * q] * np.exp(-1j * l * psi)).real)
        l += 1
    if r < 1e-3 * delta:
        return 0, np.array([beta[0]])
    k0 = int(math.floor(-r / delta + 0.5))
    k1 = int(math.ceil(r / delta - 0.5))
    edges = (np.arange(k0, k1 + 2) - 0.5) * delta
    y = np.arccos(np.clip(edges / r, -1.0, 1.0))
    cdf = beta[0] * (np.pi - y) / np.pi
    for l in range(1, len(beta)):
        if abs(beta[l]) > 1e-15:
            cdf = cdf - beta[l] * np.sin(l * y) / (l * np.pi)
    return k0, np.diff(cdf)


def _sampled_masses(coef, terms, delta, fv, n):
    """Same, for a coordinate carrying several harmonics, by linear binning."""
    amp = sum(t.amplitude * abs(_xf(t, n)) for t in terms)
    qmax = max(t.q for t in terms)
    M = int(2 ** math.ceil(math.log2(max(2**12, 4 * 2 * np.pi * qmax * amp / delta))))
    i = np.arange(M)
    x = (i + 0.5) / M
    gval = np.zeros(M)
    for t in terms:
        X = _xf(t, n)
        ph = ((t.q % (2 * M)) * (2 * i + 1) % (2 * M)) / (2 * M)
        gval += t.amplitude * abs(X) * np.cos(2 * np.pi * ph + np.angle(X))
    live = np.nonzero(np.abs(coef) > 1e-15)[0]
    modes = np.fft.fftfreq(len(coef), 1 / len(coef))[live]
    w = np.zeros(M)
    for c, m in zip(coef[live], modes):
        w += (c * np.exp(2j * np.pi * m * x)).real
    w /= M
    pos = gval / delta
    k0 = int(math.floor(pos.min())) - 1
    i = np.floor(pos).astype(np.int64)
    frac = pos - i
    n_out = int(math.ceil(pos.max())) - k0 + 2
    out = np.bincount(i - k0, w * (1 - frac), n_out) + np.bincount(i - k0 + 1, w * frac, n_out)
    return k0, out


def _xf(t, n):
    from .ceiling import xfactor_theta
    return xfactor_theta(int(n), t.shift)


def _quadrature_one(f, g, t, spec, kernel, delta):
    from scipy.signal import fftconvolve
    fv = spec.fv
    const = f.chi.const * g.chi.const
    target = t + g.offset - f.offset
    bycoord = {j: [u for u in spec.active_terms if u.j == j] for j in range(1, 5)}
    # |S_n phi - n| <= A |n|, so only these n can put t - S_n in supp K
    A = spec.amplitude_sum
    ends = [(target - kernel.hi) / (1 + A), (target - kernel.hi) / (1 - A),
            (target - kernel.lo) / (1 + A), (target - kernel.lo) / (1 - A)]
    total = 0.0
    for n in range(int(math.floor(min(ends))) - 1, int(math.ceil(max(ends))) + 2):
        R = sum(u.amplitude * abs(_xf(u, n)) for u in spec.active_terms)
        c = target - n
        if c - R >= kernel.hi or c + R <= kernel.lo:
            continue
        parts = []
        for j in range(1, 5):
            coef = _coordinate_weight(f, g, j, n, fv)
            terms = bycoord[j]
            if not terms:
                parts.append((0, np.array([coef[0].real])))
            elif len(terms) == 1:
                X = _xf(terms[0], n)
                parts.append(_cosine_masses(coef, terms[0].q, terms[0].amplitude * abs(X),
                                            float(np.angle(X)), delta))
            else:
                parts.append(_sampled_masses(coef, terms, delta, fv, n))
        # convolve the three smaller measures; pair the largest with the
        # kernel window only, which is all the final sum ever reads
        parts.sort(key=lambda p: len(p[1]))
        kL, L = 0, np.array([1.0])
        for kj, mj in parts[:-1]:
            L = fftconvolve(L, mj) if len(L) > 1 and len(mj) > 1 else np.convolve(L, mj)
            kL += kj
        kB, B = parts[-1]
        s0 = int(math.ceil((c - kernel.hi) / delta))
        s1 = int(math.floor((c - kernel.lo) / delta))
        if s1 < s0:
            continue
        W = kernel(c - np.arange(s0, s1 + 1) * delta)
        H = fftconvolve(W, L[::-1]) if len(L) > 1 else W * L[0]
        i0 = kB + kL - s0 + len(L) - 1
        a_lo, a_hi = max(0, -i0), min(len(B), len(H) - i0)
        if a_hi > a_lo:
            total += float(np.dot(B[a_lo:a_hi], H[i0 + a_lo:i0 + a_hi]))
    return const * total


def correlation_quadrature(f, g, times, spec: CeilingSpec, delta=1e-2):
    """<f o T^t, g> for fiber observables without sampling noise.

    The fiber coordinate is integrated exactly as in the fiber estimator;
    the base integral factors because S_n phi - n is a sum of one function
    per coordinate.  Each coordinate's weighted pushforward is binned at
    spacing delta, the four are convolved and paired with the temporal
    cross-correlation kernel.  Runs at delta and delta/2 and returns the
    Richardson value with the difference as error estimate.
    """
    if not (isinstance(f, FiberObservable) and isinstance(g, FiberObservable)):
        raise InvalidInputError("quadrature needs two fiber observables")
    kernel = CrossKernel(f.temporal, g.temporal)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    coarse = np.array([_quadrature_one(f, g, t, spec, kernel, delta) for t in times])
    fine = np.array([_quadrature_one(f, g, t, spec, kernel, delta / 2) for t in times])
    return (4 * fine - coarse) / 3, np.abs(fine - coarse)


def correlation(f, g, t, spec: CeilingSpec, samples=2**15, seed=0, shards=32, engine=None,
                method="direct"):
    """Monte Carlo estimate of <f o T^t, g> = int f(T^t z) g(z) dmu; (value, stderr)."""
    v, e, _, _ = correlation_many(f, g, [t], spec, samples, seed, shards, engine, method)
    return float(v[0]), float(e[0])


def autoconvolution_reference(f: FlowBoxObservable, g: FlowBoxObservable, t) -> float:
    """Exact <f o T^t, g> for two box observables on the same box, |t| small.

    Equals int chi_f chi_g times the cross-correlation of the temporal
    factors: delta_ij (psi' * psi')(t) for normalized orthogonal chi's.
    """
    return f.chi.inner(g.chi) * temporal_cross_correlation(f.temporal, g.temporal, t)


# ---------------------------------------------------------------------------
# decay series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationSeries:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    sample_count: int
    seed: int
    N1: float = float("nan")
    eps: float = 0.01
    bound_constant: float = float("nan")
    constant_drift: float = float("nan")
    ties: int = 0

    @property
    def uncensored(self):
        return np.abs(self.values) > 3 * self.stderr

    def bound_curve(self, C=None):
        C = self.bound_constant if C is None else C
        t = np.where(self.times > 0, self.times, np.nan)
        return C * self.N1 * t ** (-0.5 - self.eps)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    used: np.ndarray
    censored: np.ndarray


def fit_decay(series: CorrelationSeries) -> DecayFit:
    """OLS of log|value| on log t over points with |value| > 3 stderr."""
    mask = series.uncensored & (series.times > 0)
    used = np.nonzero(mask)[0]
    censored = np.nonzero(~mask)[0]
    if len(used) < 2:
        return DecayFit(float("nan"), float("nan"), used, censored)
    X = np.log(series.times[used])
    Y = np.log(np.abs(series.values[used]))
    slope, intercept = np.polyfit(X, Y, 1)
    return DecayFit(float(slope), float(intercept), used, censored)


def decay_series(f, g, times, spec: CeilingSpec, samples=2**15, seed=0, eps=0.01,
                 shards=32, engine=None, method="fiber") -> CorrelationSeries:
    """Correlations on a time grid with the bound curve C N_1 t^(-1/2-eps).

    ``method`` is "direct" or "fiber" (Monte Carlo) or "quadrature"
    (deterministic, fiber observables only; stderr is then the
    discretization error estimate).
    C is the smallest constant that dominates every uncensored point;
    ``constant_drift`` is the ratio between the largest and smallest
    per-point constants.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if method == "quadrature":
        values, stderr = correlation_quadrature(f, g, times, spec)
        ties, total = 0, 0
    else:
        values, stderr, ties, total = correlation_many(f, g, times, spec, samples, seed, shards,
                                                       engine, method)
    N1 = norms(f, g)[1] if getattr(f, "cls", None) == "F" else float("nan")
    C = drift = float("nan")
    pos = times > 0
    ok = (np.abs(values) > 3 * stderr) & pos
    if np.any(ok) and math.isfinite(N1):
        per = np.abs(values[ok]) / (N1 * times[ok] ** (-0.5 - eps))
        C = float(per.max())
        drift = float(per.max() / per.min())
    return CorrelationSeries(times, values, stderr, total, seed, N1, eps, C, drift, ties)


# ---------------------------------------------------------------------------
# the integration-by-parts inequality along one directed interval
# ---------------------------------------------------------------------------

def integration_by_parts_check(I: DirectedInterval, f, g, t, spec: CeilingSpec,
                               points=2**12 + 1, grid=256, fd_step=1e-7, floor=1e-12):
    """Compare |int_I f(T^t z) g(z) - Delta(I)| with N_0 lambda/S + N_1 lambda/r.

    The integral uses the composite Simpson rule on ``points`` nodes; the
    hitting count and Birkhoff derivatives are evaluated exactly at each node.
    """
    if getattr(f, "cls", None) != "F":
        raise InvalidInputError("f must be a class F observable")
    t = float(t)
    if t < 1.0:
        raise WindowError("t must lie in a stretch window (t >= 1)")
    if points % 2 == 0:
        points += 1
    engine = BatchEngine(spec)
    j = I.j
    xs = [I.a + I.length * Fraction(i, points - 1) for i in range(points)]
    dyadic = all((x * 2**32).denominator == 1 for x in xs) and all(
        (Fraction(v) * 2**32).denominator == 1 for v in I.base)
    if dyadic:
        U = np.array([[int(Fraction(v) * 2**32) % 2**32 for v in I.base]] * points, dtype=np.uint64)
        U[:, j - 1] = [int(x * 2**32) % 2**32 for x in xs]
        P = engine.phases(U)
        tau = np.full(points, I.s + t)
        N, S, _ = engine.hit_counts(P, tau)
        xf = U.astype(np.float64) / 2.0**32
        img = engine.coords(U, N)
        vals = f(img, tau - S) * g(xf, np.full(points, I.s))
    else:
        vals = np.empty(points)
        for i, x in enumerate(xs):
            z = I.point(x)
            w = flow_map(FlowPoint(z, I.s), t, spec)
            xf = np.array([[float(v) for v in w.x]])
            zf = np.array([[float(v) for v in z]])
            vals[i] = (f(xf, [w.s]) * g(zf, [I.s]))[0]
    h = float(I.length) / (points - 1)
    wts = np.ones(points)
    wts[1:-1:2] = 4
    wts[2:-1:2] = 2
    integral = h / 3 * math.fsum(wts * vals)

    def boundary(x, fd):
        z = I.point(x)
        N = hit_count(z, I.s, t, spec)
        w = flow_map(FlowPoint(z, I.s), t, spec)
        psi = f.transfer(np.array([[float(v) for v in w.x]]), [w.s])[0]
        gz = g(np.array([[float(v) for v in z]]), [I.s])[0]
        if fd:
            hstep = Fraction(fd_step)
            zp = I.point(x + hstep)
            zm = I.point(x - hstep)
            d = (birkhoff_closed(zp, N, spec) - birkhoff_closed(zm, N, spec)) / (2 * fd_step)
        else:
            d = birkhoff_partial(z, N, j, 1, spec)
        return gz * psi / d

    delta = boundary(I.a, False) - boundary(I.b, False)
    delta_fd = boundary(I.a, True) - boundary(I.b, True)
    rep = stretch_quantities(I, t, spec, grid)
    N0, N1 = norms(f, g, j)
    lam = float(I.length)
    lhs = abs(integral - delta)
    rhs_S = N0 * lam / rep.S if rep.S > floor else math.inf
    rhs_r = N1 * lam / rep.r if rep.r > floor else math.inf
    rhs = rhs_S + rhs_r
    unbounded = not math.isfinite(rhs)
    return {
        "t": t,
        "direction": j,
        "integral": integral,
        "delta": delta,
        "delta_fd": delta_fd,
        "lhs": lhs,
        "rhs_S": rhs_S,
        "rhs_r": rhs_r,
        "r": rep.r,
        "S": rep.S,
        "N0": N0,
        "N1": N1,
        "implied_constant": lhs / rhs if not unbounded else math.nan,
        "unbounded": unbounded,
    }


# ---------------------------------------------------------------------------
# spectral density surrogate
# ---------------------------------------------------------------------------

def fourier_transform(times, values, freqs):
    """int C(t) exp(-2 pi i xi t) dt by the rectangle rule on a uniform grid."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = times[1] - times[0]
    ph = np.exp(-2j * np.pi * np.outer(freqs, times))
    return (ph @ values) * dt


def spectral_density(times, values, window="hann", freqs=None):
    """Windowed Fourier transform of a symmetric correlation series.

    Returns (freqs, density, report).  Negative values, which a true
    spectral density cannot take, are clipped to zero and their mass is
    reported relative to the total.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(times)
    if n < 3 or len(values) != n:
        raise InvalidInputError("need at least three matching samples")
    dt = np.diff(times)
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise InvalidInputError("time grid must be uniform and increasing")
    if not np.allclose(times, -times[::-1], rtol=0, atol=1e-9 * abs(dt[0])):
        raise InvalidInputError("time grid must be symmetric about 0")
    if window in (None, "rectangular", "boxcar"):
        w = np.ones(n)
    else:
        w = get_window(window, n, fftbins=False)
    if freqs is None:
        fmax = 0.5 / dt[0]
        freqs = np.linspace(0.0, fmax, n // 2 + 1)
    freqs = np.asarray(freqs, dtype=float)
    dens = fourier_transform(times, w * values, freqs).real
    neg = dens < 0
    total = float(np.abs(dens).sum())
    clipped = float(-dens[neg].sum())
    dens = np.where(neg, 0.0, dens)
    report = {
        "window": window or "rectangular",
        "clipped_points": int(neg.sum()),
        "clipped_fraction": clipped / total if total > 0 else 0.0,
    }
    return freqs, dens, report
