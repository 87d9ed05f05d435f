"""Named invariant suites, shared by ``torusflow verify`` and the tests.

Every suite returns a :class:`SuiteResult` whose ``metrics`` are plain
JSON values.  Defaults are the full-size checks; the CLI can shrink them.
"""
from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .arithmetic import (
    FrequencyVector, Profile, build_y_vector, stretch_windows, window_for,
)
from .ceiling import (
    CeilingSpec, ReparamSpec, birkhoff_brute, birkhoff_closed, centered_shift,
    verify_fiber_integral,
)
from ._batch import BatchEngine, dyadic_from_unit
from .correlation import (
    TrigProduct, autoconvolution_reference, correlation_many, decay_series, fit_decay,
    make_fiber_observable, make_observable,
)
from .flow import FlowPoint, canonical_box, flow_map, make_flow_box
from .stretch import (
    DirectedInterval, build_partition, good_component, measured_partial_extrema,
    stretch_lower_bound,
)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "metrics": self.metrics, "seconds": round(self.seconds, 3)}


@functools.lru_cache(maxsize=None)
def exact_profile() -> FrequencyVector:
    return build_y_vector()


@functools.lru_cache(maxsize=None)
def relaxed_profile() -> FrequencyVector:
    return build_y_vector(depth=2, profile=Profile.relaxed())


@functools.lru_cache(maxsize=None)
def spec_for(kind) -> CeilingSpec:
    return CeilingSpec.build(exact_profile() if kind == "exact" else relaxed_profile())


def _rng(seed):
    return np.random.default_rng(seed)


def _random_point(rng, bits=32):
    return tuple(Fraction(int(v), 1 << bits) for v in rng.integers(0, 1 << bits, size=4))


def _timed(fn):
    @functools.wraps(fn)
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    return run


# ---------------------------------------------------------------------------

@_timed
def suite_none():
    return SuiteResult("none", True, {})


@_timed
def suite_birkhoff(cases=1000, mmax=10**4, seed=0, tol=1e-9):
    """Closed-form Birkhoff sums against the literal orbit sum."""
    rng = _rng(seed)
    worst = 0.0
    failures = 0
    per = {}
    for kind in ("exact", "relaxed"):
        spec = spec_for(kind)
        w = 0.0
        for _ in range(cases // 2):
            x = _random_point(rng)
            m = int(rng.integers(-mmax, mmax + 1))
            err = abs(birkhoff_closed(x, m, spec) - birkhoff_brute(x, m, spec))
            rel = err / max(1, abs(m))
            w = max(w, rel)
            failures += rel > tol
        per[kind] = w
        worst = max(worst, w)
    return SuiteResult("birkhoff", failures == 0,
                       {"cases": cases, "mmax": mmax, "worst_scaled_error": worst,
                        "worst_by_profile": per, "failures": failures, "tolerance": tol})


def _abs_sin_ratio(m, theta: Fraction, dps=40):
    with mpmath.workdps(dps):
        r = (m * theta + 1) % 2 - 1
        th = mpmath.mpf(theta.numerator) / theta.denominator
        return abs(mpmath.sin(mpmath.pi * (mpmath.mpf(r.numerator) / r.denominator))
                   / mpmath.sin(mpmath.pi * th))


def _decide(m, theta: Fraction, label, q):
    """Decide one near-tight X-factor inequality rigorously."""
    w = abs(theta)
    if label in ("upper_m", "upper_q"):
        if m == 1:
            return True   # X(1) = 1
        # x - x^3/6 <= sin x <= x - x^3/6 + x^5/120 and pi^2 < 10 give
        # sin(pi m w) <= m sin(pi w) whenever w^2 <= 2 (m^2 - 1) / m^4
        if m * w <= Fraction(1, 2) and w * w <= Fraction(2 * (m * m - 1), m**4):
            return True
        dps = 40 + 2 * max(0, -math.floor(math.log10(float(w)) if w > Fraction(1, 10**300) else -2 * len(str(w.denominator))))
        bound = m if label == "upper_m" else q
        return _abs_sin_ratio(m, theta, dps) <= bound
    return _abs_sin_ratio(m, theta) >= 2 * mpmath.mpf(m) / mpmath.pi


@_timed
def suite_xfactor(mmax=10**4):
    """|X| <= m, |X| <= q_n for m < q_n and |X| >= 2m/pi for m <= q_{n+1}/2.

    Screened in floating point; anything within 1e-9 of a bound is decided
    at 40 significant digits.
    """
    checked = violations = rechecked = 0
    pairs = []
    ms = np.arange(1, mmax + 1)
    for kind, fv in (("exact", exact_profile()), ("relaxed", relaxed_profile())):
        for j in range(1, 5):
            for n in range(0, fv.depth + 1):
                q, qn1 = fv.q(j, n), fv.q(j, n + 1)
                theta, _ = centered_shift(q, fv.alpha(j))
                b = theta.denominator
                a = theta.numerator % (2 * b)
                # m theta reduced exactly to [-1, 1) so tiny shifts stay tiny
                r = np.array([float(Fraction((int(m) * a + b) % (2 * b) - b, b)) for m in ms])
                sth = math.sin(math.pi * float(theta))
                if sth != 0.0:
                    X = np.abs(np.sin(np.pi * r) / sth)
                else:
                    X = np.array([float(_abs_sin_ratio(int(m), theta)) for m in ms])
                qc = min(q, 2 * mmax + 2)   # larger q only matter through these masks
                checks = [(X <= ms, X - ms, "upper_m", np.ones_like(ms, bool))]
                checks.append((X <= qc, X - qc, "upper_q", ms < qc))
                lower = 2 * ms / math.pi
                checks.append((X >= lower, lower - X, "lower", 2 * ms <= min(qn1, 2 * mmax + 2)))
                for ok, gap, label, active in checks:
                    checked += int(active.sum())
                    close = active & (np.abs(gap) <= 1e-9 * np.maximum(1, ms))
                    bad = active & ~ok & ~close
                    violations += int(bad.sum())
                    for m in ms[close]:
                        rechecked += 1
                        violations += not _decide(int(m), theta, label, q)
                pairs.append(f"{kind}:{j}:{n}")
    return SuiteResult("xfactor", violations == 0,
                       {"mmax": mmax, "pairs": pairs, "checks": checked,
                        "high_precision_rechecks": rechecked, "violations": violations})


@_timed
def suite_hitcount(points=1000, tmin=1e2, tmax=1e5, ntimes=16, seed=0):
    """N(x, t) in [t/2, 2t] at s = 0."""
    rng = _rng(seed)
    times = np.geomspace(tmin, tmax, ntimes)
    violations = ties = 0
    worst = [math.inf, 0.0]
    for kind in ("exact", "relaxed"):
        eng = BatchEngine(spec_for(kind))
        u = dyadic_from_unit(rng.random((points, 4)))
        P = eng.phases(u)
        for t in times:
            N, _, tie = eng.hit_counts(P, np.full(points, t))
            ties += int(tie.sum())
            ratio = N / t
            worst = [min(worst[0], float(ratio.min())), max(worst[1], float(ratio.max()))]
            violations += int(np.sum((N < t / 2) | (N > 2 * t)))
    return SuiteResult("hitcount", violations == 0,
                       {"points": points, "times": ntimes, "N_over_t_range": worst,
                        "violations": violations, "ties": ties})


@_timed
def suite_stretch(intervals=100, theta=Fraction(1, 10), mmax=10**5, per_interval=6, seed=0):
    """Measured inf |d_j S_m phi| against theta m q e^(-q) on good intervals."""
    fv = exact_profile()
    spec = spec_for("exact")
    rng = _rng(seed)
    violations = 0
    worst_ratio = math.inf
    count = 0
    unreachable = []
    for j in (3, 4):
        w = window_for(fv, j, 1, widened=True)
        if w is None or w.lo > mmax:
            unreachable.append(j)
    for idx in range(intervals):
        j = 1 + idx % 2
        q = fv.q(j, 1)
        w = window_for(fv, j, 1, widened=True)
        m_lo = max(1, math.ceil(w.lo))
        m_hi = min(mmax, math.floor(w.hi_value) if w.hi_value < mmax else mmax)
        while True:
            x = _random_point(rng)
            comp = good_component(x[j - 1], q, theta)
            if comp is not None:
                break
        lo, hi = comp
        u = sorted(rng.random(2))
        a = lo + (hi - lo) * Fraction(u[0]).limit_denominator(1 << 30)
        b = lo + (hi - lo) * Fraction(u[1]).limit_denominator(1 << 30)
        if a == b:
            b = hi
        I = DirectedInterval(j, x, 0.0, a, b)
        ms = np.unique(np.round(np.exp(rng.uniform(math.log(m_lo), math.log(m_hi), per_interval))))
        for m in ms.astype(int):
            inf1, _ = measured_partial_extrema(I, int(m), spec)
            bound, _ = stretch_lower_bound(1, theta, j, int(m), fv, spec)
            count += 1
            worst_ratio = min(worst_ratio, inf1 / bound)
            violations += inf1 < bound
    return SuiteResult("stretch", violations == 0,
                       {"intervals": intervals, "checks": count, "theta": str(theta),
                        "min_measured_over_bound": worst_ratio, "violations": int(violations),
                        "certified_unreachable_directions": unreachable})


@_timed
def suite_windows(samples=10**4, log10_range=(0.0, 300.0), seed=0):
    """Every sampled t lies in at least three windows; the case tag is valid."""
    fv = exact_profile()
    rng = _rng(seed)
    ts = 10.0 ** rng.uniform(*log10_range, samples)
    short = bad_case = 0
    cases = {}
    for t in ts:
        c = stretch_windows(float(t), fv)
        inside = [w for w in c.windows if w.contains(float(t))]
        short += len(inside) < 3
        bad_case += c.case not in (1, 2, 3, 4)
        cases[c.case] = cases.get(c.case, 0) + 1
    return SuiteResult("windows", short == 0 and bad_case == 0,
                       {"samples": samples, "log10_range": list(log10_range),
                        "fewer_than_three": int(short), "bad_case_tags": int(bad_case),
                        "case_counts": {str(k): v for k, v in sorted(cases.items())}})


@_timed
def suite_partition(times=(1e3, 1e4, 1e5), eps=0.01, zeta=0.05):
    """Exact bad measure against 64 t^(-3/4 + 3 eps): ratio in [1/8, 1]."""
    fv = exact_profile()
    ratios = {}
    ok = True
    for t in times:
        P = build_partition(t, eps, zeta, fv)
        bound = 64 * t ** (-0.75 + 3 * eps)
        r = float(P.bad_measure) / bound
        ratios[repr(t)] = r
        ok &= (0.125 <= r <= 1.0) and (P.covered_measure + P.bad_measure == 1)
    return SuiteResult("partition", ok, {"eps": eps, "bad_over_bound": ratios})


@_timed
def suite_fiber(points=100, tol=1e-8, seed=0):
    """|phi(x) - int_0^1 Phi(x + s alpha, s) ds| at random x."""
    rng = _rng(seed)
    worst = {}
    for kind in ("exact", "relaxed"):
        rspec = ReparamSpec.build(spec_for(kind))
        worst[kind] = max(verify_fiber_integral(_random_point(rng), rspec)
                          for _ in range(points // 2))
    w = max(worst.values())
    return SuiteResult("fiber", w < tol, {"points": points, "worst_residual": w,
                                          "by_profile": worst, "tolerance": tol})


def canonical_test_box(T=0.35, anchor=0.4):
    """Relaxed level-1 canonical box used by the correlation suites."""
    spec = spec_for("relaxed")
    return make_flow_box(canonical_box(spec.fv, 1), T, spec, anchor=anchor), spec


@_timed
def suite_autoconvolution(samples=10**5, ntimes=20, seed=0, shards=32, zeta=0.05,
                          halfwidth=0.3, nsigma=3.0):
    """Box correlations against delta_ij (psi' * psi')(t) for |t| < T_J."""
    box, spec = canonical_test_box()
    f1 = make_observable(box, spec, "F", zeta, halfwidth=halfwidth)
    f2 = make_observable(box, spec, "F", zeta, parities=("odd", "even", "even", "even"),
                         halfwidth=halfwidth)
    rng = _rng(seed)
    near = rng.uniform(-2 * halfwidth, 2 * halfwidth, ntimes // 2)
    far = rng.uniform(-box.TJ_lower, box.TJ_lower, ntimes - ntimes // 2)
    times = np.concatenate([near, far])
    worst = 0.0
    fails = 0
    ties = 0
    pairs = {}
    for name, (f, g) in {"11": (f1, f1), "12": (f1, f2), "22": (f2, f2)}.items():
        vals, err, tie, total = correlation_many(f, g, times, spec, samples, seed, shards,
                                                 method="direct")
        ref = np.array([autoconvolution_reference(f, g, t) for t in times])
        z = np.abs(vals - ref) / np.where(err > 0, err, np.inf)
        exact_zero = (err == 0) & (vals != ref)
        fails += int(np.sum(z > nsigma)) + int(exact_zero.sum())
        worst = max(worst, float(z.max()))
        ties += tie
        pairs[name] = {"max_z": float(z.max()), "samples": total}
    return SuiteResult("autoconvolution", fails == 0,
                       {"times": ntimes, "T_J_lower": box.TJ_lower, "max_z": worst,
                        "failures": fails, "pairs": pairs, "ties": ties})


def decay_observables(zeta=0.05):
    spec = spec_for("relaxed")
    h = TrigProduct(amps=(0.0, 0.5, 0.0, 0.0))
    f = make_fiber_observable(spec, "F", zeta, h)
    g = make_fiber_observable(spec, "G", zeta, h)
    return f, g, spec


@_timed
def suite_decay(decades=2.0, npoints=5, eps=0.01, max_slope=-0.35, drift_cap=10.0):
    """Correlation decay over two decades above T_J (deterministic quadrature)."""
    box, _ = canonical_test_box()
    f, g, spec = decay_observables()
    TJ = box.TJ_lower
    times = np.geomspace(TJ, TJ * 10**decades, npoints)
    ser = decay_series(f, g, times, spec, eps=eps, method="quadrature")
    fit = fit_decay(ser)
    used = fit.used
    span = math.log10(times[used].max() / times[used].min()) if len(used) >= 2 else 0.0
    per = np.abs(ser.values) / (ser.N1 * times ** (-0.5 - eps))
    first = times <= TJ * 10
    growth = float(per.max() / per[first].max())
    ok = (len(used) >= 2 and span >= decades - 1e-9 and fit.slope <= max_slope
          and growth <= drift_cap and np.all(np.abs(ser.values) <= ser.bound_curve() * (1 + 1e-12)))
    return SuiteResult("decay", bool(ok), {
        "T_J_lower": TJ, "times": times.tolist(), "values": ser.values.tolist(),
        "errors": ser.stderr.tolist(), "N1": ser.N1, "C": ser.bound_constant,
        "slope": fit.slope, "uncensored": used.tolist(), "decades_spanned": span,
        "constant_growth_after_first_decade": growth,
    })


@_timed
def suite_grouplaw(cases=1000, tmax=1e4, tol=1e-9, seed=0):
    """T^(t+u) against T^t o T^u: equal base points, fiber gap <= tol."""
    rng = _rng(seed)
    worst = 0.0
    base_mismatch = fails = 0
    for kind in ("exact", "relaxed"):
        spec = spec_for(kind)
        for _ in range(cases // 2):
            x = _random_point(rng)
            p = FlowPoint.make(x, rng.random() * spec.margin, spec)
            t, u = rng.uniform(-tmax, tmax, 2)
            a = flow_map(p, t + u, spec)
            b = flow_map(flow_map(p, u, spec), t, spec)
            if a.x != b.x:
                base_mismatch += 1
                continue
            gap = abs(a.s - b.s)
            worst = max(worst, gap)
            fails += gap > tol
    return SuiteResult("grouplaw", base_mismatch == 0 and fails == 0,
                       {"cases": cases, "worst_fiber_gap": worst,
                        "base_mismatches": base_mismatch, "failures": int(fails), "tolerance": tol})


SUITES = {
    "none": suite_none,
    "birkhoff": suite_birkhoff,
    "xfactor": suite_xfactor,
    "hitcount": suite_hitcount,
    "stretch": suite_stretch,
    "windows": suite_windows,
    "partition": suite_partition,
    "fiber": suite_fiber,
    "autoconvolution": suite_autoconvolution,
    "decay": suite_decay,
    "grouplaw": suite_grouplaw,
}

# acceptance criteria in order, each mapped to the suite that decides it
ACCEPTANCE = (
    "birkhoff", "xfactor", "hitcount", "stretch", "windows",
    "partition", "fiber", "autoconvolution", "decay", "grouplaw",
)
