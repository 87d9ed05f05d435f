"""End-to-end acceptance checks, one per criterion, at full size.

Each test prints a single ``criterion N: PASS|FAIL`` line with its key
metrics so the run log doubles as a report.
"""
from fractions import Fraction

import pytest

from torusflow import suites

CRITERIA = [
    (1, "birkhoff sum oracle", suites.suite_birkhoff,
     dict(cases=1000, mmax=10**4, tol=1e-9), ("worst_scaled_error",)),
    (2, "sine-factor certificates", suites.suite_xfactor,
     dict(mmax=10**4), ("violations",)),
    (3, "hitting count window", suites.suite_hitcount,
     dict(points=1000, tmin=1e2, tmax=1e5), ("violations", "N_over_t_range")),
    (4, "stretch lower bound", suites.suite_stretch,
     dict(intervals=100, theta=Fraction(1, 10), mmax=10**5), ("violations", "min_measured_over_bound", "certified_unreachable_directions")),
    (5, "triple window coverage", suites.suite_windows,
     dict(samples=10**4), ("fewer_than_three", "bad_case_tags")),
    (6, "partition bad measure", suites.suite_partition,
     dict(times=(1e3, 1e4, 1e5), eps=0.01), ("bad_over_bound",)),
    (7, "fiber integral identity", suites.suite_fiber,
     dict(points=100, tol=1e-8), ("worst_residual",)),
    (8, "short-time autoconvolution", suites.suite_autoconvolution,
     dict(samples=10**5, ntimes=20, nsigma=3.0), ("max_z", "failures")),
    (9, "correlation decay", suites.suite_decay,
     dict(decades=2.0, eps=0.01, max_slope=-0.5 + 0.15), ("slope", "C", "decades_spanned")),
    (10, "flow group law", suites.suite_grouplaw,
     dict(cases=1000, tmax=1e4, tol=1e-9), ("worst_fiber_gap", "base_mismatches")),
]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


@pytest.mark.parametrize("number,label,suite,kwargs,shown", CRITERIA,
                         ids=[f"criterion{c[0]}" for c in CRITERIA])
def test_criterion(number, label, suite, kwargs, shown, capsys):
    res = suite(**kwargs)
    info = ", ".join(f"{k}={_fmt(res.metrics[k])}" for k in shown if k in res.metrics)
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if res.passed else 'FAIL'} "
              f"({label}; {info}; {res.seconds:.1f}s)")
    assert res.passed, res.metrics
