"""Command line front end.

Exit codes: 0 success, 1 invariant failure, 2 usage error, 3 resource limit.
Every artifact carries the tool version and a hash of the run
configuration, and no artifact contains wall-clock data, so identical
configurations reproduce byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic import Profile, build_y_vector
from .ceiling import CeilingSpec
from .errors import InvalidInputError, ResourceLimitError, TorusFlowError
from .io import config_hash, load_profile, save_profile

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    """Everything a run depends on besides the code version."""

    command: str
    profile: str | None = None          # path to a profile document
    profile_kind: str = "relaxed"       # used when no path is given
    nmax: int | None = None             # ceiling truncation level
    zeta: float = 0.05
    eps: float = 0.01
    theta: str | None = None
    times: list = field(default_factory=list)
    samples: int = 2**15
    seed: int = 0
    params: dict = field(default_factory=dict)
    out: str | None = None

    def to_dict(self):
        d = asdict(self)
        d.pop("out")   # where results go does not change them
        return d

    @property
    def hash(self):
        return config_hash(self.to_dict())

    def header(self):
        return f"# torusflow {__version__} config_hash={self.hash}"

    def stamp(self):
        return {"version": __version__, "config_hash": self.hash, "config": self.to_dict()}

    @classmethod
    def from_file(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(**d)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

class UsageError(Exception):
    pass


def _spec(cfg: ExperimentConfig):
    if cfg.profile:
        fv, spec = load_profile(cfg.profile)
        if spec is None or (cfg.nmax is not None and spec.nmax != cfg.nmax):
            spec = CeilingSpec.build(fv, nmax=cfg.nmax)
        return spec
    if cfg.profile_kind == "exact":
        fv = build_y_vector()
    elif cfg.profile_kind == "relaxed":
        fv = build_y_vector(depth=2, profile=Profile.relaxed())
    else:
        raise UsageError(f"unknown profile kind {cfg.profile_kind!r}")
    return CeilingSpec.build(fv, nmax=cfg.nmax)


def _emit(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(cfg, header, rows):
    buf = _io.StringIO()
    buf.write(cfg.header() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _parse_seed(text):
    """'2;;;' or '2,3;;;' -> four coefficient tuples."""
    parts = text.split(";")
    if len(parts) != 4:
        raise UsageError("seed needs four ';'-separated coefficient lists")
    try:
        return tuple(tuple(int(a) for a in p.split(",") if a.strip()) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad seed coefficient: {exc}") from exc


def _parse_point(text):
    """JSON {"x": [...], "s": ...} or a list x1..x4, s; entries may be strings."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"point is not JSON: {exc}") from exc
    if isinstance(d, dict):
        x, s = d["x"], d.get("s", 0.0)
    else:
        x, s = d[:4], (d[4] if len(d) > 4 else 0.0)
    return [Fraction(str(v)) for v in x], float(s)


def _times(args):
    if args.times:
        return [float(t) for t in args.times.split(",")]
    grid = np.geomspace if args.log else np.linspace
    return grid(args.tmin, args.tmax, args.count).tolist()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_build_profile(args):
    seed = _parse_seed(args.seed_coeffs)
    if args.kind == "exact":
        profile = Profile.exact()
    else:
        try:
            profile = Profile.relaxed(Fraction(args.base), int(float(args.cap)))
        except (ValueError, ZeroDivisionError, InvalidInputError) as exc:
            raise UsageError(str(exc)) from exc
    cfg = ExperimentConfig("build-profile", profile_kind=args.kind,
                           params={"seed": args.seed_coeffs, "depth": args.depth,
                                   "base": args.base, "cap": args.cap,
                                   "digit_cap": args.digit_cap},
                           out=args.out)
    try:
        fv = build_y_vector(seed, args.depth, profile, digit_cap=args.digit_cap)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc
    spec = CeilingSpec.build(fv)
    doc = save_profile(args.out, fv, spec, {"tool": cfg.stamp()})
    print(f"wrote {args.out}: depth {fv.depth}, fully certified: {doc['fully_certified']}")
    return EXIT_OK if (fv.fully_certified or args.kind == "relaxed") else EXIT_FAIL


def cmd_verify(args):
    from .suites import ACCEPTANCE, SUITES

    names = []
    for s in args.suite or ["none"]:
        if s == "all":
            names.extend(n for n in SUITES if n != "none")
        elif s == "acceptance":
            names.extend(ACCEPTANCE)
        elif s in SUITES:
            names.append(s)
        else:
            raise UsageError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    cfg = ExperimentConfig("verify", params={"suites": names}, out=args.out)
    results = [SUITES[n]() for n in names]
    report = {
        "tool": cfg.stamp(),
        "passed": all(r.passed for r in results),
        "suites": [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results],
    }
    if args.timings:
        report["seconds"] = {r.name: round(r.seconds, 3) for r in results}
    _emit(_json(report), args.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_flow(args):
    from .flow import FlowPoint, flow_map, trajectory

    cfg = ExperimentConfig("flow " + args.action, args.profile, args.kind,
                           params={"point": args.point, "t": args.t,
                                   "times": getattr(args, "times", None)},
                           out=args.out)
    spec = _spec(cfg)
    x, s = _parse_point(args.point)
    p = FlowPoint.make(x, s, spec)
    if args.action == "eval":
        q = flow_map(p, args.t, spec)
        _emit(_json({"tool": cfg.stamp(), "t": args.t, "point": p.to_dict(),
                     "image": q.to_dict()}), args.out)
    else:
        times = _times(args)
        cfg.times = times
        rows = [[t, *[float(v) for v in q.x], q.s] for t, q in zip(times, trajectory(p, times, spec))]
        _emit(_csv(cfg, ["t", "x1", "x2", "x3", "x4", "s"], rows), args.out)
    return EXIT_OK


def cmd_partition(args):
    from .stretch import build_partition

    cfg = ExperimentConfig("partition", args.profile, args.kind, zeta=args.zeta, eps=args.eps,
                           times=[args.t], seed=args.seed, params={"atoms": args.atoms},
                           out=args.out)
    spec = _spec(cfg)
    P = build_partition(args.t, args.eps, args.zeta, spec.fv, spec)
    atoms = P.sample_atoms(args.atoms, np.random.default_rng(args.seed)) if args.atoms else ()
    doc = P.to_dict(atoms)
    doc["tool"] = cfg.stamp()
    _emit(_json(doc), args.out)
    return EXIT_OK


def _decay_observables(cfg, spec, kind):
    from .correlation import TrigProduct, make_fiber_observable, make_observable
    from .flow import canonical_box, make_flow_box

    if kind == "fiber":
        h = TrigProduct(amps=(0.0, 0.5, 0.0, 0.0))
        return (make_fiber_observable(spec, "F", cfg.zeta, h),
                make_fiber_observable(spec, "G", cfg.zeta, h))
    box = make_flow_box(canonical_box(spec.fv, 1), 0.35, spec, anchor=0.4)
    return (make_observable(box, spec, "F", cfg.zeta, halfwidth=0.3),
            make_observable(box, spec, "G", cfg.zeta, halfwidth=0.3))


def cmd_decay(args):
    from .correlation import decay_series, fit_decay

    times = _times(args)
    cfg = ExperimentConfig("decay", args.profile, args.kind, zeta=args.zeta, eps=args.eps,
                           times=times, samples=args.samples, seed=args.seed,
                           params={"method": args.method, "observables": args.observables,
                                   "shards": args.shards},
                           out=args.out)
    spec = _spec(cfg)
    f, g = _decay_observables(cfg, spec, args.observables)
    ser = decay_series(f, g, times, spec, args.samples, args.seed, args.eps, args.shards,
                       method=args.method)
    fit = fit_decay(ser)
    bound = ser.bound_curve()
    rows = [[t, v, e, b] for t, v, e, b in zip(ser.times, ser.values, ser.stderr, bound)]
    text = _csv(cfg, ["t", "value", "stderr", "bound_curve"], rows)
    text += (f"# C={ser.bound_constant!r} N1={ser.N1!r} slope={fit.slope!r} "
             f"censored={len(fit.censored)} drift={ser.constant_drift!r} ties={ser.ties}\n")
    _emit(text, args.out)
    return EXIT_OK


def _read_series(path):
    """(t, value) columns of a CSV; comment lines and a header row are skipped."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(line for line in fh if not line.startswith("#")):
                if not row:
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if rows:
                        raise UsageError(f"{path}: bad row {row!r}")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: no data rows")
    data = np.array(rows)
    return data[:, 0], data[:, 1]


def cmd_spectrum(args):
    from .correlation import autoconvolution_reference, spectral_density

    cfg = ExperimentConfig("spectrum", args.profile, args.kind, zeta=args.zeta,
                           params={"input": args.input, "window": args.window,
                                   "tmax": args.tmax, "count": args.count},
                           out=args.out)
    if args.input:
        times, values = _read_series(args.input)
    else:
        spec = _spec(cfg)
        f, _ = _decay_observables(cfg, spec, "box")
        times = np.linspace(-args.tmax, args.tmax, args.count)
        values = np.array([autoconvolution_reference(f, f, t) for t in times])
    cfg.times = [float(times[0]), float(times[-1]), len(times)]
    freqs, dens, report = spectral_density(times, values, args.window)
    text = _csv(cfg, ["frequency", "density"], zip(freqs, dens))
    text += f"# clipped_points={report['clipped_points']} clipped_fraction={report['clipped_fraction']!r}\n"
    _emit(text, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _profile_args(p):
    p.add_argument("--profile", help="profile JSON written by build-profile")
    p.add_argument("--kind", choices=("exact", "relaxed"), default="relaxed",
                   help="built-in profile when --profile is absent (default relaxed)")


def _time_args(p, tmin, tmax, count, log=True):
    p.add_argument("--times", help="comma-separated times (overrides the grid)")
    p.add_argument("--tmin", type=float, default=tmin)
    p.add_argument("--tmax", type=float, default=tmax)
    p.add_argument("--count", type=int, default=count)
    p.add_argument("--linear", dest="log", action="store_false", default=log,
                   help="linear rather than logarithmic grid")


def build_parser():
    ap = argparse.ArgumentParser(prog="torusflow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"torusflow {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-profile", help="construct and certify a frequency vector")
    p.add_argument("--kind", choices=("exact", "relaxed"), default="exact")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--seed-coeffs", default="2;;;",
                   help="fixed leading coefficients, e.g. '2;;;' or '2,13;;;'")
    p.add_argument("--base", default="3/2", help="relaxed growth base")
    p.add_argument("--cap", default="1e6", help="relaxed denominator cap")
    p.add_argument("--digit-cap", type=int, default=10_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_profile)

    p = sub.add_parser("verify", help="run invariant suites and print a JSON report")
    p.add_argument("--suite", action="append",
                   help="suite name, 'all' or 'acceptance' (repeatable; default none)")
    p.add_argument("--timings", action="store_true", help="include run times (not reproducible)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("flow", help="evaluate the special flow")
    fsub = p.add_subparsers(dest="action", required=True)
    e = fsub.add_parser("eval", help="image of one point, as JSON")
    _profile_args(e)
    e.add_argument("--t", type=float, required=True)
    e.add_argument("--point", required=True, help='JSON {"x": [...4], "s": s} or [x1..x4, s]')
    e.add_argument("--out")
    e.set_defaults(func=cmd_flow, t=None)
    tr = fsub.add_parser("trajectory", help="orbit samples as CSV")
    _profile_args(tr)
    tr.add_argument("--point", required=True)
    _time_args(tr, 0.0, 10.0, 101, log=False)
    tr.add_argument("--out")
    tr.set_defaults(func=cmd_flow, t=None)

    def partition_parser(parent, name):
        q = parent.add_parser(name, help="three-stage partition into good intervals, as JSON")
        _profile_args(q)
        q.set_defaults(kind="exact")
        q.add_argument("--t", type=float, required=True)
        q.add_argument("--eps", type=float, default=0.01)
        q.add_argument("--zeta", type=float, default=0.05)
        q.add_argument("--atoms", type=int, default=8, help="sample atoms to list")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out")
        q.set_defaults(func=cmd_partition)

    p = sub.add_parser("stretch", help="stretch-analysis artifacts")
    partition_parser(p.add_subparsers(dest="action", required=True), "partition")
    partition_parser(sub, "partition")

    p = sub.add_parser("decay", help="correlation decay series as CSV")
    _profile_args(p)
    _time_args(p, 124.0, 12400.0, 5)
    p.add_argument("--method", choices=("quadrature", "fiber", "direct"), default="quadrature")
    p.add_argument("--observables", choices=("fiber", "box"), default="fiber")
    p.add_argument("--samples", type=int, default=2**15)
    p.add_argument("--shards", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--zeta", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("spectrum", help="windowed spectral density as CSV")
    _profile_args(p)
    p.add_argument("--input", help="CSV with t, value columns (e.g. from decay)")
    p.add_argument("--tmax", type=float, default=1.0,
                   help="half-width of the autoconvolution grid when no input is given")
    p.add_argument("--count", type=int, default=401)
    p.add_argument("--window", default="hann")
    p.add_argument("--zeta", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"torusflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"torusflow: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except InvalidInputError as exc:
        print(f"torusflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TorusFlowError as exc:
        print(f"torusflow: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
