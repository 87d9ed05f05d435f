"""JSON documents for frequency profiles and ceiling tables.

Big integers and rationals are written as decimal strings.  Amplitudes
are written with ``repr`` so they round-trip exactly; an amplitude that
underflowed to zero carries ``"underflow": true`` so it cannot be
mistaken for a missing term.
"""
from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path

from . import __version__
from .arithmetic import Certificate, ContinuedFraction, FrequencyVector, Profile, certify
from .ceiling import CeilingSpec, CeilingTerm, ReparamSpec
from .errors import InvalidInputError

FORMAT = "torusflow-profile/1"


def canonical_json(obj) -> str:
    """Sorted-key, fixed-separator JSON; the basis of config hashes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def profile_to_dict(fv: FrequencyVector) -> dict:
    return {
        "format": FORMAT,
        "version": __version__,
        "profile": fv.profile.to_dict(),
        "depth": fv.depth,
        "digit_cap": fv.digit_cap,
        "coefficients": [[str(a) for a in cf.coeffs] for cf in fv.cfs],
        "denominators": [[str(fv.q(j, n)) for n in range(1, fv.depth + 1)] for j in range(1, 5)],
        "certificates": [c.to_dict() for c in fv.certificates],
        "fully_certified": fv.fully_certified,
    }


def profile_from_dict(d: dict, recheck=True) -> FrequencyVector:
    """Rebuild a frequency vector; with ``recheck`` the stored certificates
    must agree with a fresh exact certification."""
    if d.get("format") != FORMAT:
        raise InvalidInputError(f"not a {FORMAT} document")
    try:
        cfs = tuple(ContinuedFraction(tuple(int(a) for a in c)) for c in d["coefficients"])
        profile = Profile.from_dict(d["profile"])
        certs = tuple(Certificate.from_dict(c) for c in d["certificates"])
        fv = FrequencyVector(cfs, int(d["depth"]), profile, certs, int(d.get("digit_cap", 10_000)))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed profile document: {exc}") from exc
    if recheck:
        fresh = {(c.level, c.j): (c.exponent, c.holds, c.holds_e) for c in certify(fv)}
        stored = {(c.level, c.j): (c.exponent, c.holds, c.holds_e) for c in certs}
        if fresh != stored:
            raise InvalidInputError("stored certificates do not match the coefficients")
    return fv


def spec_to_dict(spec: CeilingSpec, reparam: ReparamSpec | None = None) -> dict:
    def term(t):
        return {
            "j": t.j, "n": t.n, "q": str(t.q),
            "amplitude": repr(t.amplitude),
            "underflow": t.amplitude == 0.0,
            "shift": str(t.shift),
        }

    out = {"n0": spec.n0, "nmax": spec.nmax, "terms": [term(t) for t in spec.terms]}
    if reparam is not None:
        out["reparam"] = [
            {"j": t.j, "n": t.n, "l": str(t.l), "d": [repr(t.d.real), repr(t.d.imag)],
             "underflow": t.d == 0}
            for t in reparam.terms
        ]
    return out


def spec_from_dict(d: dict, fv: FrequencyVector) -> CeilingSpec:
    terms = tuple(
        CeilingTerm(int(t["j"]), int(t["n"]), int(t["q"]),
                    0.0 if t["underflow"] else float(t["amplitude"]), Fraction(t["shift"]))
        for t in d["terms"]
    )
    spec = CeilingSpec(fv, int(d["n0"]), int(d["nmax"]), terms)
    if spec != CeilingSpec.build(fv, spec.n0, spec.nmax):
        raise InvalidInputError("stored ceiling table does not match the profile")
    return spec


def save_profile(path, fv: FrequencyVector, spec: CeilingSpec | None = None, extra=None):
    doc = profile_to_dict(fv)
    if spec is not None:
        doc["ceiling"] = spec_to_dict(spec, ReparamSpec.build(spec))
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def load_profile(path, recheck=True):
    """(fv, spec or None) from a profile document."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read profile {path}: {exc}") from exc
    fv = profile_from_dict(d, recheck)
    spec = spec_from_dict(d["ceiling"], fv) if "ceiling" in d else None
    return fv, spec
