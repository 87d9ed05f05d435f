import csv
import io
import json

import pytest

from torusflow import cli, errors
from torusflow.ceiling import CeilingSpec
from torusflow.io import config_hash, load_profile, profile_from_dict, profile_to_dict, save_profile
from torusflow.suites import exact_profile, relaxed_profile, spec_for


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_profile_round_trip(tmp_path):
    for fv in (exact_profile(), relaxed_profile()):
        spec = CeilingSpec.build(fv)
        path = tmp_path / "p.json"
        save_profile(path, fv, spec)
        fv2, spec2 = load_profile(path)
        assert fv2 == fv and spec2 == spec


def test_tampered_profile_rejected():
    d = profile_to_dict(relaxed_profile())
    d["coefficients"][1][1] = "5"
    with pytest.raises(errors.InvalidInputError):
        profile_from_dict(d)
    with pytest.raises(errors.InvalidInputError):
        profile_from_dict({"format": "other"})


def test_config_hash_is_key_order_free():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_build_profile_and_flow_eval(tmp_path, capsys):
    out = tmp_path / "relaxed.json"
    code, _, _ = run(capsys, "build-profile", "--kind", "relaxed", "--depth", "2", "--out", str(out))
    assert code == 0 and out.exists()
    code, text, _ = run(capsys, "flow", "eval", "--profile", str(out), "--t", "12.5",
                        "--point", "[0.25, 0.5, 0.125, 0.75, 0.1]")
    assert code == 0
    doc = json.loads(text)
    assert doc["t"] == 12.5 and len(doc["tool"]["config_hash"]) == 64


def test_exact_depth_two_hits_resource_limit(tmp_path, capsys):
    code, _, err = run(capsys, "build-profile", "--kind", "exact", "--depth", "2",
                       "--out", str(tmp_path / "x.json"))
    assert code == cli.EXIT_RESOURCE
    assert "resource limit" in err


def test_bad_seed_is_usage_error(tmp_path, capsys):
    code, _, _ = run(capsys, "build-profile", "--seed-coeffs", "0;;;", "--out", str(tmp_path / "x.json"))
    assert code == 2
    code, _, _ = run(capsys, "no-such-command")
    assert code == 2


def test_verify_reports_json(capsys):
    code, text, _ = run(capsys, "verify", "--suite", "hitcount", "--suite", "partition")
    assert code == 0
    doc = json.loads(text)
    names = [r["name"] for r in doc["suites"]]
    assert names == ["hitcount", "partition"] and all(r["passed"] for r in doc["suites"])


def test_partition_json(capsys):
    code, text, _ = run(capsys, "partition", "--kind", "exact", "--t", "1e4", "--atoms", "3")
    assert code == 0
    doc = json.loads(text)
    assert len(doc["atoms"]) <= 3 and doc["bad_measure_float"] <= doc["bound"]


def test_decay_csv_is_reproducible(capsys):
    args = ("decay", "--times", "124,1240", "--method", "quadrature")
    code, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert code == 0 and a == b
    rows = list(csv.reader(line for line in io.StringIO(a) if not line.startswith("#")))
    assert rows[0] == ["t", "value", "stderr", "bound_curve"]
    assert len(rows) == 3


def test_trajectory_and_spectrum(capsys, tmp_path):
    code, text, _ = run(capsys, "flow", "trajectory", "--point", "[0.25, 0.5, 0.125, 0.75, 0.1]",
                        "--times", "0,1,2,3")
    assert code == 0
    assert len([l for l in text.splitlines() if l and not l.startswith("#")]) == 5
    series = tmp_path / "c.csv"
    series.write_text("t,value\n" + "\n".join(f"{t},{max(0.0, 1 - abs(t))}" for t in
                                              [x / 4 for x in range(-8, 9)]) + "\n")
    code, text, _ = run(capsys, "spectrum", "--input", str(series))
    assert code == 0 and text.splitlines()[1].startswith("freq")
