import csv
import io
import json

import pytest

from flatrenorm.cli import main
from flatrenorm.examples import example_path

from conftest import BASE


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    base = d / "base.json"
    base.write_text(json.dumps(BASE))
    tuned = d / "tuned.json"
    assert main(["tune", str(base), "--knob", "x4", "--range", "0.536", "0.55", "--depth", "13", "--out", str(tuned), "--log", str(d / "rt.log")]) == 0
    return d, base, tuned


def test_validate_ok_and_report(files, capsys):
    d, base, _ = files
    out = d / "v.json"
    assert main(["validate", str(base), "--grid", "256", "--samples", "8", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["report"]["passed"] and len(rep["meta"]["config_hash"]) == 64


def test_validate_failure_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(BASE, x2="0.6")))
    out = tmp_path / "v.json"
    assert main(["validate", str(bad), "--grid", "64", "--samples", "4", "--out", str(out)]) == 2
    assert "critical_value_left_of_flat" in json.loads(out.read_text())["violations"]


def test_usage_errors(tmp_path):
    assert main([]) == 1
    assert main(["renorm"]) == 1
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["validate", str(broken)]) == 1
    numeric = tmp_path / "numeric.json"
    numeric.write_text(json.dumps(dict(BASE, x1=-0.4)))
    assert main(["validate", str(numeric)]) == 1
    assert main(["renorm", str(numeric), "--depth", "0"]) == 1


def test_tune_output(files):
    d, _, tuned = files
    obj = json.loads(tuned.read_text())
    assert obj["meta"]["tuned_depth"] == 13
    assert obj["meta"]["return_times"] == [1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377]
    assert (d / "rt.log").read_text().startswith("# return times")


def test_tune_failure(files, tmp_path):
    _, base, _ = files
    assert main(["tune", str(base), "--range", "0.60", "0.61", "--depth", "6", "--out", str(tmp_path / "t.json")]) == 3


def test_renorm_csv_deterministic(files, tmp_path):
    _, _, tuned = files
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["renorm", str(tuned), "--depth", "8", "--grid", "32", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    rows = list(csv.DictReader(io.StringIO("\n".join(l for l in lines if not l.startswith("#")))))
    assert [int(r["level"]) for r in rows] == list(range(1, 9))
    assert all(r["class_ok"] == "true" for r in rows)


def test_renorm_dual_mismatch_exit(files, tmp_path):
    _, _, tuned = files
    assert main(["renorm", str(tuned), "--depth", "6", "--dual-tol", "1e-300", "--out", str(tmp_path / "x.csv")]) == 4


def test_renorm_untuned_exit(files, tmp_path):
    _, base, _ = files
    assert main(["renorm", str(base), "--depth", "12", "--out", str(tmp_path / "x.csv")]) == 2


def test_budget_exit(files, tmp_path, monkeypatch):
    _, _, tuned = files
    monkeypatch.setenv("FLATRENORM_PRECISION_MAX", "100")
    assert main(["renorm", str(tuned), "--depth", "6", "--precision", "256", "--out", str(tmp_path / "x.csv")]) == 5


def test_fingerprint_and_classify(tmp_path):
    tuned = example_path("golden_base")
    fp = tmp_path / "fp.json"
    assert main(["fingerprint", str(tuned), "--depth", "14", "--out", str(fp)]) == 0
    obj = json.loads(fp.read_text())
    assert float(obj["lambda_u"]) > 1 and "meta" in obj
    out = tmp_path / "c.json"
    assert main(["classify", str(tuned), str(tuned), "--depth", "14", "--conj-depth", "8", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["verdict"] == "C1_diffeomorphism"
