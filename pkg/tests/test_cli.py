import json
import math

import pytest
from numpy.testing import assert_allclose

from src import db
from src.cli import build_parser, run


def _run(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out else None)


def test_kernel_at_origin(capsys):
    code, doc = _run(capsys, "kernel", "--R", "0", "--z", "0")
    assert code == 0
    assert doc["schema_version"] == 1
    assert doc["command"] == "kernel"
    assert_allclose(doc["outputs"]["p"]["value"], 0.0625, atol=1e-10)
    assert doc["outputs"]["sign"] == 1.0
    assert len(doc["manifest"]["result_digest"]) == 64
    assert "wall_clock_s" not in doc["manifest"]


def test_output_is_deterministic(capsys):
    run(["distance", "--R", "2", "--z", "1.5"])
    first = capsys.readouterr().out
    run(["distance", "--R", "2", "--z", "1.5"])
    assert capsys.readouterr().out == first


def test_timing_only_with_flag(capsys):
    _, doc = _run(capsys, "distance", "--R", "1", "--timing")
    assert doc["manifest"]["wall_clock_s"] >= 0.0


def test_domain_error_exit_code(capsys):
    code, doc = _run(capsys, "kernel", "--R", "-1")
    assert code == 2
    assert doc is None
    code, _ = _run(capsys, "kernel", "--R", "1", "--k1", "3", "--k2", "2")
    assert code == 2


def test_missing_arguments_exit_two():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["kernel"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        run(["aniso", "--pairs", "1:1"])
    assert info.value.code == 2


def test_herbst_writes_csv(capsys, tmp_path):
    path = tmp_path / "tails.csv"
    code, doc = _run(capsys, "herbst", "--eta", "0.5", "--theta", "5", "--k1", "1.2",
                     "--radii", "2,10", "--csv", str(path))
    assert code == 0
    assert_allclose(doc["outputs"]["B"]["value"], 1.7)
    assert [t["form"] for t in doc["outputs"]["tails"]][-1] == "gaussian"
    assert [t["r"] for t in doc["outputs"]["tails"]] == [{"value": 2.0, "error": 0.0}, {"value": 10.0, "error": 0.0}]
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "r,bound,form,lambda"
    assert len(lines) == 3


def test_store_records_run(capsys, tmp_path):
    store = str(tmp_path / "runs.db")
    _, doc = _run(capsys, "distance", "--R", "1", "--z", "1", "--store", store)
    runs = db.get_runs(db.get_connection(store))
    assert len(runs) == 1
    assert runs[0]["command"] == "distance"
    assert runs[0]["result_digest"] == doc["manifest"]["result_digest"]


def test_aniso_point(capsys):
    code, doc = _run(capsys, "aniso", "--pairs", "1:2,2:1", "--norms", "1,1.2", "--z", "1", "--shift", "0.5")
    assert code == 0
    out = doc["outputs"]
    assert 0.0 < out["y"]["value"] < math.pi / 2.0
    assert out["p"]["value"] > 0.0
    assert out["contour_residual"]["value"] <= 1e-8
    assert doc["inputs"]["pairs"] == [[1.0, 2], [2.0, 1]]


def test_verify_failure_exit_code(capsys):
    code, doc = _run(capsys, "verify", "--theta", "5", "--eta", "-50", "--measure", "haar",
                     "--family", "translated-bump", "--distances", "0")
    assert code == 4
    assert doc["outputs"]["passed"] is False
    assert doc["outputs"]["min_margin"]["value"] < 0.0


@pytest.mark.slow
def test_constants(capsys):
    code, doc = _run(capsys, "constants")
    assert code == 0
    assert_allclose(doc["outputs"]["be_lower_bound"]["value"], math.sqrt(2.0), rtol=1e-15)
    assert_allclose(doc["outputs"]["k_nm"]["value"], 0.3035754, atol=1e-5)
    assert set(doc["outputs"]["tau"]) == {"value", "error"}
