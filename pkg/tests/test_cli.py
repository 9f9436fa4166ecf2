import json
from importlib import resources

import pytest

from bsl_lab.cli import main

DATA = resources.files("bsl_lab") / "data"


@pytest.fixture
def scheme_file(tmp_path):
    p = tmp_path / "genus2.json"
    p.write_text((DATA / "genus2_scheme.json").read_text())
    return p


@pytest.fixture
def map_file(tmp_path):
    p = tmp_path / "map.json"
    p.write_text((DATA / "genus2_map.json").read_text())
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_scheme_validate(capsys, scheme_file):
    code, out, _ = run(capsys, "scheme", "validate", scheme_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["violations"] == []
    assert doc["gamma_cycles"] == [[1, 4, 7, 2, 5, 8, 3, 6]]


def test_scheme_validate_rejects_adjacent_pairing(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"two_n": 8, "iota": [2, 1, 4, 3, 6, 5, 8, 7]}))
    code, _, err = run(capsys, "scheme", "validate", p)
    assert code == 2
    assert "error" in err


def test_scheme_validate_rejects_garbage(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(capsys, "scheme", "validate", p)[0] == 2


def test_scheme_enumerate(capsys):
    code, out, _ = run(capsys, "scheme", "enumerate", "--two-n", "8")
    assert code == 0
    doc = json.loads(out)
    assert doc["count"] == 21 == len(doc["schemes"])
    assert [5, 6, 7, 8, 1, 2, 3, 4] in doc["schemes"]


def test_map_synth_then_verify(capsys, scheme_file, tmp_path):
    out = tmp_path / "m.json"
    assert run(capsys, "map", "synth", scheme_file, "-o", out)[0] == 0
    code, text, _ = run(capsys, "map", "verify", out)
    assert code == 0
    doc = json.loads(text)
    assert doc["ok"] and doc["lambda"] > 1


def test_map_verify_perturbed(capsys, map_file, tmp_path):
    doc = json.loads(map_file.read_text())
    doc["cutting"][3] += 1e-8
    p = tmp_path / "perturbed.json"
    p.write_text(json.dumps(doc))
    assert run(capsys, "map", "verify", p)[0] == 2
    # the coincidence gap is about 2e-5, inside a loose tolerance
    assert run(capsys, "map", "verify", p, "--tol", "1e-3")[0] == 0


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "map", "verify", tmp_path / "nope.json")
    assert code == 2 and "no such file" in err


def test_graph_build_with_dot(capsys, map_file, tmp_path):
    dot = tmp_path / "g.dot"
    code, out, _ = run(capsys, "graph", "build", map_file, "--level", "5", "--dot", dot)
    assert code == 0
    doc = json.loads(out)
    assert doc["sphere_sizes"] == [1, 8, 56, 392, 2736, 19096]
    assert doc["pair_classes"] > 0
    assert dot.read_text().startswith("digraph")


def test_action_check(capsys, map_file, tmp_path):
    out = tmp_path / "rep.json"
    code, _, _ = run(capsys, "action", "check", map_file, "--radius", "3",
                     "--samples", "4", "--cocompact-depth", "5", "--out", out)
    assert code == 0
    assert json.loads(out.read_text())["ok"] is True


def test_surface_report(capsys, map_file):
    code, out, _ = run(capsys, "surface", "report", map_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["genus"] == 2 and doc["chi"] == -2


def test_thread_cap(capsys, scheme_file, monkeypatch):
    monkeypatch.setenv("BSL_LAB_THREADS", "zero")
    assert run(capsys, "scheme", "validate", scheme_file)[0] == 2
    monkeypatch.setenv("BSL_LAB_THREADS", "2")
    assert run(capsys, "scheme", "validate", scheme_file)[0] == 0


def test_usage_error(capsys):
    assert run(capsys, "graph", "build")[0] == 2


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and "bsl-lab" in out
