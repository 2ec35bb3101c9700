import json

import pytest

from pencilkit.cli import main
from pencilkit.problem import corpus_files, load_problem

CONST = """
name = "const"
checks = ["almost_compatible", "compatible", "flat_pencil"]
[chart]
coords = ["x1", "x2"]
box = [[1, 2], [1, 2]]
[metrics]
g = [[1, 0], [0, 1]]
g_tilde = [[2, 1], [1, 3]]
"""

CROSSED = """
name = "crossed"
checks = ["almost_compatible", "compatible"]
[chart]
coords = ["x1", "x2"]
box = [[1, 2], [1, 2]]
exclusions = ["x1 - x2"]
[metrics]
g = [[1, 0], [0, 1]]
g_tilde = [["x2", 0], [0, "x1"]]
"""


def write(tmp_path, text, name="p.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_passes(tmp_path, capsys):
    assert main(["run", write(tmp_path, CONST)]) == 0
    assert "compatible" in capsys.readouterr().out


def test_run_fails_with_witness(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["run", write(tmp_path, CROSSED), "--json", str(out)]) == 1
    data = json.loads(out.read_text())
    almost = next(c for c in data["reports"] if c["check"] == "almost_compatible")
    assert almost["verdict"] == "fail" and almost["witnesses"]
    assert almost["witnesses"][0]["point"]


def test_config_errors(tmp_path, capsys):
    missing = CONST.split("[metrics]")[0]
    assert main(["run", write(tmp_path, missing)]) == 2
    assert main(["run", write(tmp_path, CONST.replace("[chart]", "[chart]\nbogus = 1"))]) == 2
    assert main(["run", write(tmp_path, "name = 'x'\nchecks = [")]) == 2
    assert "config error" in capsys.readouterr().err


def test_overrides_and_deterministic_json(tmp_path, capsys):
    path = write(tmp_path, CONST)
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert main(["run", path, "--points", "7", "--seed", "3", "--lambda", "1,2", "--json", str(out)]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    data = json.loads(outs[0])
    assert all(c["millis"] is None for c in data["reports"])


def test_corpus_listing(capsys):
    files = corpus_files()
    assert len(files) >= 8
    for path in files:
        prob = load_problem(path)
        assert prob.description and prob.exercises and prob.expected
    assert main(["corpus"]) == 0
    assert "expected" in capsys.readouterr().out


@pytest.mark.slow
def test_corpus_run_matches_and_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["corpus", "--run", "--json", str(a)]) == 0
    assert main(["corpus", "--run", "--json", str(b)]) == 0
    assert a.read_text() == b.read_text()
    assert "corpus entries match" in capsys.readouterr().out
