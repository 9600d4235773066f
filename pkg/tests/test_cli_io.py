import hashlib
import json

import numpy as np
import pytest

from cartan.cli import main
from cartan.cli_io import (ConfigError, EmitError, ScenarioConfig, csv_text, emit, run)


def write_config(tmp_path, **kw):
    d = {"group": "so3", "form": "pullback-expxy:L1,0.7*L2+L3",
         "grid": {"resolution": [5, 5]}, "evol": {"steps": 64}}
    d.update(kw)
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_config_round_trip():
    d = {"group": "se3", "form": "pullback-expxy:L1+P2,L3", "form2": "zero",
         "grid": {"resolution": [3, 4], "half_widths": [0.5, 1.0]},
         "evol": {"integrator": "rk4", "steps": 17, "dexpinv_order": 6},
         "tolerances": {"flat": 1e-3, "star": 1e-5}, "seed": 11,
         "output": {"dir": "out", "formats": ["json"]},
         "path": [[0, 0], [0.2, 0.3]], "eps": [0.1, 0.05], "curve": ["L1", "0.5*L2"]}
    cfg = ScenarioConfig.from_dict(d)
    assert cfg.integrator == "rk4_ambient"
    again = ScenarioConfig.from_dict(json.loads(cfg.dumps()))
    assert again == cfg
    assert again.dumps() == cfg.dumps()


@pytest.mark.parametrize("patch", [
    {"group": 3}, {"grid": {"resolution": [1, 5]}}, {"evol": {"steps": 0}},
    {"tolerances": {"flat": -1.0}}, {"tolerances": {"nonsense": 1.0}},
    {"output": {"formats": ["xml"]}}, {"colour": "red"}, {"seed": -1},
    {"path": [[0.0, 0.0]]},
])
def test_config_schema_violations(patch):
    d = {"group": "so3", "form": "zero"}
    d.update(patch)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(d)


def test_unknown_preset_or_group():
    for d in ({"group": "so7", "form": "zero"}, {"group": "so3", "form": "spiral:1"},
              {"group": "so3", "form": "const:L9,L1"}):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(d).build()


def test_csv_empty_grid():
    assert csv_text(np.zeros((0, 2)), np.zeros((0, 2, 2))) == "x1,x2,m00,m01,m10,m11\n"


def test_csv_identity_grid():
    pts = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    text = csv_text(pts, np.broadcast_to(np.eye(2), (4, 2, 2)))
    lines = text.splitlines()
    assert lines[0] == "x1,x2,m00,m01,m10,m11"
    assert lines[1] == "-1,-1,1,0,0,1"
    assert len(lines) == 5
    assert all(line.endswith(",1,0,0,1") for line in lines[1:])


def test_csv_keeps_17_digits():
    text = csv_text(np.array([[0.1]]), np.array([[[1 / 3]]]))
    row = text.splitlines()[1].split(",")
    assert float(row[1]) == 1 / 3
    assert row[0] == format(0.1, ".17g")


def test_emit_errors_carry_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(EmitError, match="file"):
        emit({"a.json": "{}"}, blocker / "sub")
    written = emit({"a.json": "{}", "b.csv": "x\n"}, tmp_path / "o", ("json",))
    assert [p.rsplit("/", 1)[-1] for p in written] == ["a.json"]


def test_check_flat_non_flat(tmp_path, capsys):
    cfg = write_config(tmp_path, form="const:L1,L2")
    assert main(["check-flat", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["results"]["flat"] is False
    assert abs(rep["results"]["max_residual"] - np.sqrt(2)) < 1e-12
    assert "FAIL" in capsys.readouterr().out


def test_develop_subcommand(tmp_path):
    cfg = write_config(tmp_path, evol={"steps": 256})
    assert main(["develop", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["basepoint_error"] == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["checks"]["round_trip"]["value"] <= 1e-6
    rows = (tmp_path / "develop.csv").read_text().splitlines()
    assert rows[0].startswith("x1,x2,m00") and len(rows) == 26


def test_exit_codes(tmp_path):
    good = write_config(tmp_path)
    out = str(tmp_path / "o")
    assert main(["check-flat", "--config", good, "--out", out, "--quiet"]) == 0
    assert main(["check-flat", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["bogus", "--config", good]) == 2
    assert main(["check-flat", "--config", good, "--steps", "0"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check-flat", "--config", str(bad)]) == 2
    assert main(["develop-path", "--config", good, "--out", out]) == 2   # no path configured


def test_verify_all_trivial(tmp_path):
    cfg = write_config(tmp_path, group="rplus", form="zero", grid={"resolution": [3, 3]})
    assert main(["verify-all", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["all_pass"]
    assert len(rep["results"]["coverage"]) == 7
    assert "timings" not in rep


def _digest(folder):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir())}


def test_byte_identical_outputs(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, seed=5)
    digests = []
    for k, threads in enumerate(("1", "3", "3")):
        monkeypatch.setenv("CARTAN_THREADS", threads)
        out = tmp_path / f"run{k}"
        assert main(["develop", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        digests.append(_digest(out))
    assert digests[0] == digests[1] == digests[2]


def test_run_rejects_unknown_subcommand():
    with pytest.raises(ConfigError):
        run("plot", ScenarioConfig("so3", "zero"))
