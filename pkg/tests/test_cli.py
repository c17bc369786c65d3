import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from subhj.cli import EXIT_INVALID, EXIT_OK, EXIT_PARSE, EXIT_TASK, main
from subhj.io import file_digest, read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "group": {"kind": "abelian", "n": 2},
    "domain": {"box": [[0, 1], [0, 1]]},
    "hamiltonian": {"alpha": 2.0, "pieces": [{"zset": {"kind": "ball", "r": 1}}]},
    "grid": {"spacing": 1 / 16, "stencil_directions": 16},
    "seed": 3,
}


def write_config(tmp_path, name="c.json", **over):
    cfg = json.loads(json.dumps(BASE))
    cfg.update(over)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(command, config, out, *extra):
    return main([command, "--config", str(config), "--out", str(out), *extra])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def outputs(out):
    """Every produced file's bytes; the manifest without its timestamp."""
    files = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}
    m = manifest(out)
    m.pop("timestamp")
    return files, m


# -- example configs ---------------------------------------------------------------------


def test_solve_eikonal_box(tmp_path):
    out = tmp_path / "o"
    assert run("solve", CONFIGS / "eikonal_box.json", out) == EXIT_OK
    for name in ("w.csv", "bcc.json", "manifest.json"):
        assert (out / name).exists()
    m = manifest(out)
    assert m["status"] == "success" and m["failure_reason"] is None
    for entry in m["produced"]:
        assert entry["sha256"] == file_digest(out / entry["file"])
    assert json.loads((out / "bcc.json").read_text())["passed"] is True
    header, data = read_csv(out / "w.csv")
    assert header == ["y1", "y2", "w"]
    k = np.flatnonzero((data[:, 0] == 0.5) & (data[:, 1] == 0.5))
    assert abs(data[k[0], 2] - 0.5) <= 2 / 64


def test_verify_cone_vertex_fails(tmp_path):
    out = tmp_path / "o"
    assert run("verify", CONFIGS / "cone.json", out) == EXIT_TASK
    rec = json.loads((out / "residuals.json").read_text())["records"][0]
    assert rec["estimate"] == pytest.approx(2.0, abs=1e-12)
    assert rec["violation"][0] == "supersolution"
    m = manifest(out)
    assert m["status"] == "failure" and "supersolution" in m["failure_reason"]


def test_probe_heisenberg_slope(tmp_path):
    out = tmp_path / "o"
    assert run("probe", CONFIGS / "heis_scaling.json", out) == EXIT_OK
    header, data = read_csv(out / "probe.csv")
    slope = data[:, header.index("slope")]
    assert np.all(np.abs(slope - 0.5) <= 0.1)
    assert sorted(data[:, header.index("scale")]) == [0.05, 0.1, 0.2, 0.4]


# -- other tasks -------------------------------------------------------------------------------


def test_distance_with_path(tmp_path):
    cfg = write_config(tmp_path, params={"sources": [[0, 0]], "path_to": [1, 1]})
    out = tmp_path / "o"
    assert run("distance", cfg, out) == EXIT_OK
    header, data = read_csv(out / "path.csv")
    assert header == ["step", "y1", "y2", "cumcost"]
    assert np.allclose(data[0, 1:3], [0, 0]) and np.allclose(data[-1, 1:3], [1, 1])
    assert data[-1, -1] == pytest.approx(np.sqrt(2), rel=1e-12)


def test_compare_and_stability(tmp_path):
    cfg = write_config(tmp_path, params={"random_pairs": 2})
    assert run("compare", cfg, tmp_path / "a") == EXIT_OK
    rep = json.loads((tmp_path / "a" / "compare.json").read_text())
    assert all(c["status"] == "pass" for c in rep["cases"])
    cfg = write_config(
        tmp_path, "s.json", params={"family": {"n": [1, 2, 4]}, "boundary": "0.2*x1", "pairs": 10, "probes": 2}
    )
    assert run("stability", cfg, tmp_path / "b") == EXIT_OK
    rep = json.loads((tmp_path / "b" / "stability.json").read_text())
    assert rep["passed"] and rep["distance_monotone"]


# -- exit codes and manifest ----------------------------------------------------------------------


def test_parse_error_exit_2(tmp_path):
    cfg = write_config(tmp_path, params={"sources": "x"})
    out = tmp_path / "o"
    assert run("distance", cfg, out) == EXIT_PARSE
    m = manifest(out)
    assert m["exit_code"] == EXIT_PARSE and m["failure_reason"].startswith("parse error")


def test_missing_config_and_task_mismatch(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["solve", "--config", "nope.json"]) == EXIT_PARSE
    # the config never loaded, so the manifest lands in the default directory
    assert manifest(tmp_path / "subhj-out")["exit_code"] == EXIT_PARSE
    cfg = write_config(tmp_path, task="solve", params={"boundary": "0"})
    assert run("distance", cfg, tmp_path / "o") == EXIT_PARSE


def test_unknown_subcommand(capsys):
    assert main(["frobnicate", "--config", "x.json"]) == EXIT_PARSE
    assert main([]) == EXIT_PARSE


def test_invalid_hamiltonian_exit_3(tmp_path):
    cfg = write_config(
        tmp_path,
        hamiltonian={"alpha": 1.1, "pieces": [{"zset": {"kind": "ball", "r": 2}}]},
        params={"boundary": "0"},
    )
    out = tmp_path / "o"
    assert run("solve", cfg, out) == EXIT_INVALID
    assert manifest(out)["failure_reason"].startswith("validation failure")


def test_incompatible_boundary_exit_1_writes_report(tmp_path):
    cfg = write_config(tmp_path, params={"boundary": "10*x1"})
    out = tmp_path / "o"
    assert run("solve", cfg, out) == EXIT_TASK
    assert json.loads((out / "bcc.json").read_text())["passed"] is False
    assert manifest(out)["failure_reason"].startswith("task failure")
    cfg = write_config(tmp_path, "ov.json", params={"boundary": "10*x1", "override": True})
    assert run("solve", cfg, tmp_path / "ov") == EXIT_OK
    assert json.loads((tmp_path / "ov" / "bcc.json").read_text())["override"] is True


# -- determinism and overrides ---------------------------------------------------------------------


def test_outputs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, params={"boundary": "0.3*x1", "probes": 4, "radii": [0.2, 0.1], "ae": {}})
    assert run("verify", cfg, tmp_path / "a") == EXIT_OK
    assert run("verify", cfg, tmp_path / "b") == EXIT_OK
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")


def test_seed_and_spacing_overrides(tmp_path):
    cfg = write_config(tmp_path, params={"random_pairs": 1})
    assert run("compare", cfg, tmp_path / "a") == EXIT_OK
    assert run("compare", cfg, tmp_path / "b", "--seed", "11") == EXIT_OK
    assert run("compare", cfg, tmp_path / "c", "--spacing", "0.125") == EXIT_OK
    a, b, c = (manifest(tmp_path / k) for k in "abc")
    assert (a["seed"], b["seed"]) == (3, 11)
    assert c["spacing"] == 0.125 and a["spacing"] == 1 / 16
    assert outputs(tmp_path / "a")[0] != outputs(tmp_path / "b")[0]
    assert a["config_hash"] != b["config_hash"]


def test_threads_do_not_change_outputs(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, params={"family": {"n": [1, 2]}, "boundary": "0", "pairs": 6})
    monkeypatch.setenv("SUBHJ_THREADS", "1")
    assert run("stability", cfg, tmp_path / "a") == EXIT_OK
    monkeypatch.setenv("SUBHJ_THREADS", "3")
    assert run("stability", cfg, tmp_path / "b") == EXIT_OK
    assert outputs(tmp_path / "a")[0] == outputs(tmp_path / "b")[0]


def test_console_script(tmp_path):
    out = tmp_path / "o"
    r = subprocess.run(
        [sys.executable, "-m", "subhj.cli", "solve", "--config", str(CONFIGS / "eikonal_box.json"),
         "--out", str(out), "--spacing", "0.125"],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
    assert manifest(out)["spacing"] == 0.125
