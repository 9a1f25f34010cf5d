import math
import subprocess
import sys

import pytest

from qndmetro.cli import EXPERIMENTS, main, read_config_file, resolve_params, run
from qndmetro.csvout import read_csv
from qndmetro.errors import ConfigError


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in EXPERIMENTS:
        assert name in out


def test_resolve_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nn = 4\npoints=5\n")
    p = resolve_params("fringe", read_config_file(cfg), {"points": "7"})
    assert p["n"] == 4 and p["points"] == 7 and p["eta"] == [0.0, 0.1, 0.2]
    with pytest.raises(ConfigError):
        resolve_params("fringe", {}, {"nope": "1"})
    with pytest.raises(ConfigError):
        resolve_params("fringe", {}, {"n": "many"})
    with pytest.raises(ConfigError):
        resolve_params("missing", {}, {})


def test_fringe_csv(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["run", "fringe", "--points", "3", "--eta", "0", "--out", str(out)]) == 0
    head, cols, rows = read_csv(out)
    assert cols == ["eta", "theta", "p0"]
    assert head["experiment"] == "fringe" and head["seed"] == "0"
    # no loss: p0 = cos^2(8.5 theta / 2)
    for eta, theta, p0 in rows:
        assert float(p0) == pytest.approx(math.cos(8.5 * float(theta) / 2) ** 2, abs=1e-12)


def test_advantage_header(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["run", "advantage", "--points", "3", "--out", str(out)]) == 0
    head, _, _ = read_csv(out)
    assert int(head["m_star"]) == 2095
    assert abs(float(head["t_star"]) - 0.172) < 0.002
    assert (tmp_path / "a_average.csv").exists() and (tmp_path / "a_fidelity.csv").exists()


def test_trajectories_deterministic_across_workers(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["run", "trajectories", "--count", "30", "--seed", "4"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--workers", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    _, cols, rows = read_csv(a)
    assert cols == ["seed", "trajectory", "M_used", "converged", "converged_class", "class_mass"]
    assert len(rows) == 30


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("QNDMETRO_OUT_DIR", str(tmp_path))
    paths = run("sensing", {"points": 3})
    assert paths[0] == tmp_path / "sensing.csv"
    head, _, _ = read_csv(paths[0])
    assert float(head["z0"]) == pytest.approx(0.2523e-3, rel=5e-3)


def test_small_cascade_and_feedback(tmp_path):
    assert main(["run", "cascade", "--count", "3", "--out", str(tmp_path / "c.csv")]) == 0
    assert (tmp_path / "c_summary.csv").exists()
    out = tmp_path / "fb.csv"
    assert main(["run", "prepare-feedback", "--runs", "2", "--target", "1", "--out", str(out)]) == 0
    _, cols, rows = read_csv(out)
    assert len(rows) == 2 and "success" in cols


def test_exit_codes(tmp_path):
    assert main(["run", "fringe", "--bogus", "1"]) == 2
    assert main(["run", "prepare-feedback", "--target", "14", "--out", str(tmp_path / "x.csv")]) == 2
    bad = ["run", "trajectories", "--init", "coherent:3", "--dim", "12", "--out", str(tmp_path / "t.csv")]
    assert main(bad) == 3
    assert main(["run", "trajectories", "--init", "banana", "--out", str(tmp_path / "t.csv")]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qndmetro", "run", "sensing", "--points", "2", "--out",
         str(tmp_path / "s.csv")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
