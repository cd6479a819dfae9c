import json
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import CORPUS
from lips.cli import run_command

MANIFEST = json.loads((CORPUS / "manifest.json").read_text())
FIXTURE_JSON = str(CORPUS / "good" / "fixture_geometry.json")


def _run(capsys, *argv):
    code = run_command(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _json(capsys, *argv):
    code, out, err = _run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_ik_at_neutral(capsys):
    out = _json(capsys, "ik", "--geometry", FIXTURE_JSON, "--chi", "0,0")
    np.testing.assert_allclose(out["q"], [0.0, 0.0], atol=1e-12)
    assert _json(capsys, "ik", "--chi", "0,0")["q"] == out["q"]


def test_fk_inverts_ik(capsys):
    q = _json(capsys, "ik", "--chi", "0.1,-0.2")["q"]
    out = _json(capsys, "fk", f"--q={q[0]!r},{q[1]!r}")
    np.testing.assert_allclose(out["chi"], [0.1, -0.2], atol=1e-9)
    assert out["iterations"] <= 8


def test_fk_unreachable_is_domain_error(capsys):
    code, out, err = _run(capsys, "fk", "--q", "1.5,-1.5")
    assert code == 1 and out == ""
    assert "NoConvergence" in err and len(err.strip().splitlines()) == 1


def test_ik_outside_workspace_is_domain_error(capsys):
    code, _, err = _run(capsys, "ik", "--chi", "1.4,0")
    assert code == 1 and err.startswith("error:")


def test_jac_reports_matrix_and_rate(capsys):
    out = _json(capsys, "jac", "--chi", "0,0", "--chi-dot", "0.5,-0.3")
    J = np.array(out["J"])
    assert J.shape == (2, 2) and not out["near_singular"]
    assert abs(out["det"] - np.linalg.det(J)) < 1e-12
    assert np.array(out["J_dot"]).shape == (2, 2)
    assert "J_dot" not in _json(capsys, "jac", "--chi", "0,0")


def test_map_torque_directions(capsys):
    tau_s = _json(capsys, "map-torque", "--chi", "0,0", "--tau", "1,1", "--direction", "to-serial")["tau_s"]
    assert tau_s[0] == 0.0
    back = _json(
        capsys, "map-torque", "--chi", "0,0", f"--tau={tau_s[0]!r},{tau_s[1]!r}", "--direction", "to-parallel"
    )["tau_p"]
    np.testing.assert_allclose(back, [1.0, 1.0], atol=1e-10)


def test_simulate_passive_five_seconds(tmp_path, capsys):
    out = tmp_path / "w.csv"
    report = tmp_path / "m.json"
    summary = _json(capsys, "simulate", "--method", "passive", "--duration", "5", "--seed", "1",
                    "--out", str(out), "--report", str(report))
    lines = out.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["t", "phi", "theta"]
    assert len(lines) - 1 == 500 == summary["rows"]
    assert json.loads(report.read_text())["passive"]["solve_count"] == 0


def test_simulate_is_byte_identical_and_seed_env_overrides(tmp_path, capsys, monkeypatch):
    args = ["simulate", "--method", "s2p-position", "--noise", "0.002", "--duration", "0.3"]
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert _run(capsys, *args, "--seed", "7", "--out", str(a))[0] == 0
    assert _run(capsys, *args, "--seed", "7", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    monkeypatch.setenv("LIPS_SEED", "7")
    assert _run(capsys, *args, "--seed", "99", "--out", str(c))[0] == 0
    assert c.read_bytes() == a.read_bytes()
    monkeypatch.setenv("LIPS_SEED", "seven")
    assert _run(capsys, *args, "--out", str(c))[0] == 2


def test_failure_leaves_no_partial_output(tmp_path, capsys):
    target = tmp_path / "w.csv"
    code, _, _ = _run(capsys, "simulate", "--geometry", str(CORPUS / "bad" / "wide_chi_limits.json"), "--out", str(target))
    assert code == 1 and not target.exists()
    missing = tmp_path / "nope" / "w.csv"
    code, _, _ = _run(capsys, "simulate", "--duration", "0.05", "--out", str(missing))
    assert code == 2 and not missing.exists()
    assert [p.name for p in tmp_path.iterdir()] == []


def test_existing_output_kept_on_failure(tmp_path, capsys):
    target = tmp_path / "w.csv"
    target.write_text("old\n")
    code, _, _ = _run(capsys, "simulate", "--geometry", str(CORPUS / "bad" / "truncated.json"), "--out", str(target))
    assert code == 2 and target.read_text() == "old\n"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["ik"],
        ["ik", "--chi", "0"],
        ["ik", "--chi", "a,b"],
        ["ik", "--chi", "0,nan"],
        ["simulate", "--out", "x.csv", "--hz", "300"],
        ["simulate", "--out", "x.csv", "--noise", "-1"],
        ["simulate", "--out", "x.csv", "--duration", "0"],
        ["simulate", "--out", "x.csv", "--method", "walk"],
        ["bench", "--envs", "0"],
        ["parse-urdf", "missing.urdf"],
        ["parse-urdf", str(CORPUS / "good" / "ankle.urdf"), "--bind", "ankle_pitch"],
        ["validate", "--geometry", "no/such/file.json"],
    ],
)
def test_usage_errors_exit_two(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, err = _run(capsys, *argv)
    assert code == 2 and out == "" and err
    assert not (tmp_path / "x.csv").exists()


def test_bench_reports_throughput(capsys):
    out = _json(capsys, "bench", "--envs", "64", "--duration", "0.05")
    assert out["n_envs"] == 64 and out["target"] == 6400
    assert out["throughput"] > 0 and out["episode_throughput"] > 0 and out["terminated"] == 0


def test_validate(capsys):
    out = _json(capsys, "validate", "--geometry", FIXTURE_JSON)
    assert out["ok"] and out["L2"] == pytest.approx(0.26005, abs=5e-6)


def test_parse_urdf_dump_and_bind(tmp_path, capsys):
    d = _json(capsys, "parse-urdf", str(CORPUS / "good" / "ankle.urdf"))
    assert [j["name"] for j in d["joints"]] == ["ankle_pitch", "ankle_roll"]
    out = tmp_path / "model.json"
    code, stdout, _ = _run(capsys, "parse-urdf", str(CORPUS / "good" / "leg.urdf"), "--bind", "l_ankle_pitch,l_ankle_roll",
                           "--out", str(out))
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["ankle_bindings"]["ankle"]["roll_joint"] == "l_ankle_roll"


@pytest.mark.parametrize("name", sorted(MANIFEST["bad"]))
def test_bad_corpus_exit_codes(name, capsys):
    entry = MANIFEST["bad"][name]
    path = str(CORPUS / "bad" / name)
    if entry["kind"] == "geometry":
        argv = ["validate", "--geometry", path]
    elif entry["kind"] == "urdf":
        argv = ["parse-urdf", path]
    else:
        argv = ["parse-urdf", path, "--bind", ",".join(entry["bind"])]
    code, out, err = _run(capsys, *argv)
    assert code == entry["exit"]
    assert entry["error"] in err and out == ""


def test_console_script_entry_point(tmp_path):
    env = dict(os.environ)
    env.pop("LIPS_SEED", None)
    proc = subprocess.run(
        [sys.executable, "-m", "lips.cli", "ik", "--chi", "0,0"], capture_output=True, text=True, env=env, cwd=tmp_path
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["branch"]
    proc = subprocess.run([sys.executable, "-m", "lips.cli", "fk", "--q=1.5,-1.5"], capture_output=True, text=True, env=env)
    assert proc.returncode == 1 and proc.stderr.count("\n") == 1
