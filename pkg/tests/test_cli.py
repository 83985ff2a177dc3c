import json
import subprocess
import sys

import pytest

from toolforge.cli import fixture_path, main


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "tool schema 1" in capsys.readouterr().out


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--seed", "1"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--seed", "1", "--count", "2", "--out", "x", "--jobs", "0"])
    assert exc.value.code == 1


def test_gen_deterministic_across_jobs(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["gen", "--seed", "5", "--count", "6", "--out", str(a)]) == 0
    assert main(["gen", "--seed", "5", "--count", "6", "--out", str(b), "--jobs", "2"]) == 0
    assert main(["gen", "--seed", "6", "--count", "6", "--out", str(c)]) == 0
    assert _files(a) == _files(b)
    assert _files(a) != _files(c)
    assert sorted(_files(a)) == [f"tool_{i:05d}.json" for i in range(6)]


def test_preprocess_fixture(tmp_path, capsys):
    out = tmp_path / "g.jsonl"
    assert main(["preprocess", "--in", str(fixture_path("demo_30hz.jsonl")), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert json.loads(lines[0])["rate_hz"] == 3.0
    assert len(lines) - 1 == 21


def test_preprocess_never_lifted(tmp_path, capsys):
    src = tmp_path / "flat.jsonl"
    src.write_text(json.dumps({"rate_hz": 30, "table_z": 0.6}) + "\n"
                   + "\n".join(json.dumps({"t": k / 30, "pose": [0, 0, 0.63, 1, 0, 0, 0]}) for k in range(30)) + "\n")
    assert main(["preprocess", "--in", str(src), "--out", str(tmp_path / "o.jsonl")]) == 2
    assert "never rises" in capsys.readouterr().err
    assert not (tmp_path / "o.jsonl").exists()


def test_missing_file_exit_code(tmp_path, capsys):
    assert main(["preprocess", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")]) == 2


def test_eval_fixture(tmp_path, capsys):
    report = tmp_path / "r.json"
    csv = tmp_path / "r.csv"
    assert main(["eval", "--report", str(report), "--csv", str(csv)]) == 0
    expected = json.loads(fixture_path("synthetic_expected.json").read_text())
    (r,) = json.loads(report.read_text())["rollouts"].values()
    for k, v in expected.items():
        assert r[k] == v
    assert r["task_progress"] == 30.0
    assert csv.read_text().splitlines()[1].endswith(",10,3,30.0,fallen,25")


def test_plan_modes(tmp_path, capsys):
    dls, opt = tmp_path / "dls.json", tmp_path / "opt.json"
    assert main(["plan", "--mode", "dls", "--report", str(dls)]) == 0
    assert main(["plan", "--mode", "trajopt", "--report", str(opt)]) == 0
    a, b = json.loads(dls.read_text()), json.loads(opt.read_text())
    assert a["min_collision_margin_m"] < 0 <= b["min_collision_margin_m"]
    assert len(b["joint_trajectory"]) == b["waypoints"] == 10
    assert b["max_position_error_m"] > a["max_position_error_m"]


def test_plan_bad_grab(tmp_path, capsys):
    g = tmp_path / "grab.json"
    g.write_text(json.dumps({"grab": [0, 0, 0]}))
    assert main(["plan", "--mode", "dls", "--grab", str(g), "--report", str(tmp_path / "r.json")]) == 2


def test_rollout_and_report_across_jobs(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["rollout", "--policy", "random", "--episodes", "2", "--seed", "3"]
    assert main(args + ["--log", str(a)]) == 0
    assert main(args + ["--log", str(b), "--jobs", "2"]) == 0
    assert _files(a) == _files(b)
    out = tmp_path / "rep"
    assert main(["report", "--log", str(a), "--out", str(out)]) == 0
    assert (out / "reward_curves.csv").read_text().startswith("episode,step,")
    assert len((out / "episodes.csv").read_text().splitlines()) == 3


def test_rollout_oracle_easy_goals(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[reward]\nsuccess_tolerance = 0.02\n")
    log = tmp_path / "log"
    assert main(["rollout", "--policy", "oracle", "--episodes", "1", "--seed", "0", "--easy-goals", "3",
                 "--config", str(cfg), "--log", str(log)]) == 0
    summary = json.loads((log / "summary.json").read_text())
    ep = summary["episodes"][0]
    assert ep["progress"]["task_progress"] == 100.0 and ep["success_events"] == 3
    assert main(["eval", "--rollout", str(log / "episode_0000.jsonl"), "--goals", str(fixture_path("synthetic_goals.jsonl"))]) == 0


def test_config_command(tmp_path, capsys):
    assert main(["config", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["reward"]["success_bonus"] == 1000.0
    bad = tmp_path / "bad.toml"
    bad.write_text("[env]\nnope = 1\n")
    assert main(["config", "--config", str(bad)]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "toolforge.cli", "config"], capture_output=True, text=True)
    assert proc.returncode == 0 and "[reward]" in proc.stdout
