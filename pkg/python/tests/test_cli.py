"""Tests for the piperate command line"""

import json

import httpx
import pytest

from src.bin.piperate import main


@pytest.fixture(autouse=True)
def quiet_env(monkeypatch):
    monkeypatch.delenv("PIPERATE_LOG_LEVEL", raising=False)
    monkeypatch.delenv("PIPERATE_PORT", raising=False)


def test_run_and_compare(s1_path, tmp_path, capsys):
    """Test run, compare and the failing exit code of a swapped compare"""
    shaped = str(tmp_path / "shaped")
    assert main(["run", "--scenario", str(s1_path), "--out", shaped]) == 0
    assert main(
        [
            "run",
            "--scenario",
            str(s1_path),
            "--out",
            str(tmp_path / "baseline"),
            "--set",
            "shaping_enabled=false",
        ]
    ) == 0
    report = tmp_path / "report.json"
    code = main(
        [
            "compare",
            "--baseline",
            str(tmp_path / "baseline"),
            "--shaped",
            str(tmp_path / "shaped"),
            "--out",
            str(report),
        ]
    )
    assert code == 0
    assert json.loads(report.read_text())["passed"] is True
    assert "PASS" in capsys.readouterr().err

    swapped = ["compare", "--baseline", str(tmp_path / "shaped")]
    swapped += ["--shaped", str(tmp_path / "baseline")]
    assert main(swapped + ["--out", str(tmp_path / "swapped.json")]) == 1
    assert json.loads((tmp_path / "swapped.json").read_text())["passed"] is False
    assert "FAIL" in capsys.readouterr().err


def test_validate(s1_path, capsys):
    """Test validating a good scenario"""
    assert main(["validate", "--scenario", str(s1_path)]) == 0
    assert "valid" in capsys.readouterr().err


def test_invalid_scenario_exit_code(tmp_path):
    """Test exit code for a scenario that fails validation"""
    path = tmp_path / "bad.json"
    path.write_text('{"machines": "nope"}')
    assert main(["validate", "--scenario", str(path)]) == 2
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "out")]) == 2


def test_bad_override_exit_code(s1_path, tmp_path):
    """Test exit code for an unknown --set parameter"""
    args = ["run", "--scenario", str(s1_path), "--out", str(tmp_path / "o")]
    args += ["--set", "colour=blue"]
    assert main(args) == 2


def test_missing_files_exit_code(tmp_path):
    """Test exit code when inputs are missing"""
    assert main(["validate", "--scenario", str(tmp_path / "missing.json")]) == 3
    args = ["compare", "--baseline", str(tmp_path), "--shaped", str(tmp_path)]
    args += ["--out", str(tmp_path / "r.json")]
    assert main(args) == 3


def test_mismatched_runs_exit_code(s1_path, tmp_path):
    """Test exit code when runs come from different scenarios"""
    for name, duration in (("a", "sim_duration=25"), ("b", "sim_duration=30")):
        out = str(tmp_path / name)
        main(["run", "--scenario", str(s1_path), "--out", out, "--set", duration])
    args = ["compare", "--baseline", str(tmp_path / "a")]
    args += ["--shaped", str(tmp_path / "b")]
    args += ["--out", str(tmp_path / "r.json")]
    assert main(args) == 4


def test_invalid_environment(monkeypatch, s1_path):
    monkeypatch.setenv("PIPERATE_PORT", "many")
    assert main(["validate", "--scenario", str(s1_path)]) == 2


def test_serve_applies_flags(mocker, tmp_path):
    """Test serve flags override the environment settings"""
    serve = mocker.patch("src.daemon.serve")
    assert main(["serve", "--port", "9000", "--runs-dir", str(tmp_path)]) == 0
    settings = serve.call_args.args[0]
    assert settings.port == 9000
    assert settings.runs_dir == tmp_path


def test_submit(mocker, s1_path, capsys):
    """Test submitting a scenario to a running daemon"""
    mocker.patch(
        "src.bin.piperate.PiperateClient.health_check",
        return_value={"status": "healthy"},
    )
    run = mocker.patch(
        "src.bin.piperate.PiperateClient.run",
        return_value={"run_id": "r1", "run_dir": "runs/r1", "pipes": 2, "samples": 1},
    )
    assert main(["submit", "--scenario", str(s1_path), "--set", "seed=2"]) == 0
    scenario, overrides, run_id = run.call_args.args
    assert scenario["container_requests"][0]["container_id"] == "c1"
    assert overrides == {"seed": "2"}
    assert run_id is None
    assert "Run r1" in capsys.readouterr().out


def test_submit_without_daemon(mocker, s1_path, capsys):
    """Test submit fails cleanly when no daemon answers"""
    mocker.patch(
        "src.bin.piperate.PiperateClient.health_check",
        side_effect=httpx.ConnectError("refused"),
    )
    assert main(["submit", "--scenario", str(s1_path)]) == 3
    assert "Cannot connect" in capsys.readouterr().err
