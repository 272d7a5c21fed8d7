import json
from pathlib import Path
import sys
import pytest
from dysonlab import cli


def invoke(monkeypatch, *args) -> int:
    monkeypatch.setattr(sys, "argv", ["dyson-lab", *map(str, args)])
    try:
        cli.main()
    except SystemExit as error:
        return error.code
    return 0


@pytest.fixture
def scenario_file(tmp_path) -> Path:
    path = tmp_path / "wigner.json"
    payload = {
        "model": {"self_energy": {"kind": "flat"}},
        "grid": {"window": [-3, 3], "points": 61},
        "solve": {"z": [0.0, 1.0]},
        "verify": {"points": 2},
        "output": str(tmp_path / "out"),
    }
    path.write_text(json.dumps(payload))
    return path


def test_identities_should_print_every_code(monkeypatch, capsys):
    assert invoke(monkeypatch, "identities") == 0
    output = capsys.readouterr().out
    for code in ("P100", "F101", "B101", "S102"):
        assert code in output


def test_solve_should_write_to_the_output_override(monkeypatch, scenario_file, tmp_path):
    out = tmp_path / "elsewhere"
    assert invoke(monkeypatch, "solve", "--config", scenario_file, "--out", out, "--jobs", 1) == 0
    assert (out / "solution.json").exists()
    assert (out / "manifest.json").exists()


def test_verify_should_exit_cleanly_without_violations(monkeypatch, scenario_file):
    code = invoke(monkeypatch, "verify", "--config", scenario_file, "--select", "S100", "P100")
    assert code == 0
    with open(scenario_file.parent / "out" / "violations.json") as file:
        assert json.load(file)["checked"] == ["P100", "S100"]


def test_missing_config_should_exit_with_a_config_error(monkeypatch, tmp_path):
    assert invoke(monkeypatch, "scan") == 2
    assert invoke(monkeypatch, "scan", "--config", tmp_path / "missing.json") == 2


def test_invalid_scenarios_should_exit_with_a_config_error(monkeypatch, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"grid": {"points": 11}, "colour": "red"}))
    assert invoke(monkeypatch, "scan", "--config", path) == 2

    path.write_text(json.dumps({"model": {"self_energy": {"kind": "sparse"}}}))
    assert invoke(monkeypatch, "scan", "--config", path) == 2

    path.write_text(json.dumps({"grid": {"points": 11}}))
    assert invoke(monkeypatch, "scan", "--config", path) == 2


def test_unknown_identity_codes_should_exit_with_a_config_error(monkeypatch, scenario_file):
    assert invoke(monkeypatch, "verify", "--config", scenario_file, "--select", "X999") == 2


def test_malformed_identity_codes_should_be_rejected_by_the_parser(monkeypatch, scenario_file):
    assert invoke(monkeypatch, "verify", "--config", scenario_file, "--ignore", "p1") == 2


def test_unknown_commands_should_be_rejected(monkeypatch):
    assert invoke(monkeypatch, "plot") == 2


def test_errors_should_be_titled_with_their_failure_class(monkeypatch, capsys, tmp_path):
    path = tmp_path / "reversed.json"
    payload = {
        "model": {"self_energy": {"kind": "flat"}},
        "grid": {"window": [1.0, -1.0], "points": 11},
        "output": str(tmp_path / "out"),
    }
    path.write_text(json.dumps(payload))
    assert invoke(monkeypatch, "scan", "--config", path) == 2
    assert "Invalid input: InvalidWindow (exit 2)" in capsys.readouterr().out


def test_numerical_failures_should_exit_with_code_three(monkeypatch, capsys, tmp_path):
    path = tmp_path / "narrow.json"
    payload = {
        "model": {"self_energy": {"kind": "flat"}},
        "grid": {"window": [-1.0, 1.0], "points": 21},
        "output": str(tmp_path / "out"),
    }
    path.write_text(json.dumps(payload))
    assert invoke(monkeypatch, "bandmass", "--config", path) == 3
    output = capsys.readouterr().out
    assert "Numerical failure (exit 3)" in output
    with open(tmp_path / "out" / "errors.json") as file:
        assert json.load(file)[0]["type"] == "InsufficientData"


def test_format_path_should_shorten_paths_below_the_working_directory(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    assert cli.format_path(tmp_path / "out" / "bands.json") == "[dim]out/[/][bold]bands.json[/bold]"
    assert cli.format_path(Path("bands.json")) == "[bold]bands.json[/bold]"
