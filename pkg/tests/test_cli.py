from pathlib import Path
import json
import sys

from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from powerloop_designer import __version__
from powerloop_designer.cli import cli
from powerloop_designer.core import EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY_FAILED


def make_config_file(directory: Path, **system: float) -> Path:
    document = {
        "system": system,
        "cases": [
            {"name": "fast", "xi": 0.4, "ts": 1.0},
            {"name": "damped", "po": 4.32, "ts": 1.0},
        ],
        "sim": {
            "t_end": 4.0,
            "dt": 2e-3,
            "record_every": 5,
            "events": [{"time": 0.5, "target": "p_set", "value": 1.0}],
        },
        "output": {"directory": str(directory / "default-out"), "formats": ["report", "json", "csv"]},
    }
    path = directory / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def test_version() -> None:
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == EXIT_OK
    assert __version__ in result.output


def test_design_writes_reports(tmp_path: Path) -> None:
    out = tmp_path / "out"
    result = CliRunner().invoke(cli, ["design", str(make_config_file(tmp_path)), "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    assert (out / "design_report.txt").exists()
    assert (out / "design_report.json").exists()
    assert not (out / "metrics.csv").exists()
    assert not (tmp_path / "default-out").exists()


def test_simulate_writes_trajectories(tmp_path: Path) -> None:
    out = tmp_path / "out"
    result = CliRunner().invoke(cli, ["simulate", str(make_config_file(tmp_path)), "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    assert (out / "fast.csv").read_text(encoding="utf-8").startswith("t,delta,omega,v,p,q,e1,e2\n")
    assert (out / "damped.csv").exists()
    assert len((out / "metrics.csv").read_text(encoding="utf-8").splitlines()) == 3


def test_dt_override_is_applied(tmp_path: Path) -> None:
    out = tmp_path / "out"
    args = ["simulate", str(make_config_file(tmp_path)), "--out", str(out), "--dt", "4e-3"]
    result = CliRunner().invoke(cli, args)

    assert result.exit_code == EXIT_OK, result.output
    lines = (out / "fast.csv").read_text(encoding="utf-8").splitlines()
    assert float(lines[2].split(",")[0]) == 0.02


def test_uncontrollable_design_exits_infeasible(tmp_path: Path) -> None:
    config_path = make_config_file(tmp_path, d_p=0.0)
    result = CliRunner().invoke(cli, ["design", str(config_path), "--out", str(tmp_path / "out")])

    assert result.exit_code == EXIT_INFEASIBLE
    report = (tmp_path / "out" / "design_report.txt").read_text(encoding="utf-8")
    assert report.count("status: uncontrollable") == 2


def test_unwritable_output_directory_is_an_io_error(tmp_path: Path) -> None:
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory", encoding="utf-8")
    args = ["design", str(make_config_file(tmp_path)), "--out", str(blocker / "out")]
    result = CliRunner().invoke(cli, args)

    assert result.exit_code == EXIT_IO
    assert "Cannot write results" in result.output


def test_invalid_configuration_is_a_usage_error(tmp_path: Path) -> None:
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"cases": [{"name": "bad", "xi": 1.2, "ts": 1.0}]}), encoding="utf-8")
    result = CliRunner().invoke(cli, ["design", str(path)])

    assert result.exit_code == EXIT_USAGE
    assert "Invalid configuration" in result.output


def test_missing_configuration_is_a_usage_error(tmp_path: Path) -> None:
    result = CliRunner().invoke(cli, ["simulate", str(tmp_path / "absent.json")])
    assert result.exit_code == EXIT_USAGE


def test_validate_config(tmp_path: Path) -> None:
    result = CliRunner().invoke(cli, ["validate-config", str(make_config_file(tmp_path))])
    assert result.exit_code == EXIT_OK
    assert "Configuration is valid" in result.output


def test_validate_config_rejects_syntax_errors(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    result = CliRunner().invoke(cli, ["validate-config", str(path)])
    assert result.exit_code == EXIT_USAGE


def test_verify_single_fixture() -> None:
    result = CliRunner().invoke(cli, ["verify", "--fixture", "operating-point"])
    assert result.exit_code == EXIT_OK, result.output


def test_verify_with_zero_tolerance_fails() -> None:
    result = CliRunner().invoke(cli, ["verify", "--fixture", "operating-point", "--tol", "0"])
    assert result.exit_code == EXIT_VERIFY_FAILED


def test_verify_rejects_unknown_fixture() -> None:
    result = CliRunner().invoke(cli, ["verify", "--fixture", "no-such-fixture"])
    assert result.exit_code == EXIT_USAGE


def test_verify_rejects_negative_tolerance() -> None:
    result = CliRunner().invoke(cli, ["verify", "--tol", "-1"])
    assert result.exit_code == EXIT_USAGE


def test_unknown_command_is_a_usage_error() -> None:
    result = CliRunner().invoke(cli, ["optimise"])
    assert result.exit_code == EXIT_USAGE


def test_fixtures_listing() -> None:
    result = CliRunner().invoke(cli, ["fixtures"])
    assert result.exit_code == EXIT_OK
    assert "Available Fixtures" in result.output
