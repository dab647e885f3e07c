import json

import pytest

from app import main as cli
from app.controller.experiment_controller import ExperimentController
from app.errors import TruncationError
from app.model.experiment import EXPERIMENTS, SECTION, ExperimentReport


@pytest.fixture
def small_kerr(tmp_path):
    path = tmp_path / "kerr.json"
    path.write_text(json.dumps({"kerr": {"cutoff": 12}, "run": {"threads": 1}}), encoding="utf-8")
    return path


def test_kerr_subcommand_should_print_json_and_pass(small_kerr, capsys):
    code = cli.main(["kerr", "--config", str(small_kerr), "--trials", "3", "--seed", "11"])
    out = capsys.readouterr().out
    assert code == cli.EXIT_OK
    data = json.loads(out)
    assert data["config"]["experiment"] == "kerr"
    assert data["config"]["seed"] == 11
    assert data["config"]["params"]["trials"] == 3


def test_csv_output_should_go_to_file(small_kerr, tmp_path, capsys):
    out = tmp_path / "report.csv"
    code = cli.main(["kerr", "--config", str(small_kerr), "--trials", "2", "--format", "csv", "--out", str(out)])
    assert code == cli.EXIT_OK
    assert capsys.readouterr().out == ""
    assert out.read_text(encoding="utf-8").startswith("schema_version,experiment,section,name,row,key,value")


def test_tolerance_failure_should_exit_with_one(tmp_path):
    path = tmp_path / "strict.json"
    path.write_text(json.dumps({"kerr": {"cutoff": 12, "probe_phase_tolerance": -1.0}}), encoding="utf-8")
    assert cli.main(["kerr", "--config", str(path), "--trials", "2"]) == cli.EXIT_TOLERANCE


def test_simulation_error_should_exit_with_two(tmp_path):
    assert cli.main(["kerr", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_ERROR
    assert cli.main(["scaling", "--config", str(_write(tmp_path, {"scaling": {"n_max": [4, 8]}}))]) == cli.EXIT_ERROR


def test_trials_flag_should_map_to_experiment_specific_key():
    args = cli.build_parser().parse_args(["gates", "--trials", "4"])
    assert cli._overrides(args) == {"gates": {"closure_draws": 4}}
    args = cli.build_parser().parse_args(["conditional", "--trials", "4", "--threads", "2"])
    assert cli._overrides(args) == {"run": {"threads": 2}, "conditional": {"preparations": 4}}
    args = cli.build_parser().parse_args(["scaling", "--trials", "4"])
    assert cli._overrides(args) == {}


def test_unknown_subcommand_should_exit_with_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["wigner"])
    assert exc.value.code == 2


def _write(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def test_all_should_write_every_report_and_exit_with_two_on_error(tmp_path, monkeypatch):
    def fake(name):
        def run(self, cfg):
            if name == "conditional":
                raise TruncationError("cutoff zu klein")
            return ExperimentReport(config=cfg.echo())
        return run

    for name in EXPERIMENTS:
        monkeypatch.setattr(ExperimentController, f"run_{SECTION[name]}", fake(name))
    out = tmp_path / "all.json"
    assert cli.main(["all", "--out", str(out)]) == cli.EXIT_ERROR
    reports = json.loads(out.read_text(encoding="utf-8"))["reports"]
    assert len(reports) == len(EXPERIMENTS)
    errors = [r["config"]["experiment"] for r in reports if "error" in r["diagnostics"]]
    assert errors == ["conditional"]
