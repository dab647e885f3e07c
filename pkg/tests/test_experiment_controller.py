import numpy as np
import pytest

from app.controller.experiment_controller import ExperimentController
from app.errors import FitError, TruncationError
from app.model.experiment import EXPERIMENTS, SECTION, ExperimentConfig, ExperimentReport
from app.service.report_service import report_service
from app.settings import load_config


def _config(experiment, section=None, **run):
    overrides = {"run": {"threads": 2, **run}}
    if section:
        overrides[experiment.replace("-", "_")] = section
    return ExperimentConfig.from_config(experiment, load_config(overrides=overrides))


def _tolerance(report, name):
    return next(t for t in report.tolerances if t.name == name)


@pytest.fixture
def controller():
    return ExperimentController()


def test_undercount_should_match_collision_oracle(controller):
    report = controller.run(_config("undercount", {"k": [1, 2, 3], "n_modes": [2, 4], "trials": 5000, "trajectory_trials": 10, "sigma_tolerance": 4.0}))
    assert report.passed, report.tolerances
    rows = {(r["k"], r["n_modes"]): r for r in report.tables["undercount"]}
    assert rows[(2, 4)]["exact"] == pytest.approx(0.25)
    assert rows[(2, 4)]["fock_tree_exact"] == pytest.approx(0.25, abs=1e-9)
    assert report.diagnostics["skipped_pairs"] == [{"k": 3, "n_modes": 2}]
    assert report.diagnostics["leakage_flagged"] == 0
    assert report.diagnostics["leakage_max"] == 0.0


def test_scaling_should_recover_exponents(controller):
    report = controller.run(_config("scaling"))
    assert _tolerance(report, "phase_resolution_exponent").passed
    assert _tolerance(report, "period_exceeds_n_max").passed
    slope = report.fits["array_size"]["slope"]
    assert slope == pytest.approx(2.11, abs=0.03)
    assert _tolerance(report, "array_size_exponent").passed == (1.9 <= slope <= 2.1)
    assert _tolerance(report, "pair_count_exponent").passed
    assert report.fits["array_size_vs_pairs"]["slope"] == pytest.approx(1.0, abs=0.05)
    assert report.fits["phase_resolution"]["slope"] == pytest.approx(-1.0)
    assert report.diagnostics["unachievable_points"] == 0


def test_scaling_should_need_enough_sweep_points(controller):
    with pytest.raises(FitError):
        controller.run(_config("scaling", {"n_max": [4, 8]}))


def test_kerr_should_infer_residues_and_keep_superpositions(controller):
    report = controller.run(_config("kerr", {"cutoff": 12, "trials": 5}))
    assert report.passed, report.tolerances
    row = report.tables["fock_inputs"][11]
    assert row["expected_residue"] == 3
    assert row["correct_fraction"] == 1.0
    # |10⟩, |11⟩ und (|2⟩ + |10⟩)/√2 liegen in den obersten Niveaus
    assert report.diagnostics["leakage_flagged"] == 3
    assert report.diagnostics["leakage_max"] == pytest.approx(1.0)
    assert report.diagnostics["detector"].startswith("kerr(")


def test_pointer_should_resolve_and_collapse(controller):
    report = controller.run(_config("pointer", {"cutoff": 16, "trials": 400}))
    assert _tolerance(report, "inferred_exact").passed
    assert _tolerance(report, "collapse_single_fock").passed
    assert report.tables["superposition"][0]["inferred_values"] == [2, 10]
    assert report.diagnostics["leakage_flagged"] == 0
    assert report.diagnostics["detector"] == "pointer(lambda_t=1, delta_p=0.0001)"


def test_gates_should_pass_closure_checks(controller):
    report = controller.run(_config("gates", {"closure_draws": 5}))
    assert report.passed, report.tolerances


def test_cubic_gate_small_sweep(controller):
    section = {"gamma": [0.0, 0.1], "sigma": [2.0, 4.0], "cutoff": [16, 24], "trials": 20, "outcome_table_points": 3}
    report = controller.run(_config("cubic-gate", section))
    assert _tolerance(report, "determinism").passed
    assert _tolerance(report, "control_fidelity").passed
    assert _tolerance(report, "fidelity_target").passed
    assert len(report.tables["cells"]) == 8
    assert len(report.tables["per_outcome"]) == 3
    assert len(report.tables["backend_crosscheck"]) == 3
    assert _tolerance(report, "backend_agreement").passed


def test_conditional_preparations_should_be_fitted(controller):
    section = {"w": 3.0, "eta": 0.8, "cutoff": 64, "preparations": 12}
    report = controller.run(_config("conditional", section))
    rows = report.tables["preparations"]
    assert rows and all(r["n"] > 0 and r["gamma_effective"] > 0 for r in rows)
    assert "gamma_vs_n" in report.fits
    assert report.fits["calibration"]["reference"] == pytest.approx(1 / (6 * np.sqrt(2)))
    assert [r["n"] for r in report.tables["n_to_4n"]] == [3, 5, 8]


def test_reports_should_be_reproducible_and_thread_independent(controller):
    section = {"k": [2], "n_modes": [4], "trials": 1000, "trajectory_trials": 6}
    one = controller.run(_config("undercount", section, threads=1))
    four = controller.run(_config("undercount", section, threads=4))
    assert report_service.to_json([one]) == report_service.to_json([four])
    assert report_service.to_json([one]) == report_service.to_json([controller.run(_config("undercount", section, threads=1))])


def test_conditional_defaults_should_fit_into_cutoff(controller):
    report = controller.run(_config("conditional", {"preparations": 20}))
    assert report.diagnostics["weta_leakage"] <= 1e-5
    assert "gamma_vs_n" in report.fits
    assert len(report.tables["n_to_4n"]) == 3


def test_conditional_should_reject_tighter_leakage_tolerance(controller):
    with pytest.raises(TruncationError):
        controller.run(_config("conditional", {"preparations": 2, "leakage_tolerance": 1e-12}))


def test_gates_should_handle_vacuum_displacement(controller):
    report = controller.run(_config("gates", {"alpha": 0.0, "closure_draws": 2}))
    assert _tolerance(report, "coherent_poisson").passed
    assert report.tables["gates"][0]["error"] < 1e-12


def _fake_runs(monkeypatch, target, failing="scaling"):
    def fake(name):
        def run(cfg):
            if name == failing:
                raise FitError("zu wenige Stützstellen")
            return ExperimentReport(config=cfg.echo())
        return run

    for name in EXPERIMENTS:
        monkeypatch.setattr(target, f"run_{SECTION[name]}", fake(name))


def test_run_all_should_keep_reports_after_an_error(controller, monkeypatch):
    _fake_runs(monkeypatch, controller)
    reports = controller.run_all(load_config())
    assert [r.config["experiment"] for r in reports] == list(EXPERIMENTS)
    failed = reports[EXPERIMENTS.index("scaling")]
    assert failed.diagnostics["error"].startswith("FitError")
    assert _tolerance(failed, "completed").passed is False
    assert all(r.passed for r in reports if r is not failed)
