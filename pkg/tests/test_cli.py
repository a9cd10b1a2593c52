"""Command-line surface through click's test runner."""

import json

import pytest
from click.testing import CliRunner

from src.cli import cli
from src.services.experiment_service import ExperimentService
from tests.conftest import SMOKE_OVERRIDES


def invoke(result_root, *args, overrides=SMOKE_OVERRIDES):
    options = ["--result-root", str(result_root)]
    for assignment in overrides:
        options += ["--set", assignment]
    return CliRunner().invoke(cli, options + list(args))


def test_version():
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "eeg-robustness" in result.output


def test_prepare_reports_written_then_unchanged(result_root):
    first = invoke(result_root, "prepare")
    assert first.exit_code == 0, first.stderr
    assert first.stdout.startswith("run ")
    assert "(written)" in first.stdout

    second = invoke(result_root, "prepare")
    assert second.exit_code == 0
    assert "sub-01:" in second.stdout and "(unchanged)" in second.stdout


def test_unknown_config_key_is_a_usage_error(result_root):
    result = invoke(result_root, "prepare", overrides=SMOKE_OVERRIDES + ["training.epochz=3"])
    assert result.exit_code == 2
    assert "Error (" in result.stderr and "training.epochz" in result.stderr


def test_attack_eval_before_training_exits_with_usage_error(result_root):
    assert invoke(result_root, "prepare").exit_code == 0
    result = invoke(result_root, "attack-eval")
    assert result.exit_code == 2
    assert "train-grid" in result.stderr


def test_bad_grid_filter(result_root):
    assert invoke(result_root, "prepare").exit_code == 0
    result = invoke(result_root, "train-grid", "--grid-filter", "layer=4")
    assert result.exit_code == 2
    assert "grid filter" in result.stderr


def test_report_before_analyze(result_root):
    result = invoke(result_root, "report")
    assert result.exit_code == 2


@pytest.mark.slow
def test_end_to_end(result_root, tmp_path):
    assert invoke(result_root, "prepare").exit_code == 0

    trained = invoke(result_root, "train-grid", "--grid-filter", "arch=CNN_Bk4|CNN(avg)_Bk34|RNN(LSTM)_Bk2")
    assert trained.exit_code == 0, trained.stderr
    assert json.loads(trained.stdout)["completed"] == 3

    baselines = invoke(result_root, "train-grid")
    assert json.loads(baselines.stdout) == {
        "command": "train-grid", "total": 4, "completed": 1, "skipped": 3, "failed": [],
    }

    evaluated = invoke(result_root, "attack-eval")
    assert evaluated.exit_code == 0, evaluated.stderr
    assert json.loads(evaluated.stdout)["total"] == 4

    analyzed = invoke(result_root, "analyze")
    assert analyzed.exit_code == 0, analyzed.stderr
    assert "analysis written to" in analyzed.stdout

    output = tmp_path / "report.md"
    reported = invoke(result_root, "report", "--output", str(output))
    assert reported.exit_code == 0
    assert reported.stdout.startswith("# Robustness analysis")
    assert output.read_text() == reported.stdout


@pytest.mark.parametrize("command", ["train-grid", "attack-eval", "analyze", "report"])
def test_every_later_stage_before_prepare_is_a_usage_error(result_root, command):
    result = invoke(result_root, command)
    assert result.exit_code == 2
    assert "Error (ResourceNotFoundError)" in result.stderr


def test_analyze_before_attack_eval_is_a_usage_error(result_root):
    assert invoke(result_root, "prepare").exit_code == 0
    result = invoke(result_root, "analyze")
    assert result.exit_code == 2
    assert "attack-eval" in result.stderr


def test_a_failed_cell_exits_one_and_names_the_failure(result_root, monkeypatch):
    def broken(self, cell):
        raise RuntimeError("out of memory")

    monkeypatch.setattr(ExperimentService, "_train_cell", broken)
    assert invoke(result_root, "prepare").exit_code == 0
    result = invoke(result_root, "--workers", "1", "train-grid", "--grid-filter", "arch=CNN_Bk4")
    assert result.exit_code == 1
    assert json.loads(result.stdout)["failed"][0]["error_type"] == "RuntimeError"
    assert "cell(s) failed" in result.stderr


def test_an_unexpected_error_exits_one(result_root, monkeypatch):
    def broken(self, force=False):
        raise RuntimeError("disk vanished")

    monkeypatch.setattr(ExperimentService, "cmd_prepare", broken)
    result = invoke(result_root, "prepare")
    assert result.exit_code == 1
    assert "Error (RuntimeError): disk vanished" in result.stderr
