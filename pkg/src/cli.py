"""Command-line interface: prepare, train-grid, attack-eval, analyze, report."""

import json
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Tuple

import click

from . import __version__
from .domain.errors import INTERNAL_ERROR_EXIT_CODE, exit_code_for, is_user_error
from .domain.experiment_types import GridRunSummary
from .env import ENV_PREFIX, load_settings
from .infrastructure.config.config_loader import ConfigLoader
from .infrastructure.logger import get_logger, set_level
from .infrastructure.reporting.report_formatter import ReportFormat
from .services.experiment_service import ExperimentService, parse_grid_filter


logger = get_logger("cli")


class CliContext:
    """Options shared by every subcommand."""

    def __init__(
        self,
        config_path: Optional[str],
        overrides: Tuple[str, ...],
        result_root: Optional[str],
        workers: Optional[int],
        device: Optional[str],
        log_level: Optional[str],
        env_file: Optional[str],
    ):
        self.config_path = config_path
        self.overrides = overrides
        self.result_root = result_root
        self.workers = workers
        self.device = device
        self.log_level = log_level
        self.env_file = env_file

    def service(self) -> ExperimentService:
        settings = load_settings(self.env_file)
        set_level(self.log_level or settings.log_level)
        config = ConfigLoader().load(self.config_path, self.overrides)
        root = settings.resolved_result_root(self.result_root)
        return ExperimentService(
            config,
            root,
            device=self.device or settings.device,
            workers=self.workers or settings.workers,
        )


def _run(action: Callable[[], Any]) -> Any:
    """Run a command body, turning domain errors into exit codes."""
    try:
        return action()
    except click.exceptions.Exit:
        raise
    except Exception as error:
        kind = getattr(error, "name", type(error).__name__)
        click.echo(f"Error ({kind}): {error}", err=True)
        if not is_user_error(error):
            logger.error(f"Unexpected failure: {error!r}")
        sys.exit(exit_code_for(error))


def _finish(summary: GridRunSummary) -> None:
    click.echo(json.dumps(summary.to_dict(), indent=2))
    if not summary.ok:
        click.echo(f"{len(summary.failed)} cell(s) failed; see events.jsonl", err=True)
        sys.exit(INTERNAL_ERROR_EXIT_CODE)


@click.group()
@click.version_option(__version__, prog_name="eeg-robustness")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Experiment TOML file")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE", help="Override one config value")
@click.option(
    "--result-root",
    type=click.Path(file_okay=False),
    help=f"Result directory (default: ${ENV_PREFIX}RESULT_ROOT or ./results)",
)
@click.option("--workers", type=click.IntRange(min=1), help="Worker processes for grid cells")
@click.option("--device", help="Torch device, e.g. cpu or cuda:0")
@click.option("--log-level", type=click.Choice(["debug", "info", "warn", "error"]))
@click.option("--env-file", type=click.Path(dir_okay=False), help="Alternative .env file")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    overrides: Tuple[str, ...],
    result_root: Optional[str],
    workers: Optional[int],
    device: Optional[str],
    log_level: Optional[str],
    env_file: Optional[str],
) -> None:
    """Co-train image classifiers with EEG prediction and measure adversarial robustness."""
    ctx.obj = CliContext(config_path, overrides, result_root, workers, device, log_level, env_file)


@cli.command()
@click.option("--force", is_flag=True, help="Rewrite data even when fingerprints match")
@click.pass_obj
def prepare(obj: CliContext, force: bool) -> None:
    """Write paired datasets, control variants and fingerprints."""
    def action() -> None:
        service = obj.service()
        summary = service.cmd_prepare(force=force)
        click.echo(f"run {summary.config_hash}")
        for subject, fingerprint in summary.fingerprints.items():
            state = "unchanged" if subject in summary.unchanged else "written"
            click.echo(f"{subject}: {fingerprint} ({state})")

    _run(action)


@cli.command("train-grid")
@click.option("--force", is_flag=True, help="Retrain completed cells")
@click.option("--grid-filter", help="e.g. 'arch=CNN_Bk4|RNN_Bk4,seed=0'")
@click.pass_obj
def train_grid(obj: CliContext, force: bool, grid_filter: Optional[str]) -> None:
    """Train every (arch x subject x seed x control) cell plus the baselines."""
    _run(lambda: _finish(obj.service().cmd_train_grid(force=force, clauses=parse_grid_filter(grid_filter))))


@cli.command("attack-eval")
@click.option("--force", is_flag=True, help="Recompute existing curves")
@click.option("--grid-filter", help="e.g. 'subject=sub-01'")
@click.pass_obj
def attack_eval(obj: CliContext, force: bool, grid_filter: Optional[str]) -> None:
    """Robustness curves and gains against the matching baseline."""
    _run(lambda: _finish(obj.service().cmd_attack_eval(force=force, clauses=parse_grid_filter(grid_filter))))


@cli.command()
@click.pass_obj
def analyze(obj: CliContext) -> None:
    """Correlation analyses and figures."""
    def action() -> None:
        service = obj.service()
        summary = service.cmd_analyze()
        click.echo(f"analysis written to {service.store.analysis_dir}")
        for warning in summary.get("warnings", []):
            click.echo(f"warning: {warning}", err=True)

    _run(action)


@cli.command()
@click.option(
    "--format",
    "report_format",
    type=click.Choice([f.value for f in ReportFormat]),
    default=ReportFormat.MARKDOWN.value,
    show_default=True,
)
@click.option("--output", type=click.Path(dir_okay=False), help="Also write the report here")
@click.pass_obj
def report(obj: CliContext, report_format: str, output: Optional[str]) -> None:
    """Render the analysis summary."""
    def action() -> None:
        text = obj.service().cmd_report(ReportFormat(report_format))
        if output:
            Path(output).write_text(text, encoding="utf-8")
        click.echo(text, nl=False)

    _run(action)


def main() -> None:
    """Console-script entry point."""
    try:
        cli.main(prog_name="eeg-robustness", standalone_mode=True)
    except KeyboardInterrupt:
        click.echo("\nInterrupted; completed cells are kept, rerun to resume.", err=True)
        sys.exit(INTERNAL_ERROR_EXIT_CODE)


if __name__ == "__main__":
    main()
