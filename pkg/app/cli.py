"""Command line: run an experiment, verify the acceptance suite, list shipped experiments."""

import logging
from pathlib import Path
from typing import Optional

import click

from app.config import load_config, shipped_config, shipped_configs
from app.services import ExperimentService, ExportService
from app.verification import VerificationService

logger = logging.getLogger(__name__)


def _resolve_config(reference: str) -> Path:
    path = Path(reference)
    if path.exists():
        return path
    return shipped_config(reference)


@click.group()
@click.option("--verbose", is_flag=True, help="Log at DEBUG level")
def cli(verbose: bool) -> None:
    """Simulate oscillators on a two-spin NMR processor and check every sequence against its oracle."""
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


@cli.command()
@click.argument("config")
@click.option(
    "--output-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Directory for CSV and reports (default: config [output] directory or APP_OUTPUT_DIR)",
)
@click.pass_context
def run(ctx: click.Context, config: str, output_dir: Optional[Path]) -> None:
    """Run CONFIG, a config file path or a shipped experiment name."""
    try:
        experiment = load_config(_resolve_config(config))
        summary = ExperimentService.run_experiment(experiment, output_dir)
    except (ValueError, TypeError) as e:
        logger.error(f"Experiment {config} failed: {e}")
        raise click.ClickException(str(e)) from e

    click.echo(ExportService.checks_to_text(summary.checks), nl=False)
    for path in summary.files:
        click.echo(f"wrote {path}")
    if not summary.passed:
        ctx.exit(1)


@cli.command()
@click.option("--only", type=int, default=None, help="Run a single criterion by number")
@click.pass_context
def verify(ctx: click.Context, only: Optional[int]) -> None:
    """Run the acceptance suite and print pass/fail per criterion."""
    try:
        results = VerificationService.verify_all(only=only)
    except ValueError as e:
        logger.error(f"Verification could not start: {e}")
        raise click.ClickException(str(e)) from e

    click.echo(ExportService.checks_to_text(results), nl=False)
    failed = [r for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        ctx.exit(1)


@cli.command("list-experiments")
def list_experiments() -> None:
    """List shipped experiment configs."""
    for path in shipped_configs():
        experiment = load_config(path).experiment
        click.echo(f"{path.stem:<24} {experiment.description}")
