from typing import Optional

import typer
from dotenv import load_dotenv

import cli.helpers as helpers
from cli import __version__
from experiment_spec import collect_violations, validate_experiment_spec
from runner import EXIT_INVALID, ExperimentRunner

load_dotenv()

app = typer.Typer(name="akspec", help="Spectral experiments for almost-Kähler quantization on tori")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _report_violations(path: str, violations):
    typer.echo(f" {path}: {len(violations)} violation(s)", err=True)
    for v in violations:
        typer.echo(f"   - {v}", err=True)


@app.command()
def run(
    config: str,
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
    workers: int = typer.Option(1, "--workers", "-w", min=1, help="Worker threads for independent k values"),
    log_level: str = typer.Option("INFO", "--log-level", help="DEBUG, INFO, WARNING or ERROR")
):
    """Run every task of an experiment description and write its reports."""
    if log_level.upper() not in LOG_LEVELS:
        typer.echo(f" Unknown log level '{log_level}'", err=True)
        raise typer.Exit(EXIT_INVALID)
    spec = helpers.load_config(config)
    violations = collect_violations(spec)
    if violations:
        _report_violations(config, violations)
        raise typer.Exit(EXIT_INVALID)

    experiment = validate_experiment_spec(spec)
    output_dir = helpers.resolve_output_dir(experiment.name, out, experiment.output_dir)
    helpers.setup_logging(log_level, output_dir)

    report = ExperimentRunner(experiment, output_dir, workers=workers, version=__version__).run()
    typer.echo(f" Experiment '{report.name}' ({report.config_hash[:12]}) in {report.wall_time:.1f}s")
    for task in report.tasks:
        typer.echo(f"   {task.name:<18} {task.status.value:<8} {task.message}")
    typer.echo(f" Reports written to {output_dir}")
    raise typer.Exit(report.exit_code)


@app.command()
def validate(config: str):
    """List every violation in an experiment description without running it."""
    spec = helpers.load_config(config)
    violations = collect_violations(spec)
    if violations:
        _report_violations(config, violations)
        raise typer.Exit(EXIT_INVALID)
    typer.echo(f" {config} is valid")


@app.command()
def version():
    """Show the akspec version."""
    typer.echo(f"akspec {__version__}")


if __name__ == "__main__":
    app()
