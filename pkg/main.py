import os
import sys

import click
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.text import Text

import distlearn.distlearn_core.config as config
from distlearn.distlearn_core.commands import CliConfig, cmd_analyze, cmd_crlb, cmd_reproduce, cmd_simulate
from distlearn.distlearn_core.errors import DistLearnError

console = Console()


class CommandError(click.ClickException):
    """Red one-line error and exit code 1."""

    def show(self, file=None):
        console.print(f"[bold red]Error: {self.format_message()}[/bold red]")


def check_debug_mode(flag: bool) -> bool:
    """Debug mode comes from the --debug flag or the DISTLEARN_DEBUG environment variable."""
    if flag:
        return True
    return os.getenv('DISTLEARN_DEBUG', '').lower() in ['true', '1', 'yes', 'on']


def enable_debug_mode():
    config.SIM_DEBUG_MODE = True
    console.print(Panel(
        Text("🐛 Debug Mode Enabled - simulator internals will be traced", style="bright_yellow"),
        border_style="yellow"
    ))


def run_command(handler, **options):
    try:
        cli_config = CliConfig(**options)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise CommandError(f"Invalid options: {problems}") from e
    try:
        return handler(cli_config)
    except (DistLearnError, OSError) as e:
        raise CommandError(str(e)) from e


def common_options(func):
    func = click.option('--out', 'output_dir', default='results', show_default=True,
                        type=click.Path(file_okay=False), help="Directory for the report files.")(func)
    func = click.option('--seed', type=int, default=None, help="Master seed (overrides the problem file).")(func)
    func = click.option('--trials', type=int, default=None, help="Monte Carlo trials per configuration.")(func)
    func = click.option('--horizon', type=int, default=None, help="Pulls per trial.")(func)
    return func


def spec_option(func):
    return click.option('--spec', 'spec_path', required=True,
                        help="Problem file (JSON/YAML) or the name of a bundled problem.")(func)


@click.group()
@click.option('--debug', '-d', is_flag=True, help="Trace simulator internals.")
def cli(debug):
    """Learn a hidden discrete distribution from indirect samples."""
    if check_debug_mode(debug):
        enable_debug_mode()
    console.print(Panel(
        Text("Active distribution learning", justify="center", style="bold bright_magenta"),
        subtitle="indirect samples, adaptive pulls",
        border_style="bold bright_magenta"
    ))


@cli.command()
@spec_option
@common_options
def analyze(spec_path, output_dir, horizon, trials, seed):
    """Rank, identifiability and redundant arms of a problem."""
    run_command(cmd_analyze, subcommand="analyze", spec_path=spec_path, output_dir=output_dir,
                horizon=horizon, trials=trials, seed=seed)


@cli.command()
@spec_option
@common_options
@click.option('--policies', default='rr', show_default=True, help="Comma-separated: rr, ub, lb, fixed.")
@click.option('--estimators', default='pi', show_default=True, help="Comma-separated: pi, mle.")
@click.option('--alpha', default=None, help="Comma-separated allocation for the fixed-fraction policy.")
@click.option('--target-error', type=float, default=config.DEFAULT_TARGET_ERROR, show_default=True)
@click.option('--grid-step', type=float, default=config.DEFAULT_GRID_STEP, show_default=True)
@click.option('--workers', type=int, default=None, help="Worker processes (default: DISTLEARN_WORKERS or 1).")
def simulate(spec_path, output_dir, horizon, trials, seed, policies, estimators, alpha, target_error, grid_step,
             workers):
    """Monte Carlo error curves, arm pulls and pulls-to-target."""
    run_command(cmd_simulate, subcommand="simulate", spec_path=spec_path, output_dir=output_dir,
                horizon=horizon, trials=trials, seed=seed, policies=policies, estimators=estimators,
                alpha=alpha, target_error=target_error, grid_step=grid_step, workers=workers)


@cli.command()
@spec_option
@click.option('--out', 'output_dir', default='results', show_default=True, type=click.Path(file_okay=False))
@click.option('--horizon', type=int, default=None, help="Pull budget t (default 1000).")
@click.option('--grid-step', type=float, default=config.DEFAULT_GRID_STEP, show_default=True)
def crlb(spec_path, output_dir, horizon, grid_step):
    """CRLB-minimising allocation and bound-vs-alpha slices."""
    run_command(cmd_crlb, subcommand="crlb", spec_path=spec_path, output_dir=output_dir,
                horizon=horizon, grid_step=grid_step)


@cli.command()
@common_options
@click.option('--target-error', type=float, default=config.DEFAULT_TARGET_ERROR, show_default=True)
@click.option('--grid-step', type=float, default=config.DEFAULT_GRID_STEP, show_default=True)
@click.option('--workers', type=int, default=None)
def reproduce(output_dir, horizon, trials, seed, target_error, grid_step, workers):
    """Run the bundled comparison of pulling policies."""
    run_command(cmd_reproduce, subcommand="reproduce", output_dir=output_dir, horizon=horizon, trials=trials,
                seed=seed, target_error=target_error, grid_step=grid_step, workers=workers)


if __name__ == '__main__':
    sys.exit(cli())
