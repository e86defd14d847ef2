"""Command-line interface for the power-loop designer."""

import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
from loguru import logger
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .config_loader import apply_overrides, load_config
from .core import EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY_FAILED, PowerLoopDesigner, exit_code
from .exceptions import ConfigParseError, ConfigValidationError
from .models import DesignConfig, DesignReport, FixtureResult, Trajectory
from .report_writer import ReportWriter
from .verification import FIXTURES, run_fixtures


console = Console()


def setup_logging(verbose: bool = False) -> None:
    """Setup logging configuration.

    Args:
        verbose: Enable verbose logging
    """
    # Remove default logger
    logger.remove()

    log_level = "DEBUG" if verbose else "INFO"
    logger.add(
        sys.stderr,
        level=log_level,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        colorize=True
    )


class ExitCodeGroup(click.Group):
    """Click group that reports usage errors with exit code 64."""

    def main(self, args: Any = None, prog_name: Optional[str] = None, complete_var: Optional[str] = None,
             standalone_mode: bool = True, **extra: Any) -> Any:
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as e:
            e.show()
            code = EXIT_USAGE
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = 1
        if standalone_mode:
            sys.exit(code)
        return code


def common_options(func: Callable) -> Callable:
    """--out, --dt and --verbose for the commands that take a configuration."""
    func = click.option('--verbose', is_flag=True, help="Enable verbose logging")(func)
    func = click.option('--dt', type=float, help="Override the integration step (s)")(func)
    func = click.option('--out', 'out', type=click.Path(file_okay=False, path_type=Path),
                        help="Override the output directory")(func)
    return click.argument('config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path))(func)


def prepare_config(config_path: Path, out: Optional[Path], dt: Optional[float]) -> Tuple[Optional[DesignConfig], int]:
    """Load, override and validate; on failure print why and return the exit code."""
    try:
        return apply_overrides(load_config(config_path), out=out, dt=dt), EXIT_OK
    except (ConfigParseError, ConfigValidationError) as e:
        console.print(f"[red]Invalid configuration {config_path}: {e}[/red]")
        return None, EXIT_USAGE
    except OSError as e:
        console.print(f"[red]Cannot read {config_path}: {e}[/red]")
        return None, EXIT_IO


def display_config(config: DesignConfig) -> None:
    """Display configuration in a nice table.

    Args:
        config: Design configuration
    """
    table = Table(title="Design Configuration")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")

    for name, value in config.system.model_dump().items():
        table.add_row(f"system.{name}", f"{value:g}")
    for case in config.cases:
        damping = f"xi={case.xi:g}" if case.xi is not None else f"P.O.={case.po:g}%"
        table.add_row(f"case {case.name}", f"{damping}, ts={case.ts:g} s, a={case.a:g}")
    table.add_row("sim", f"t_end={config.sim.t_end:g} s, dt={config.sim.dt:g} s, {len(config.sim.events)} events")
    for event in config.sim.events:
        table.add_row("  event", f"t={event.time:g} s: {event.target} -> {event.value:g}")
    table.add_row("output", f"{config.output.directory} ({', '.join(config.output.formats)})")

    console.print(table)


def display_design(report: DesignReport) -> None:
    table = Table(title="Design Results")
    table.add_column("Case", style="cyan")
    table.add_column("Status")
    table.add_column("Achieved eigenvalues", style="green")
    table.add_column("Error", style="yellow")

    for case in report.cases:
        status = "[green]ok[/green]" if case.succeeded else f"[red]{case.status}[/red]"
        if case.gain is not None:
            eigs = ", ".join(f"{z.real:.3f}{z.imag:+.3f}j" for z in case.gain.achieved_eigs)
            table.add_row(case.name, status, eigs, f"{case.gain.max_rel_error:.1e}")
        else:
            table.add_row(case.name, status, case.message, "")

    console.print(table)


def display_metrics(report: DesignReport) -> None:
    table = Table(title="Step Response Metrics")
    table.add_column("Case", style="cyan")
    table.add_column("Overshoot %", style="green")
    table.add_column("Settling s", style="green")
    table.add_column("Peak s", style="yellow")

    for case in report.cases:
        m = case.metrics
        if m is None:
            table.add_row(case.name, "-", "not settled" if case.settled is False else "-", case.status)
        else:
            table.add_row(case.name, f"{m.overshoot:.2f}", f"{m.settling_time:.3f}", f"{m.peak_time:.3f}")

    console.print(table)


def display_fixtures(results: List[FixtureResult]) -> None:
    table = Table(title="Verification Fixtures")
    table.add_column("Fixture", style="cyan")
    table.add_column("Result")
    table.add_column("Error", style="yellow")
    table.add_column("Tolerance", style="yellow")
    table.add_column("Detail", style="dim")

    for result in results:
        verdict = "[green]PASS[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, verdict, f"{result.worst_error:.3e}", f"{result.tolerance:.1e}", result.detail)

    console.print(table)


def write_outputs(config: DesignConfig, report: DesignReport,
                  trajectories: Optional[Dict[str, Trajectory]] = None) -> int:
    """Write result files; EXIT_IO on filesystem errors."""
    try:
        written = ReportWriter(config.output).write(report, trajectories)
    except OSError as e:
        logger.error(f"Writing results failed: {e}")
        console.print(f"[red]Cannot write results to {config.output.directory}: {e}[/red]")
        return EXIT_IO
    console.print(f"\n[bold blue]Results saved to:[/bold blue] [green]{config.output.directory}[/green] "
                  f"({len(written)} files)")
    return EXIT_OK


@click.group(cls=ExitCodeGroup)
@click.version_option(version=__version__)
def cli() -> None:
    """Power-loop designer - full-state feedback design for grid-forming converters."""
    pass


@cli.command()
@common_options
@click.pass_context
def design(ctx: click.Context, config_path: Path, out: Optional[Path], dt: Optional[float], verbose: bool) -> None:
    """Run the design procedure for every case.

    CONFIG_PATH: JSON or YAML design configuration
    """
    setup_logging(verbose)
    config, code = prepare_config(config_path, out, dt)
    if config is None:
        ctx.exit(code)

    console.print(f"\n[bold blue]Power-loop designer[/bold blue] - designing [green]{config_path}[/green]")
    report, _ = PowerLoopDesigner(config).run(simulate=False)
    display_design(report)

    io_code = write_outputs(config, report)
    ctx.exit(io_code if io_code != EXIT_OK else exit_code(report))


@cli.command()
@common_options
@click.pass_context
def simulate(ctx: click.Context, config_path: Path, out: Optional[Path], dt: Optional[float], verbose: bool) -> None:
    """Design every case, then simulate the configured setpoint steps.

    CONFIG_PATH: JSON or YAML design configuration
    """
    setup_logging(verbose)
    config, code = prepare_config(config_path, out, dt)
    if config is None:
        ctx.exit(code)

    console.print(f"\n[bold blue]Power-loop designer[/bold blue] - simulating [green]{config_path}[/green]")
    report, trajectories = PowerLoopDesigner(config).run(simulate=True)
    display_design(report)
    display_metrics(report)

    io_code = write_outputs(config, report, trajectories)
    ctx.exit(io_code if io_code != EXIT_OK else exit_code(report))


@cli.command()
@click.option('--fixture', 'fixtures', multiple=True, type=click.Choice(list(FIXTURES)),
              help="Run only this fixture (repeatable)")
@click.option('--tol', type=click.FloatRange(min=0.0), help="Replace every fixture's tolerance")
@click.option('--verbose', is_flag=True, help="Enable verbose logging")
@click.pass_context
def verify(ctx: click.Context, fixtures: Tuple[str, ...], tol: Optional[float], verbose: bool) -> None:
    """Run the built-in regression fixtures."""
    setup_logging(verbose)
    with console.status("[bold green]Running fixtures..."):
        results = run_fixtures(list(fixtures) or None, tolerance=tol)
    display_fixtures(results)

    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(Panel(f"[red]{len(failed)} of {len(results)} fixtures failed: {', '.join(failed)}[/red]",
                            border_style="red"))
        ctx.exit(EXIT_VERIFY_FAILED)
    console.print(f"[green]✓ All {len(results)} fixtures passed[/green]")
    ctx.exit(EXIT_OK)


@cli.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
def validate_config(ctx: click.Context, config_path: Path) -> None:
    """Validate a configuration file.

    CONFIG_PATH: Path to the configuration file to validate
    """
    console.print(f"[bold blue]Validating configuration:[/bold blue] [green]{config_path}[/green]")
    config, code = prepare_config(config_path, None, None)
    if config is None:
        ctx.exit(code)
    console.print("[green]✓ Configuration is valid[/green]")
    display_config(config)


@cli.command(name="fixtures")
def list_fixtures() -> None:
    """List the built-in verification fixtures."""
    table = Table(title="Available Fixtures")
    table.add_column("Name", style="cyan")
    table.add_column("Tolerance", style="yellow")
    table.add_column("Checks", style="green")

    for fixture in FIXTURES.values():
        table.add_row(fixture.name, f"{fixture.tolerance:g}", fixture.description)

    console.print(table)


def main() -> None:
    """Main entry point for the CLI."""
    cli()


if __name__ == '__main__':
    main()
