"""
Experiment runner.

Every command validates its configuration in full before any compute, runs
inside a logfire span, writes `results.json`, `tables/*.csv` and
`plotdata/*.csv`, registers the run and exits with:

- 0 when every check passed,
- 2 when a statistical or identity check failed,
- 3 on a numerical failure (overflow, integrability guard),
- 4 on a configuration error.

Usage: `python -m app.cli <command> [--config run.toml] [--seed S] [--workers N] [--out DIR]`.
"""

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Annotated, Any

import logfire
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table
from sqlmodel import Session

from app.db.database import RunRecord, create_db_and_tables, engine, register_run
from app.engine.experiments import RunReport, run
from app.helpers.exceptions import EngineError, NumericalError
from app.helpers.outputs import write_report
from app.models.Command import Command
from app.models.EstimatorMode import EstimatorMode
from app.models.ExitCode import ExitCode
from app.models.Preset import Preset
from app.settings.config import settings
from app.settings.run_config import RunConfig, load_run_config

cli = typer.Typer(
    name="fk-engine",
    help="Feynman-Kac estimators and property checks for fiber Hamiltonians.",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()

# region options
ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", help="TOML run configuration, the command defaults when absent.", exists=True, dir_okay=False),
]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Master seed (unsigned 64-bit).", min=0)]
WorkersOption = Annotated[int | None, typer.Option("--workers", help="Worker processes of the path map.", min=1)]
OutOption = Annotated[Path | None, typer.Option("--out", help="Output directory, OUTPUT_DIR when absent.", file_okay=False)]
PathsOption = Annotated[int | None, typer.Option("--paths", help="Number of sampled paths.", min=1)]
StepsOption = Annotated[int | None, typer.Option("--steps", help="Number of time steps.", min=1)]
HorizonOption = Annotated[float | None, typer.Option("--horizon", help="Time horizon.")]
BosonsOption = Annotated[int | None, typer.Option("--max-bosons", help="Boson cutoff N.", min=0)]
PresetOption = Annotated[Preset | None, typer.Option("--preset", help="Model preset.")]
# endregion


def _drop_none(values: dict[str, Any]) -> dict[str, Any]:
    return {key: value for key, value in values.items() if value is not None}


def _fail(code: ExitCode, message: str) -> typer.Exit:
    console.print(f"[bold red]{message}[/bold red]")
    return typer.Exit(code=int(code))


def _load(
    command: Command,
    config_path: Path | None,
    out: Path | None,
    mc: dict[str, Any],
    grid: dict[str, Any],
    **sections: dict[str, Any],
) -> RunConfig:
    overrides = {name: _drop_none(values) for name, values in sections.items()}
    overrides["mc"] = _drop_none(mc)
    overrides["grid"] = _drop_none(grid)
    if out is not None:
        overrides.setdefault("output", {})["dir"] = str(out)
    try:
        config = load_run_config(command, config_path)
        return config.with_overrides(**overrides)
    except ValidationError as error:
        for item in error.errors():
            location = ".".join(str(part) for part in item["loc"])
            console.print(f"[red]{location}[/red]: {item['msg']}")
        raise _fail(ExitCode.CONFIG_ERROR, "invalid configuration")
    except (tomllib.TOMLDecodeError, OSError) as error:
        raise _fail(ExitCode.CONFIG_ERROR, f"cannot read configuration: {error}")


def _register(config: RunConfig, status: str, code: ExitCode, results_path: Path | None, report: RunReport | None) -> None:
    summary = {} if report is None else {check.name: check.passed for check in report.checks}
    create_db_and_tables()
    with Session(engine) as session:
        record = register_run(session, RunRecord(
            command=config.command,
            config_hash=config.content_hash(),
            seed=config.mc.seed,
            workers=config.mc.workers,
            status=status,
            exit_code=int(code),
            results_path=None if results_path is None else str(results_path),
            summary=json.dumps(summary, sort_keys=True),
        ))
    logfire.info("registered run {run_id}", run_id=record.id, status=status)


def _print_report(report: RunReport, results_path: Path) -> None:
    table = Table(title=f"{report.command.value} checks")
    table.add_column("check")
    table.add_column("value", justify="right")
    table.add_column("threshold", justify="right")
    table.add_column("verdict")
    for check in report.checks:
        verdict = "[green]PASS[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.name, f"{check.value:.4g}", f"{check.threshold:.4g}", verdict)
    console.print(table)
    console.print(f"results: {results_path}")
    console.print("[bold green]PASS[/bold green]" if report.passed else "[bold red]FAIL[/bold red]")


def execute(config: RunConfig) -> ExitCode:
    """
    Runs a validated configuration, writes its artifacts and registers it.

    :param config: The run configuration.
    :type config: RunConfig
    :return: Exit code of the run.
    :rtype: ExitCode
    """
    try:
        report = run(config)
    except NumericalError as error:
        logfire.error("numerical failure: {error}", error=str(error), command=config.command.value)
        console.print(f"[bold red]numerical failure[/bold red]: {error}")
        _register(config, "ERROR", ExitCode.NUMERICAL_FAILURE, None, None)
        return ExitCode.NUMERICAL_FAILURE
    except (EngineError, ValidationError) as error:
        logfire.error("configuration error: {error}", error=str(error), command=config.command.value)
        console.print(f"[bold red]configuration error[/bold red]: {error}")
        _register(config, "ERROR", ExitCode.CONFIG_ERROR, None, None)
        return ExitCode.CONFIG_ERROR

    results_path = write_report(report, config, config.output_dir)
    _register(config, "PASS" if report.passed else "FAIL", report.exit_code, results_path, report)
    _print_report(report, results_path)
    return report.exit_code


@cli.callback()
def main() -> None:
    """Configures logging once per process."""
    logfire.configure(
        token=settings.LOGS_TOKEN,
        send_to_logfire="if-token-present",
        environment=settings.ENVIRONMENT,
        console=False,
    )


# region commands
@cli.command("fiber-mc")
def fiber_mc(
    config: ConfigOption = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
    paths: PathsOption = None,
    steps: StepsOption = None,
    horizon: HorizonOption = None,
    max_bosons: BosonsOption = None,
    preset: PresetOption = None,
    refine: Annotated[bool | None, typer.Option("--refine/--no-refine", help="Repeat on twice the steps.")] = None,
) -> None:
    """Fiber matrix elements against the truncated oracle."""
    loaded = _load(
        Command.FIBER_MC, config, out,
        mc={"seed": seed, "workers": workers, "n_paths": paths},
        grid={"steps": steps, "horizon": horizon, "refine": refine},
        fock={"max_bosons": max_bosons}, model={"preset": preset},
    )
    raise typer.Exit(code=int(execute(loaded)))


@cli.command("kernel-mc")
def kernel_mc(
    config: ConfigOption = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
    paths: PathsOption = None,
    steps: StepsOption = None,
    horizon: HorizonOption = None,
    max_bosons: BosonsOption = None,
    preset: PresetOption = None,
) -> None:
    """Kernels over Brownian bridges with paired symmetry checks."""
    loaded = _load(
        Command.KERNEL_MC, config, out,
        mc={"seed": seed, "workers": workers, "n_paths": paths},
        grid={"steps": steps, "horizon": horizon},
        fock={"max_bosons": max_bosons}, model={"preset": preset},
    )
    raise typer.Exit(code=int(execute(loaded)))


@cli.command("bridge-moments")
def bridge_moments(
    config: ConfigOption = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
    paths: PathsOption = None,
    steps: StepsOption = None,
    horizon: HorizonOption = None,
) -> None:
    """Moments of the bridge drift against their closed form."""
    loaded = _load(
        Command.BRIDGE_MOMENTS, config, out,
        mc={"seed": seed, "workers": workers, "n_paths": paths},
        grid={"steps": steps, "horizon": horizon},
    )
    raise typer.Exit(code=int(execute(loaded)))


@cli.command("series-vs-sde")
def series_vs_sde(
    config: ConfigOption = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
    paths: PathsOption = None,
    steps: StepsOption = None,
    max_bosons: BosonsOption = None,
    preset: PresetOption = None,
    max_order: Annotated[int | None, typer.Option("--max-order", help="Series truncation order.", min=0)] = None,
) -> None:
    """Time-ordered series against the resummed exponential or the spin SDE."""
    loaded = _load(
        Command.SERIES_VS_SDE, config, out,
        mc={"seed": seed, "workers": workers, "n_paths": paths},
        grid={"steps": steps},
        fock={"max_bosons": max_bosons}, model={"preset": preset}, series={"max_order": max_order},
    )
    raise typer.Exit(code=int(execute(loaded)))


@cli.command("reversal-check")
def reversal_check(
    config: ConfigOption = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
    steps: StepsOption = None,
    max_bosons: BosonsOption = None,
    dump: Annotated[bool, typer.Option("--dump", help="Also write the sampled paths and one trace.")] = False,
) -> None:
    """Time-reversal residuals of the scalar, spin and series integrands."""
    loaded = _load(
        Command.REVERSAL_CHECK, config, out,
        mc={"seed": seed, "workers": workers},
        grid={"steps": steps},
        fock={"max_bosons": max_bosons},
        output={"dump_paths": dump or None, "dump_traces": dump or None},
    )
    raise typer.Exit(code=int(execute(loaded)))


@cli.command("vanhove")
def vanhove(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    max_bosons: BosonsOption = None,
) -> None:
    """Ground energy of the van Hove model against its closed form."""
    loaded = _load(Command.VANHOVE, config, out, mc={"seed": seed}, grid={}, fock={"max_bosons": max_bosons})
    raise typer.Exit(code=int(execute(loaded)))


@cli.command("sweep")
def sweep(
    config: ConfigOption = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
    mode: Annotated[EstimatorMode | None, typer.Option("--mode", help="Fiber estimator mode.")] = None,
) -> None:
    """Bias and standard error over step sizes, cutoffs and path counts."""
    loaded = _load(Command.SWEEP, config, out, mc={"seed": seed, "workers": workers, "mode": mode}, grid={})
    raise typer.Exit(code=int(execute(loaded)))


@cli.command("selftest")
def selftest(
    config: ConfigOption = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
) -> None:
    """The full property suite at reduced path counts."""
    loaded = _load(Command.SELFTEST, config, out, mc={"seed": seed, "workers": workers}, grid={})
    raise typer.Exit(code=int(execute(loaded)))
# endregion


if __name__ == "__main__":
    cli()
