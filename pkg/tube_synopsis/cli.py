"""
Command Line Interface for the tube synopsis engine

Every command prints exactly one JSON object on stdout; logs, progress and
tables go to stderr.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from . import __version__
from .core.config_manager import ConfigManager, parse_override
from .core.scene_synth import load_scene_spec, synth_scene
from .core.scheduler import SWEEP_AXES, evaluate_schedule
from .core.synopsis_coordinator import SynopsisCoordinator
from .core.tube_io import export_curve_csv, load_schedule, load_tube_db, save_schedule, save_tube_db
from .exceptions import ValidationError
from .utils.logger import setup_logging

logger = logging.getLogger(__name__)

console = Console(stderr=True)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
_existing_dir = click.Path(exists=True, file_okay=False, path_type=Path)


def _emit(payload: Dict[str, Any]) -> None:
    click.echo(json.dumps(payload, sort_keys=True))


def _ok(command: str, **fields) -> None:
    _emit({"status": "ok", "command": command, **fields})


def _coordinator(ctx: click.Context) -> SynopsisCoordinator:
    return ctx.obj["coordinator"]


def _override(ctx: click.Context, **values) -> None:
    """Apply command-line flags that were actually given on top of the configuration"""
    config_manager: ConfigManager = ctx.obj["config_manager"]
    for path, value in values.items():
        if value is not None:
            config_manager.set_config(path, value)


def _summary_table(title: str, rows: Sequence[Sequence[Any]]) -> None:
    table = Table(title=title)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="magenta")
    for name, value in rows:
        table.add_row(str(name), str(value))
    console.print(table)


def _params_options(command):
    options = [
        click.option("--alpha", type=float, help="Spatio-temporal grouping threshold (default 0)"),
        click.option("--beta", type=float, help="Chronological grouping threshold in frames (default 0)"),
        click.option("--mode", "grouping_mode", type=click.Choice(["literal", "transitive"]), help="Grouping mode (default transitive)"),
        click.option("--sigma", "sigma_mode", type=click.Choice(["area", "sqrt_area"]), help="d_s normalizer (default sqrt_area)"),
        click.option("--chrono-constant", type=float, help="Cost C of a changed start offset (default 1)"),
        click.option("--collision-weight", type=float, help="Weight of the collision energy term (default 0)"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _apply_params(ctx: click.Context, **flags) -> None:
    _override(ctx, **{f"synopsis.{key}": value for key, value in flags.items()})


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=__version__)
@click.option("--config", "-c", type=_existing_file, help="Configuration file path (YAML or JSON)")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override config values (section.key=value)")
@click.pass_context
def cli(ctx, config, verbose, overrides):
    """Tube Synopsis - group, shift and render tracked-object tubes into a short synopsis"""
    ctx.ensure_object(dict)
    config_manager = ConfigManager(config)
    for assignment in overrides:
        config_manager.set_config(*parse_override(assignment))
    setup_logging(
        verbose,
        log_file=config_manager.get_config("logging", "file"),
        level=config_manager.get_config("logging", "level"),
    )
    ctx.obj["config_manager"] = config_manager
    ctx.obj["coordinator"] = SynopsisCoordinator(config_manager, console=console)


@cli.command()
@click.argument("frames_dir", type=_existing_dir)
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Tube database to write")
@click.option("--learning-rate", type=float, help="Background learning rate (default 0.05)")
@click.option("--k", type=float, help="Foreground threshold in standard deviations (default 3)")
@click.option("--min-area", type=int, help="Smallest blob in pixels (default 9)")
@click.option("--gate", "gate_radius", type=float, help="Association gate radius in pixels (default 20)")
@click.option("--max-missed", type=int, help="Missed frames before a track ends (default 5)")
@click.option("--min-length", type=int, help="Shortest emitted tube in frames (default 3)")
@click.option("--stddev-floor", type=float, help="Lower bound on the background standard deviation (default 2)")
@click.option("--process-noise", type=float, help="Kalman process noise (default 0.01)")
@click.option("--measurement-noise", type=float, help="Kalman measurement noise (default 1)")
@click.option("--selective-update/--full-update", "selective_update", default=None, help="Freeze foreground pixels in the background model (default selective)")
@click.option("--fps", type=float, help="Frame rate recorded in the database (default 25)")
@click.pass_context
def track(ctx, frames_dir, output, **flags):
    """Online phase: extract tubes from a PGM/PPM frame sequence"""
    _override(ctx, **{f"tracker.{key}": value for key, value in flags.items()})
    db = _coordinator(ctx).track(frames_dir)
    save_tube_db(db, output)
    console.print(f"[green]Tracked {len(db)} tubes into {output}[/green]")
    _ok("track", tubes=len(db), original_span=db.original_span(), output=str(output))


@cli.command()
@click.argument("tubes", type=_existing_file)
@_params_options
@click.pass_context
def group(ctx, tubes, **flags):
    """Group tubes under the alpha/beta thresholds"""
    _apply_params(ctx, **flags)
    db = load_tube_db(tubes)
    result = _coordinator(ctx).group(db)
    _ok("group", tubes=len(db), count=len(result), groups=result.as_lists(), alpha=result.alpha, beta=result.beta, mode=result.mode)


@cli.command()
@click.argument("tubes", type=_existing_file)
@_params_options
@click.option("--budget", "collision_budget", type=float, help="Max pixel overlap between groups per frame (default 0)")
@click.option(
    "--packing",
    type=click.Choice(["earliest", "best"]),
    help="Group placement (default earliest: first free offset per group; best: offset with the shortest running length, exact for two groups)",
)
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Schedule file to write")
@click.pass_context
def schedule(ctx, tubes, output, **flags):
    """Response phase: group tubes and minimize the synopsis length"""
    _apply_params(ctx, **flags)
    coordinator = _coordinator(ctx)
    db = load_tube_db(tubes)
    result = coordinator.build_schedule(db)
    save_schedule(result, output, db)
    summary = coordinator.evaluate(db, result)
    _summary_table(
        "Synopsis Schedule",
        [
            ("Tubes", len(db)),
            ("Groups", summary["groups"]),
            ("Original span", summary["original_span"]),
            ("Synopsis length", summary["length"]),
            ("Energy", f"{result.energy.total:.6g}"),
        ],
    )
    _ok("schedule", output=str(output), **summary)


def _parse_values(raw: Optional[str]) -> List[float]:
    try:
        return [float(v) for v in raw.replace(",", " ").split()]
    except ValueError as e:
        raise ValidationError(f"--values must be numbers: {e}") from e


@cli.command()
@click.argument("tubes", type=_existing_file)
@click.option("--axis", type=click.Choice(SWEEP_AXES), required=True, help="Parameter to sweep")
@click.option("--values", help="Comma or space separated ascending values")
@click.option("--auto", "auto_points", type=int, help="Use N evenly spaced values over the natural range")
@click.option("--budget", "collision_budget", type=float, help="Max pixel overlap between groups per frame (default 0)")
@click.option("--mode", "grouping_mode", type=click.Choice(["literal", "transitive"]), help="Grouping mode")
@click.option("--workers", type=int, help="Parallel worker processes (default 1)")
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), help="CSV file for param,length,energy")
@click.pass_context
def sweep(ctx, tubes, axis, values, auto_points, workers, output, **flags):
    """Trace synopsis length and energy over alpha, beta or a length budget"""
    if (values is None) == (auto_points is None):
        raise click.UsageError("give exactly one of --values and --auto")
    _apply_params(ctx, **flags)
    coordinator = _coordinator(ctx)
    db = load_tube_db(tubes)
    points_in = _parse_values(values) if values is not None else coordinator.auto_values(db, axis, auto_points)
    points = coordinator.run_sweep(db, axis, points_in, workers=workers)
    if output is not None:
        export_curve_csv(points, output)
    _summary_table(f"Sweep over {axis}", [(f"{p.value:.6g}", f"L={p.length} E={p.energy:.6g}") for p in points])
    _ok(
        "sweep",
        axis=axis,
        original_span=db.original_span(),
        points=[{"param": p.value, "length": p.length, "energy": p.energy} for p in points],
        output=str(output) if output else None,
    )


@cli.command()
@click.argument("tubes", type=_existing_file)
@click.argument("schedule_file", metavar="SCHEDULE", type=_existing_file)
@click.option("--mode", type=click.Choice(["boxes", "stitch"]), help="Annotated boxes or Poisson-stitched patches")
@click.option("--background", type=_existing_file, help="Background image (PGM/PPM)")
@click.option("--frames-dir", type=_existing_dir, help="Original source frames (needed for stitch)")
@click.option("--label/--no-label", default=None, help="Print each tube's original start frame next to its box (default on)")
@click.option("--max-iters", type=int, help="Gauss-Seidel sweep cap per patch (default 10000)")
@click.option("--tolerance", type=float, help="Max-abs residual at which blending stops (default 0.001)")
@click.option("--solver-method", "method", type=click.Choice(["gauss_seidel", "direct"]), help="Poisson solver (default gauss_seidel)")
@click.option("--output", "-o", type=click.Path(file_okay=False, path_type=Path), default=Path("synopsis_frames"), show_default=True)
@click.pass_context
def render(ctx, tubes, schedule_file, mode, background, frames_dir, label, output, **solver_flags):
    """Render a schedule to frame_%06d.ppm files"""
    _override(ctx, **{"render.label": label}, **{f"solver.{key}": value for key, value in solver_flags.items()})
    solver = ctx.obj["config_manager"].get_solver_config()
    logger.debug(f"Solver settings: {solver.model_dump()}")
    coordinator = _coordinator(ctx)
    db = load_tube_db(tubes)
    result = load_schedule(schedule_file, db)
    canvas = coordinator.resolve_background(db, background=background, frames_dir=frames_dir, base_dir=tubes.parent)
    written = coordinator.render(db, result, output, mode=mode, background=canvas, frames_dir=frames_dir)
    console.print(f"[green]Wrote {len(written)} frames to {output}[/green]")
    _ok("render", frames=len(written), length=result.length, output=str(output))


@cli.command()
@click.argument("spec", type=_existing_file)
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Tube database to write")
@click.option("--frames-dir", type=click.Path(file_okay=False, path_type=Path), help="Also render PGM frames here")
@click.option("--seed", type=int, help="Override the spec's random seed")
@click.pass_context
def synth(ctx, spec, output, frames_dir, seed):
    """Generate a synthetic tube database from a scene spec"""
    scene = load_scene_spec(spec)
    if seed is not None:
        scene = scene.model_copy(update={"seed": seed})
    db = synth_scene(scene, frames_dir=frames_dir)
    save_tube_db(db, output)
    objects = len({t.object_id for t in db.tubes})
    _ok("synth", tubes=len(db), objects=objects, original_span=db.original_span(), seed=scene.seed, output=str(output))


@cli.command()
@click.argument("tubes", type=_existing_file)
@click.argument("schedule_file", metavar="SCHEDULE", type=_existing_file)
@click.pass_context
def energy(ctx, tubes, schedule_file):
    """Recompute the energy breakdown of a saved schedule"""
    coordinator = _coordinator(ctx)
    db = load_tube_db(tubes)
    stored = load_schedule(schedule_file, db)
    evaluated = evaluate_schedule(db, stored.mapping, stored.params)
    _summary_table("Energy", [(k, f"{v:.6g}") for k, v in evaluated.energy.summary().items()])
    _ok(
        "energy",
        length=evaluated.length,
        energy=evaluated.energy.summary(),
        stored_energy=stored.energy.summary(),
        per_pair=[[p.a, p.b, p.e_t, p.e_o, p.e_c] for p in evaluated.energy.per_pair],
        quality=coordinator.plugin_manager.run_all(db, stored),
    )


@cli.command()
@click.option("--template", type=click.Choice(["default", "minimal"]), default="default", show_default=True)
@click.option("--directory", type=click.Path(file_okay=False, path_type=Path), default=Path("."), show_default=True)
@click.pass_context
def init(ctx, template, directory):
    """Write a project configuration file"""
    path = ctx.obj["config_manager"].create_project_config(template, directory)
    console.print(f"[green]Project initialized: {path}[/green]")
    _ok("init", config=str(path), template=template)


@cli.command()
@click.pass_context
def plugins(ctx):
    """List schedule quality plugins"""
    available = _coordinator(ctx).plugin_manager.list_plugins()
    table = Table(title="Available Plugins")
    table.add_column("Name", style="cyan")
    table.add_column("Version", style="magenta")
    table.add_column("Description", style="green")
    for plugin in available:
        table.add_row(plugin["name"], plugin["version"], plugin["description"])
    console.print(table)
    _ok("plugins", plugins=available)


def _fail(error: BaseException, kind: str, code: int) -> int:
    _emit({"status": "error", "kind": kind, "error": str(error), "exit_code": code})
    return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Programmatic entry point; returns the process exit code"""
    load_dotenv()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        result = cli.main(args=argv, prog_name="tube-synopsis", standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        return _fail(e, "usage", EXIT_VALIDATION)
    except click.exceptions.Abort:
        return _fail(RuntimeError("aborted"), "aborted", EXIT_VALIDATION)
    except ValidationError as e:
        logger.error(f"Validation failed: {e}")
        return _fail(e, type(e).__name__, EXIT_VALIDATION)
    except click.ClickException as e:
        e.show()
        return _fail(e, "usage", EXIT_VALIDATION)
    except Exception as e:
        logger.error(f"Command failed: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        return _fail(e, type(e).__name__, EXIT_RUNTIME)
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
