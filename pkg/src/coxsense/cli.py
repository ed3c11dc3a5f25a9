"""Command-line front end: simulate, estimate, evaluate, sweep, peb-map."""

from __future__ import annotations

import click

from .config import load_scenario
from .experiment import METHODS, run_estimate, run_evaluate, run_peb_map, run_simulate, run_sweep


def _scenario(config_path: str):
    try:
        return load_scenario(config_path)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))


@click.group()
def main():
    """Simulate multi-sensor extended-target scenes, estimate them, and
    score the estimates."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Master seed (defaults to the config's).")
@click.option("--out", "out_dir", required=True, type=click.Path())
def simulate(config_path, seed, out_dir):
    """Write per-epoch measurement and ground-truth dumps."""
    scenario = _scenario(config_path)
    run_simulate(scenario, seed if seed is not None else scenario.seed, out_dir)
    click.echo(f"simulated {scenario.epochs} epochs into {out_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--method", required=True, type=click.Choice(METHODS))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
def estimate(config_path, data_dir, method, seed, out_dir):
    """Estimate target states per epoch with one method."""
    scenario = _scenario(config_path)
    try:
        run_estimate(scenario, data_dir, method, out_dir, seed if seed is not None else scenario.seed)
    except (ValueError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"estimates written to {out_dir}")


@main.command()
@click.option("--truth", "truth_dir", required=True, type=click.Path(exists=True))
@click.option("--estimates", "estimates_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def evaluate(truth_dir, estimates_dir, out_path):
    """Score estimates against truth; writes the OSPA table and quantiles."""
    try:
        run_evaluate(truth_dir, estimates_dir, out_path)
    except (ValueError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"OSPA table written to {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--reps", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", is_flag=True, help="Skip replications already completed.")
@click.option("--workers", type=int, default=None, help=f"Parallel workers (or set COXSENSE_WORKERS).")
def sweep(config_path, reps, seed, out_dir, resume, workers):
    """Full experiment: simulate, estimate all methods, evaluate."""
    scenario = _scenario(config_path)
    run_sweep(
        scenario,
        reps,
        seed if seed is not None else scenario.seed,
        out_dir,
        resume=resume,
        workers=workers,
    )
    click.echo(f"sweep complete: {out_dir}")


@main.command("peb-map")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--sensor", "sensor_index", type=int, default=0, show_default=True)
@click.option("--height", type=float, required=True, help="Fixed z of the grid slice.")
@click.option("--resolution", nargs=2, type=int, default=(50, 20), show_default=True, help="Grid points along x and y.")
@click.option("--out", "out_path", required=True, type=click.Path())
def peb_map(config_path, sensor_index, height, resolution, out_path):
    """Export a position-error-bound grid for one sensor."""
    scenario = _scenario(config_path)
    try:
        run_peb_map(scenario, sensor_index, height, resolution[0], resolution[1], out_path)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"PEB grid written to {out_path}")


if __name__ == "__main__":
    main()
