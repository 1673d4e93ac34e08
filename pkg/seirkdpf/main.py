# SEIR-KDPF
# Copyright (C) 2025 Ray
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

"""
Command-line entry point.

    python -m seirkdpf.main fit --data data/guinea.csv --out output/guinea
    python -m seirkdpf.main simulate --days 120 --seed 7 --out output/synthetic
    python -m seirkdpf.main fit --data output/synthetic/reports.csv --truth output/synthetic/truth.json
    python -m seirkdpf.main calibrate --data output/synthetic/reports.csv --latent output/synthetic/latent_trajectory.csv
    python -m seirkdpf.main summarize --snapshots output/guinea/snapshots.npz --out output/resummary

Exit codes: 0 success, 1 invalid input or configuration, 2 filter degeneracy,
64 command-line usage error.
"""
import dataclasses
import pathlib
import sys

import click

from seirkdpf.config import settings
from seirkdpf.core.model import CompartmentState
from seirkdpf.core.observation import calibrate_link
from seirkdpf.core.run_context import RunContext, load_snapshots, save_snapshots as write_snapshots
from seirkdpf.core.summary import DEFAULT_QUANTILES, TrajectorySummary, export_summary, summarize as summarize_ensembles
from seirkdpf.data_sources.reports import parse_report_csv
from seirkdpf.errors import DataValidationError, FilterDegeneracyError, SeirKdpfError
from seirkdpf.filtering.kdpf import run_filter
from seirkdpf.logging_setup import configure_logging, get_logger
from seirkdpf.priors.spec import prior_means
from seirkdpf.simulation.simulator import (
    read_latent_trajectory,
    read_truth,
    recovery_report,
    simulate as simulate_outbreak,
    write_synthetic_run,
)

logger = get_logger("main")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DEGENERATE = 2
EXIT_USAGE = 64

TRAJECTORY_FILES = {
    "state": "state_trajectory.csv",
    "param": "param_trajectory.csv",
    "r0": "r0_trajectory.csv",
}


def _parse_quantiles(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from e
    if not values or any(not 0.0 < q < 1.0 for q in values):
        raise click.BadParameter(f"quantiles must lie in (0, 1), got {text!r}")
    return values


def _write_trajectories(summary: TrajectorySummary, out_dir: pathlib.Path) -> None:
    for group, name in TRAJECTORY_FILES.items():
        export_summary(summary.select(group), "csv", out_dir / name)


def _configure(quiet: bool) -> None:
    configure_logging("WARNING" if quiet else settings.log_level)


@click.group()
def cli():
    """Kernel density particle filter for a stochastic SEIR model with time-varying R0."""


@cli.command()
@click.option("--data", "data_path", required=True, help="Cumulative report CSV (date,cum_cases,cum_deaths).")
@click.option("--config", "config_path", default=None, help="JSON run configuration; omitted keys take defaults.")
@click.option("--seed", type=int, default=None, help="Overrides filter.seed.")
@click.option("--out", "out_dir", default=None, help="Output directory (default: SEIRKDPF_OUTPUT_DIR).")
@click.option("--particles", type=int, default=None, help="Overrides filter.num_particles.")
@click.option("--workers", type=int, default=None, help="Worker threads for per-particle work.")
@click.option("--truth", "truth_path", default=None, help="truth.json of a synthetic run; writes recovery.json.")
@click.option("--save-snapshots", is_flag=True, help="Also write every report-day ensemble to snapshots.npz.")
@click.option("--quiet", is_flag=True, help="Only log warnings and errors; no progress bar.")
def fit(data_path, config_path, seed, out_dir, particles, workers, truth_path, save_snapshots, quiet):
    """Run the filter over a report dataset."""
    _configure(quiet)
    overrides = {"filter": {k: v for k, v in {
        "seed": seed, "num_particles": particles, "workers": workers,
    }.items() if v is not None}}
    ctx = RunContext(settings, config_path=config_path, overrides=overrides, out_dir=out_dir)
    dataset = parse_report_csv(data_path)
    config = ctx.run_config

    result = run_filter(
        dataset, config.priors, config.observation, config.filter,
        streams=ctx.streams, progress=not quiet and sys.stderr.isatty(), keep_snapshots=save_snapshots,
    )
    _write_trajectories(result.summary, ctx.output_dir)
    ctx.write_json("diagnostics.json", {
        "num_particles": config.filter.num_particles,
        "seed": config.filter.seed,
        "log_evidence_total": result.log_evidence,
        "steps": [dataclasses.asdict(step) for step in result.diagnostics],
    })
    if save_snapshots:
        path = write_snapshots(ctx.output_path("snapshots.npz"), result.snapshots, config.filter.population, dataset.epoch)
        logger.info(f"Wrote {path}.")
    if truth_path:
        truth_path = pathlib.Path(truth_path)
        true_params, _ = read_truth(truth_path)
        latent = read_latent_trajectory(truth_path.with_name("latent_trajectory.csv"))
        metrics = recovery_report(true_params, latent, result.summary)
        ctx.write_json("recovery.json", metrics.model_dump(mode="json"))
    click.echo(f"Filtered {len(dataset)} reports; results in {ctx.output_dir}")


@cli.command()
@click.option("--days", type=int, default=120, show_default=True, help="Horizon of the synthetic outbreak.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", default=None, help="Output directory (default: SEIRKDPF_OUTPUT_DIR).")
@click.option("--config", "config_path", default=None, help="Priors and observation link; truth is the prior means.")
@click.option("--quiet", is_flag=True)
def simulate(days, seed, out_dir, config_path, quiet):
    """Draw a synthetic outbreak with the prior means as the true parameters."""
    _configure(quiet)
    ctx = RunContext(settings, config_path=config_path, out_dir=out_dir)
    config = ctx.run_config
    x0, theta = prior_means(config.priors)
    run = simulate_outbreak(theta, x0, days, None, config.observation, seed)
    paths = write_synthetic_run(run, ctx.output_dir)
    click.echo(f"Wrote {len(run.reports)} synthetic reports to {paths['reports']}")


@cli.command()
@click.option("--data", "data_path", required=True, help="Cumulative report CSV.")
@click.option("--latent", "latent_path", required=True, help="latent_trajectory.csv aligned with the reports.")
@click.option("--config", "config_path", default=None, help="Supplies the population.")
@click.option("--out", "out_path", default=None, help="Where to write the observation block (default: stdout).")
@click.option("--quiet", is_flag=True)
def calibrate(data_path, latent_path, config_path, out_path, quiet):
    """Fit the observation link by log-log regression of reports on latent counts."""
    _configure(quiet)
    ctx = RunContext(settings, config_path=config_path)
    dataset = parse_report_csv(data_path)
    latent = read_latent_trajectory(latent_path)
    if dataset.horizon >= latent.shape[0]:
        raise DataValidationError(
            f"reports reach day {dataset.horizon} but the latent trajectory ends on day {latent.shape[0] - 1}"
        )
    states = [CompartmentState.from_array(latent[obs.day_index]) for obs in dataset.records]
    link = calibrate_link(dataset.records, states, ctx.run_config.filter.population)
    text = link.model_dump_json(indent=2)
    if out_path:
        out_path = pathlib.Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text + "\n", encoding="utf-8")
        click.echo(f"Wrote calibrated observation link to {out_path}")
    else:
        click.echo(text)


@cli.command()
@click.option("--snapshots", "snapshots_path", required=True, help="snapshots.npz written by fit --save-snapshots.")
@click.option("--out", "out_dir", default=None, help="Output directory (default: SEIRKDPF_OUTPUT_DIR).")
@click.option("--quantiles", default=",".join(str(q) for q in DEFAULT_QUANTILES), show_default=True)
@click.option("--quiet", is_flag=True)
def summarize(snapshots_path, out_dir, quantiles, quiet):
    """Re-summarize saved report-day ensembles with other quantiles."""
    _configure(quiet)
    levels = _parse_quantiles(quantiles)
    snapshots, population, epoch = load_snapshots(snapshots_path)
    summary = summarize_ensembles(snapshots, levels, population=population, epoch=epoch)
    ctx = RunContext(settings, out_dir=out_dir)
    _write_trajectories(summary, ctx.output_dir)
    click.echo(f"Summarized {len(snapshots)} snapshots into {ctx.output_dir}")


def cli_main(argv: list[str] | None = None) -> int:
    """Runs the CLI and maps failures onto exit codes instead of raising."""
    try:
        rv = cli.main(args=argv, prog_name="seirkdpf", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo("Aborted.", err=True)
        return EXIT_INVALID
    except click.ClickException as e:
        e.show()
        return EXIT_INVALID
    except FilterDegeneracyError as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_DEGENERATE
    except SeirKdpfError as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_INVALID
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(cli_main())
