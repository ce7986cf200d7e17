#!/usr/bin/env python3
"""Main CLI interface for Fillscape."""

import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import click
from dotenv import load_dotenv

from .config import load_config, set_config
from .errors import ConfigError, FillscapeError, NonconvergenceError
from .logger import get_logger, init_logger
from .normspace import DENSITIES


@contextmanager
def _exit_on_error():
    """Map laboratory errors to their exit codes with a diagnostic on stderr."""
    try:
        yield
    except NonconvergenceError as e:
        get_logger().error(f"Error: {e} (pair={e.pair}, best residual={e.best_residual:.3e})")
        sys.exit(e.exit_code)
    except FillscapeError as e:
        get_logger().error(f"Error: {e}")
        sys.exit(e.exit_code)


def _read_json(path: Path, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot parse {what} file {path}: {e}")


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose logging')
@click.option(
    '--env-file',
    type=click.Path(path_type=Path),
    default='.env',
    help='Path to .env file for configuration'
)
@click.option('--threads', type=click.IntRange(min=1), default=None, help='Worker threads (1 runs serially)')
@click.option('--tol', type=click.FloatRange(min=0, min_open=True), default=None, help='Geodesic solver tolerance')
@click.option('--step', type=click.FloatRange(min=0, min_open=True), default=None, help='Integrator step')
@click.option('--starts', type=click.IntRange(min=1), default=None, help='Shooting starts per target')
def cli(verbose: bool, env_file: Optional[Path], threads: Optional[int], tol: Optional[float],
        step: Optional[float], starts: Optional[int]):
    """Numerical laboratory for filling volumes and boundary distances."""
    if env_file and env_file.exists():
        load_dotenv(env_file)
    else:
        load_dotenv()

    init_logger(verbose)
    config = set_config(load_config().with_overrides(threads=threads, tol=tol, step=step, starts=starts))
    get_logger().debug(f"Configuration: {config}")


@cli.command()
@click.argument('norm_file', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--def', 'definition', type=click.Choice(DENSITIES), default='holmes_thompson',
              help='Area density definition')
def density(norm_file: Path, definition: str):
    """Print the area density of the norm in NORM_FILE as JSON."""
    from .normspace import density_report, norm_from_dict

    with _exit_on_error():
        norm = norm_from_dict(_read_json(norm_file, "norm"))
        report = density_report(norm, definition)
    click.echo(json.dumps(report, sort_keys=True))


@cli.command()
@click.argument('field_file', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--p', 'p', type=int, default=16, help='Number of boundary points (>= 8)')
@click.option('--tol', type=click.FloatRange(min=0, min_open=True), default=None,
              help='Shooting tolerance for this table')
@click.option('--out', type=click.Path(dir_okay=False, path_type=Path), default=None,
              help='CSV output path (stdout when omitted)')
def bdtable(field_file: Path, p: int, tol: Optional[float], out: Optional[Path]):
    """Write the boundary distance table of the metric field in FIELD_FILE."""
    from .metricfield import boundary_distance_table, field_from_config

    logger = get_logger()
    with _exit_on_error():
        data = _read_json(field_file, "metric field")
        if not isinstance(data, dict):
            raise ConfigError("Metric field JSON must be an object")
        fld = field_from_config(data)
        table = boundary_distance_table(fld, p, tol=tol)

    if out is None:
        click.echo(table.to_frame().to_csv(float_format="%.12g", index_label="angle"), nl=False)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out)
    logger.info(f"Wrote {p}x{p} boundary table to {out} "
                f"(triangle defect {table.triangle_defect():.3e}, max discrepancy {table.max_discrepancy:.3e})")


@cli.command()
@click.argument('name')
@click.argument('config_file', required=False, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--seed', type=click.IntRange(min=0), default=None, help='Random seed (overrides the config file)')
@click.option('--out', 'output_dir', type=click.Path(file_okay=False, path_type=Path), default=Path('runs'),
              help='Parent directory for run directories')
def experiment(name: str, config_file: Optional[Path], seed: Optional[int], output_dir: Path):
    """Run experiment NAME, optionally configured by CONFIG_FILE."""
    from .experiments import RunConfig, run_experiment
    from .report_generator import ReportGenerator

    logger = get_logger()
    with _exit_on_error():
        cfg = RunConfig.from_file(name, config_file, seed=seed, output_dir=output_dir)
        logger.info(f"Running {name} (seed {cfg.seed}, config {cfg.config_hash[:12]})")
        report = run_experiment(cfg)
        artifacts = ReportGenerator(cfg.output_dir).write(cfg, report)

    for key, value in report.thresholds.items():
        logger.debug(f"Threshold {key}: {value}")
    for note in report.notes:
        logger.info(f"Note: {note}")
    logger.info(f"Verdict: {report.verdict}")
    logger.info(f"Report: {artifacts['report']}")
    sys.exit(report.exit_code)


@cli.command(name='list')
def list_experiments():
    """List registered experiments and their defaults."""
    from .experiments import experiments

    logger = get_logger()
    for name, exp in sorted(experiments().items()):
        logger.info(f"{name}: {exp.description}")
        for key, value in exp.defaults.items():
            logger.info(f"    {key} = {json.dumps(value)}")


def main():
    cli()


if __name__ == '__main__':
    main()
