"""Command-line entry point: ``facetaudit {validate,audit,evaluate,report}``."""

from __future__ import annotations

import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .config import CONFIG_VERSION, OUTPUT_DIR_ENV, FigureOptions, RunConfig, load_config
from .errors import FacetAuditError
from .pipeline import check_headers, render_choropleths, render_predictions, run_audit, run_evaluate
from .report import load_report, slug

HELP = f"""Pre-training bias audit and cross-group model evaluation.

Every command reads one YAML run config (config_version: {CONFIG_VERSION}).
The output directory can be overridden with --output-dir or the
{OUTPUT_DIR_ENV} environment variable.

Exit codes: 0 success, 2 config error, 3 data error, 4 geometry error.
"""


def _fail(exc: FacetAuditError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def _load(config_path: str, **overrides) -> RunConfig:
    return load_config(config_path, overrides)


def _inputs(config: RunConfig, only: tuple[str, ...]):
    selected = [i for i in config.inputs if not only or i.name in only]
    unknown = set(only) - {i.name for i in config.inputs}
    if unknown:
        raise click.BadParameter(f"unknown input(s) {sorted(unknown)}", param_hint="--input")
    return selected


config_arg = click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
input_opt = click.option("--input", "only", multiple=True, help="Restrict to the named input(s).")
output_opt = click.option("--output-dir", type=click.Path(file_okay=False), default=None, help="Override output_dir.")
seed_opt = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the master seed.")


@click.group(help=HELP)
@click.version_option(__version__, prog_name="facetaudit")
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose: int):
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@config_arg
def validate(config_path):
    """Lint the config and check every input header against the schema."""
    try:
        config = _load(config_path)
        check_headers(config)
    except FacetAuditError as exc:
        _fail(exc)
    click.echo(
        f"config OK: {len(config.columns)} columns, {len(config.facets)} facets, "
        f"{len(config.inputs)} inputs, fingerprint {config.fingerprint}"
    )


@main.command()
@config_arg
@input_opt
@output_opt
@seed_opt
def audit(config_path, only, output_dir, seed):
    """Compute CI, KL and KS per group and facet; write report.json and choropleths."""
    try:
        config = _load(config_path, output_dir=output_dir, seed=seed)
        check_headers(config)
        for inp in _inputs(config, only):
            report = run_audit(config, inp)
            nulls = sum(c.metrics is None for c in report.cells)
            click.echo(
                f"{inp.name}: {len(report.cells)} metric cells ({nulls} null), "
                f"{len(report.flags)} disagreement flags -> {config.output_dir / slug(inp.name)}"
            )
    except FacetAuditError as exc:
        _fail(exc)


@main.command()
@config_arg
@input_opt
@output_opt
@seed_opt
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Parallel tree-training workers.")
@click.option("--n-estimators", type=click.IntRange(min=1), default=None, help="Override learner.n_estimators.")
def evaluate(config_path, only, output_dir, seed, workers, n_estimators):
    """Train one forest per group and score every model on every group."""
    try:
        config = _load(config_path, output_dir=output_dir, seed=seed, workers=workers, n_estimators=n_estimators)
        check_headers(config)
        for inp in _inputs(config, only):
            report = run_evaluate(config, inp)
            ev = report.evaluation
            nulls = sum(c.is_null for c in ev.cells)
            click.echo(
                f"{inp.name}: {len(ev.cells)} evaluation cells ({nulls} null) -> {config.output_dir / slug(inp.name)}"
            )
    except FacetAuditError as exc:
        _fail(exc)


@main.command("report")
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Run config supplying geometry and figure style.")
@click.option("--geometry", default=None, help="GeoJSON file or builtin:<name>; overrides the config.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None,
              help="Where to write figures (default: next to the report).")
def report_cmd(report_path, config_path, geometry, output_dir):
    """Re-render figures from a saved report.json."""
    try:
        report = load_report(report_path)
        out = Path(output_dir) if output_dir else Path(report_path).parent
        figures = _load(config_path).figures if config_path else FigureOptions()
        if geometry is not None:
            figures = replace(figures, geometry=geometry)
        n = len(render_choropleths(figures, report, out))
        n += len(render_predictions(report, out))
    except FacetAuditError as exc:
        _fail(exc)
    click.echo(f"rendered {n} figures -> {out / 'figures'}")


if __name__ == "__main__":
    main()
