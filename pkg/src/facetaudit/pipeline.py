"""Stage orchestration behind the CLI: audit, evaluate and figure rendering."""

from __future__ import annotations

import contextlib
import hashlib
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import METRICS, FigureOptions, InputSpec, RunConfig
from .errors import ConfigError, DataError, FacetAuditError
from .evaluation import cross_evaluate
from .learner import ForestModel, save_forest, train_forest
from .metrics import MetricCell, audit_group
from .report import (
    BiasReport,
    ChoroplethStyle,
    emit_report,
    load_geometry,
    load_report,
    render_choropleth,
    render_prediction_analysis,
    save_figure,
    slug,
)
from .tabular import (
    MISSING_CODE,
    DataTable,
    GroupPartition,
    drop_columns,
    extract_task,
    ingest_csv,
    partition_by_key,
    read_header,
)

log = logging.getLogger(__name__)

METRIC_TITLES = {"ci": "Class Imbalance", "kl_nats": "KL divergence (nats)", "ks": "Kolmogorov-Smirnov"}


@contextlib.contextmanager
def stage(name: str, **coords):
    """Prefix any toolkit error raised inside with its (stage, coordinates) tag."""
    try:
        yield
    except FacetAuditError as exc:
        where = ", ".join(f"{k}={v}" for k, v in coords.items() if v is not None)
        tag = f"[{name}{': ' + where if where else ''}]"
        if str(exc).startswith("["):
            raise
        raise type(exc)(f"{tag} {exc}") from None


@dataclass
class Prepared:
    input: InputSpec
    table: DataTable
    partition: GroupPartition
    labels: np.ndarray
    classes: tuple[str, ...]
    data_sha256: str


def check_headers(config: RunConfig) -> None:
    """Fail fast with a config error if any declared column is absent from an input header."""
    if not config.csv.header:
        return
    for inp in config.inputs:
        with stage("validate", input=inp.name):
            header = set(read_header(inp.path, config.csv.delimiter, config.csv.encoding, config.csv.quotechar))
            absent = [c.name for c in config.columns if c.name not in header]
            if absent:
                raise ConfigError(f"{inp.path}: schema columns absent from header: {absent}")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def prepare(config: RunConfig, inp: InputSpec) -> Prepared:
    task = config.task_for(inp)
    with stage("ingest", input=inp.name):
        table = ingest_csv(
            inp.path, config.columns,
            delimiter=config.csv.delimiter, encoding=config.csv.encoding,
            header=config.csv.header, quotechar=config.csv.quotechar,
        )
        table = drop_columns(table)
    with stage("partition", input=inp.name):
        partition = partition_by_key(table, config.key_map)
    label = table[task.label]
    if task.positive_class is None and len(label.categories) == 2:
        raise ConfigError(f"[prepare: input={inp.name}] task {task.name!r} is binary; set tasks.{task.name}.positive_class")
    if task.positive_class is not None and task.positive_class not in label.categories:
        raise DataError(
            f"[prepare: input={inp.name}] positive class {task.positive_class!r} not among label values {list(label.categories)}"
        )
    return Prepared(inp, table, partition, label.values, label.categories, _sha256(inp.path))


def _run_metadata(config: RunConfig, prep: Prepared) -> dict:
    task = config.task_for(prep.input)
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = datetime.fromtimestamp(int(epoch), timezone.utc).isoformat() if epoch else None
    return {
        "tool": "facetaudit",
        "tool_version": __version__,
        "input": prep.input.name,
        "task": task.name,
        "label": task.label,
        "seed": config.seed,
        "config_fingerprint": config.fingerprint,
        "data_sha256": prep.data_sha256,
        "timestamp": stamp,
    }


def _ingest_summary(prep: Prepared) -> dict:
    summary = prep.table.summary
    assigned = prep.partition.assignment >= 0
    return {
        "rows_read": summary.rows_read if summary else prep.table.n_rows,
        "rows_rejected": summary.rows_rejected if summary else 0,
        "rows_unassigned": prep.partition.n_unassigned,
        "rows_missing_label": int(np.count_nonzero(assigned & (prep.labels == MISSING_CODE))),
        "group_sizes": prep.partition.sizes,
    }


def audit_cells(config: RunConfig, prep: Prepared) -> list[MetricCell]:
    cells = []
    for group in prep.partition.groups:
        rows = prep.partition.rows(group)
        if len(rows) == 0:
            cells.extend(MetricCell(group, f.attribute, None, reason="empty group") for f in config.facets)
            continue
        with stage("audit", input=prep.input.name, group=group):
            cells.extend(audit_group(
                prep.table, group, rows, config.facets, prep.labels, prep.classes, config.kl_smoothing
            ))
    return cells


def run_dir(config: RunConfig, inp: InputSpec) -> Path:
    return config.output_dir / slug(inp.name)


def render_choropleths(figures: FigureOptions, report: BiasReport, out: Path) -> list[Path]:
    if figures.geometry is None:
        log.info("no geometry configured; skipping choropleths")
        return []
    with stage("report", input=report.run.get("input")):
        geometry = load_geometry(figures.geometry, figures.name_property)
        geometry.require(report.groups)
        paths = []
        for facet in report.facets:
            for metric in METRICS:
                style = ChoroplethStyle(
                    title=f"{METRIC_TITLES[metric]}: {facet.attribute}, {report.run.get('input')}",
                    ramp_start=figures.ramp[0],
                    ramp_end=figures.ramp[1],
                    value_range=figures.value_ranges.get(metric),
                )
                svg = render_choropleth(report.metric_values(metric, facet.attribute), geometry, style)
                paths.append(save_figure(svg, out / "figures" / f"choropleth_{metric}__{slug(facet.attribute)}.svg"))
    return paths


def render_predictions(report: BiasReport, out: Path) -> list[Path]:
    if report.evaluation is None:
        return []
    paths = []
    for cell in report.evaluation.cells:
        for facet in report.facets:
            svg = render_prediction_analysis(cell, facet)
            if svg is None:
                log.info("no confusion data for %s on %s (%s); figure skipped", cell.train_group, cell.test_group, facet.attribute)
                continue
            name = f"{slug(cell.train_group)}__{slug(cell.test_group)}.svg"
            paths.append(save_figure(svg, out / "figures" / "prediction" / slug(facet.attribute) / name))
    return paths


def run_audit(config: RunConfig, inp: InputSpec, prep: Prepared | None = None) -> BiasReport:
    """Ingest, partition and compute every (group, facet) metric cell; write report and maps."""
    prep = prep or prepare(config, inp)
    report = BiasReport(
        run=_run_metadata(config, prep),
        ingest=_ingest_summary(prep),
        groups=prep.partition.groups,
        facets=config.facets,
        cells=audit_cells(config, prep),
        thresholds=config.thresholds,
    )
    out = run_dir(config, inp)
    emit_report(report, out / "report.json")
    render_choropleths(config.figures, report, out)
    return report


def _cached_audit(config: RunConfig, prep: Prepared) -> BiasReport | None:
    path = run_dir(config, prep.input) / "report.json"
    if not path.exists():
        return None
    try:
        cached = load_report(path)
    except (FacetAuditError, KeyError, TypeError):
        return None
    same = (
        cached.run.get("config_fingerprint") == config.fingerprint
        and cached.run.get("data_sha256") == prep.data_sha256
        and cached.run.get("tool_version") == __version__
    )
    return cached if same else None


def holdout_rows(config: RunConfig, group_index: int, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train, holdout) split of a group's row indices."""
    n_hold = int(round(config.holdout_fraction * len(rows)))
    order = np.random.default_rng([config.seed, group_index, 1]).permutation(len(rows))
    return np.sort(rows[order[n_hold:]]), np.sort(rows[order[:n_hold]])


def train_models(config: RunConfig, prep: Prepared):
    task = config.task_for(prep.input)
    models: dict[str, ForestModel | None] = {}
    reasons: dict[str, str] = {}
    holdout: dict[str, np.ndarray] = {}
    for gi, group in enumerate(prep.partition.groups):
        rows = prep.partition.rows(group)
        if len(rows) == 0:
            models[group], reasons[group] = None, "empty group"
            continue
        if config.holdout_fraction > 0:
            rows, holdout[group] = holdout_rows(config, gi, rows)
        try:
            with stage("train", input=prep.input.name, group=group):
                data = extract_task(prep.table.take(rows), task.label)
                models[group] = train_forest(
                    data.features, data.labels, config.learner, classes=data.classes,
                    workers=config.workers, group=group, task=task.name, input=prep.input.name,
                )
        except DataError as exc:
            log.warning("%s", exc)
            models[group], reasons[group] = None, str(exc)
    return models, reasons, holdout


def run_evaluate(config: RunConfig, inp: InputSpec) -> BiasReport:
    """Audit (reusing a matching cached report), train per group, fill the G x G matrix."""
    prep = prepare(config, inp)
    task = config.task_for(inp)
    cached = _cached_audit(config, prep)
    cells = list(cached.cells) if cached is not None else audit_cells(config, prep)
    models, reasons, holdout = train_models(config, prep)
    with stage("evaluate", input=inp.name):
        matrix = cross_evaluate(
            models, prep.partition, prep.table, task.label, config.facets,
            positive_class=task.positive_class if len(prep.classes) == 2 else None,
            holdout=holdout or None, reasons=reasons,
        )
    report = BiasReport(
        run=_run_metadata(config, prep),
        ingest=_ingest_summary(prep),
        groups=prep.partition.groups,
        facets=config.facets,
        cells=cells,
        thresholds=config.thresholds,
        evaluation=matrix,
    )
    out = run_dir(config, inp)
    for group, model in models.items():
        if model is not None:
            save_forest(model, out / "models" / f"{slug(group)}.forest.jsonl")
    emit_report(report, out / "report.json")
    render_choropleths(config.figures, report, out)
    render_predictions(report, out)
    return report
