"""The structured run report and the metric-disagreement flag."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import FacetAuditError
from ..evaluation import EvalCell, EvalMatrix, FacetConfusion, SideConfusion
from ..facets import FacetCounts, FacetSpec, LabelDistribution
from ..metrics import BiasMetrics, MetricCell

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Thresholds:
    ci_high: float = 0.3
    kl_low: float = 0.05
    ks_low: float = 0.1

    def to_dict(self) -> dict:
        return {"ci_high": self.ci_high, "kl_low": self.kl_low, "ks_low": self.ks_low}


@dataclass(frozen=True)
class Disagreement:
    group: str
    attribute: str
    ci: float
    kl_nats: float
    ks: float

    def to_dict(self) -> dict:
        return {"group": self.group, "attribute": self.attribute, "ci": self.ci, "kl_nats": self.kl_nats, "ks": self.ks}


def flag_disagreement(cells: Iterable[MetricCell], thresholds: Thresholds = Thresholds()) -> list[Disagreement]:
    """Cells where Class Imbalance signals risk but KL and KS both stay low.

    Null cells and infinite KL never raise a flag.
    """
    flags = []
    for cell in cells:
        m = cell.metrics
        if m is None:
            continue
        if abs(m.ci) >= thresholds.ci_high and m.kl_nats <= thresholds.kl_low and m.ks <= thresholds.ks_low:
            flags.append(Disagreement(cell.group, cell.attribute, m.ci, m.kl_nats, m.ks))
    return flags


@dataclass
class BiasReport:
    run: dict
    ingest: dict
    groups: tuple[str, ...]
    facets: Sequence[FacetSpec]
    cells: Sequence[MetricCell]
    thresholds: Thresholds = Thresholds()
    evaluation: EvalMatrix | None = None
    flags: list[Disagreement] = field(default_factory=list)

    def __post_init__(self):
        have = {(c.group, c.attribute) for c in self.cells}
        want = {(g, f.attribute) for g in self.groups for f in self.facets}
        if have != want:
            raise ValueError(f"metric cells missing for {sorted(want - have)}")
        if not self.flags:
            self.flags = flag_disagreement(self.cells, self.thresholds)

    def cell(self, group: str, attribute: str) -> MetricCell:
        return next(c for c in self.cells if c.group == group and c.attribute == attribute)

    def metric_values(self, metric: str, attribute: str) -> dict[str, float | None]:
        """group -> metric value (``None`` for null cells), in group order."""
        out = {}
        for g in self.groups:
            m = self.cell(g, attribute).metrics
            out[g] = None if m is None else getattr(m, metric)
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "run": self.run,
            "ingest": self.ingest,
            "groups": list(self.groups),
            "facets": [f.to_dict() for f in self.facets],
            "metric_cells": [c.to_dict() for c in self.cells],
            "thresholds": self.thresholds.to_dict(),
            "disagreements": [f.to_dict() for f in self.flags],
            "evaluation": self.evaluation.to_dict() if self.evaluation is not None else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> BiasReport:
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise FacetAuditError(f"unsupported report schema version {doc.get('schema_version')!r}")
        ev = doc.get("evaluation")
        thresholds = Thresholds(**doc["thresholds"])
        return cls(
            run=doc["run"],
            ingest=doc["ingest"],
            groups=tuple(doc["groups"]),
            facets=[FacetSpec(f["attribute"], f["advantaged"], f["disadvantaged"]) for f in doc["facets"]],
            cells=[_metric_cell(c) for c in doc["metric_cells"]],
            thresholds=thresholds,
            evaluation=_eval_matrix(ev) if ev is not None else None,
            flags=[Disagreement(**f) for f in doc["disagreements"]],
        )


def _number(v):
    return math.inf if v == "Infinity" else v


def _metric_cell(d: dict) -> MetricCell:
    m, c, dist = d["metrics"], d["counts"], d["distribution"]
    return MetricCell(
        group=d["group"],
        attribute=d["attribute"],
        metrics=BiasMetrics(m["ci"], _number(m["kl_nats"]), m["ks"], m["ks_arg_label"]) if m else None,
        counts=FacetCounts(**c) if c else None,
        distribution=LabelDistribution(tuple(dist["labels"]), tuple(dist["counts_a"]), tuple(dist["counts_d"])) if dist else None,
        reason=d["reason"],
    )


def _side(d: dict | None) -> SideConfusion | None:
    return None if d is None else SideConfusion(d["n"], d["tp"], d["fp"], d["tn"], d["fn"])


def _eval_matrix(d: dict) -> EvalMatrix:
    cells = []
    for c in d["cells"]:
        cells.append(EvalCell(
            train_group=c["train_group"],
            test_group=c["test_group"],
            n_test=c["n_test"],
            n_correct=c["n_correct"],
            accuracy=c["accuracy"],
            f1=c["f1"],
            confusion={
                f["attribute"]: FacetConfusion(f["attribute"], _side(f["a"]), _side(f["d"]), f["reason"])
                for f in c["confusion"]
            },
            holdout=c["holdout"],
            reason=c["reason"],
        ))
    return EvalMatrix(tuple(d["groups"]), tuple(cells), d["f1_kind"], d["positive_class"])


def dumps_report(report: BiasReport) -> str:
    return json.dumps(report.to_dict(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def emit_report(report: BiasReport, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_report(report), encoding="utf-8")
    except OSError as exc:
        raise FacetAuditError(f"cannot write report to {path}: {exc}") from None
    return path


def load_report(path: str | Path) -> BiasReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FacetAuditError(f"cannot read report {path}: {exc}") from None
    return BiasReport.from_dict(doc)


def report_schema() -> dict:
    """JSON Schema (draft 2020-12) describing the report document."""
    return json.loads((Path(__file__).parent.parent / "data" / "report.schema.json").read_text(encoding="utf-8"))
