from __future__ import annotations

import numpy as np
import pytest

from facetaudit.facets import FacetSpec
from facetaudit.tabular import ColumnSchema, table_from_values


def make_table(spec: dict, data: dict):
    """spec: name -> (kind, role); data: name -> values."""
    schema = [ColumnSchema(name, kind, role) for name, (kind, role) in spec.items()]
    return table_from_values(schema, data)


def facet_table(attr_values, labels=None):
    """Table with one protected column ``attr`` and optional binary label ``y``."""
    spec = {"attr": ("categorical", "protected"), "g": ("categorical", "group_key")}
    data = {"attr": list(attr_values), "g": ["G"] * len(attr_values)}
    if labels is not None:
        spec["y"] = ("categorical", "label")
        data["y"] = [str(v) for v in labels]
    return make_table(spec, data)


@pytest.fixture
def ab_facet():
    return FacetSpec("attr", {"a"}, {"d"})


def separable_groups(n_per_group: int, groups, seed: int):
    """Per-group synthetic data where label = (x > 0.5); facet attr balanced."""
    rng = np.random.default_rng(seed)
    n = n_per_group * len(groups)
    x = rng.random(n)
    return make_table(
        {
            "region": ("categorical", "group_key"),
            "attr": ("categorical", "protected"),
            "x": ("numeric", "feature"),
            "noise": ("numeric", "feature"),
            "y": ("binary", "label"),
        },
        {
            "region": [g for g in groups for _ in range(n_per_group)],
            "attr": ["a" if v else "d" for v in rng.random(n) < 0.5],
            "x": x,
            "noise": rng.random(n),
            "y": ["1" if v > 0.5 else "0" for v in x],
        },
    )


REGIONS = ["North", "Northeast", "Central-West", "Southeast", "South"]


def build_report(table, groups=REGIONS, n_estimators=8, evaluate=True):
    """Audit and (optionally) cross-evaluate a ``separable_groups``-style table."""
    from facetaudit import __version__
    from facetaudit.evaluation import cross_evaluate
    from facetaudit.learner import ForestConfig, train_forest
    from facetaudit.metrics import audit_group
    from facetaudit.report import BiasReport
    from facetaudit.tabular import extract_task, partition_by_key

    facet = FacetSpec("attr", {"a"}, {"d"})
    part = partition_by_key(table, {g: g for g in groups}, key="region")
    task = extract_task(table, "y")
    cells = []
    for g in part.groups:
        cells += audit_group(task.features, g, part.rows(g), [facet], task.labels, task.classes)
    matrix = None
    if evaluate:
        models = {}
        for g in part.groups:
            sub = extract_task(table.take(part.rows(g)), "y")
            models[g] = train_forest(sub.features, sub.labels, ForestConfig(master_seed=1, n_estimators=n_estimators), sub.classes)
        matrix = cross_evaluate(models, part, table, "y", [facet], positive_class="1")
    return BiasReport(
        run={"tool": "facetaudit", "tool_version": __version__, "input": "test", "seed": 1, "config_fingerprint": "x"},
        ingest={"rows_read": table.n_rows, "rows_rejected": 0, "rows_unassigned": part.n_unassigned, "group_sizes": part.sizes},
        groups=part.groups,
        facets=[facet],
        cells=cells,
        evaluation=matrix,
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
