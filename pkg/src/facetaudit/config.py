"""Run configuration: a single YAML document, versioned by ``config_version``.

Relative paths inside the file resolve against the file's directory. See
README.md for the full key reference.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .facets import FacetSpec
from .learner import ForestConfig
from .report.document import Thresholds
from .tabular import BRAZIL_UF_REGIONS, ColumnSchema, Role, validate_schema

CONFIG_VERSION = 1
OUTPUT_DIR_ENV = "FACETAUDIT_OUTPUT_DIR"
BUILTIN_KEY_MAPS = {"brazil_uf": BRAZIL_UF_REGIONS}
METRICS = ("ci", "kl_nats", "ks")

_TOP_KEYS = {
    "config_version", "seed", "output_dir", "csv", "columns", "key_map", "facets", "tasks",
    "inputs", "learner", "evaluation", "metrics", "thresholds", "figures",
}


@dataclass(frozen=True)
class CsvOptions:
    delimiter: str = ";"
    encoding: str = "latin-1"
    quotechar: str = '"'
    header: bool = True


@dataclass(frozen=True)
class Task:
    name: str
    label: str
    positive_class: str | None = None


@dataclass(frozen=True)
class InputSpec:
    name: str
    path: Path
    task: str


@dataclass(frozen=True)
class FigureOptions:
    geometry: str | None = None
    name_property: str = "name"
    ramp: tuple[str, str] = ("#f7fbff", "#08306b")
    value_ranges: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: Path
    csv: CsvOptions
    columns: tuple[ColumnSchema, ...]
    key_map: dict[str, str]
    facets: tuple[FacetSpec, ...]
    tasks: dict[str, Task]
    inputs: tuple[InputSpec, ...]
    learner: ForestConfig
    workers: int = 1
    holdout_fraction: float = 0.0
    kl_smoothing: float = 0.0
    thresholds: Thresholds = Thresholds()
    figures: FigureOptions = FigureOptions()
    fingerprint: str = ""

    def task_for(self, inp: InputSpec) -> Task:
        return self.tasks[inp.task]


def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return mapping[key]


def _check_keys(mapping: Mapping, allowed: set, where: str) -> None:
    extra = sorted(set(mapping) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _fingerprint(raw: dict) -> str:
    # output location and parallelism never change results
    doc = {k: v for k, v in raw.items() if k != "output_dir"}
    learner = dict(doc.get("learner") or {})
    learner.pop("workers", None)
    doc["learner"] = learner
    blob = json.dumps(doc, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def parse_config(raw: Mapping[str, Any], base_dir: str | Path = ".", overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Validate a parsed config document and build a :class:`RunConfig`.

    ``overrides`` may set the scalar fields ``seed``, ``output_dir``,
    ``workers`` and ``n_estimators``.
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a mapping at the top level")
    raw = json.loads(json.dumps(raw, default=str))
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    bad = set(overrides) - {"seed", "output_dir", "workers", "n_estimators"}
    if bad:
        raise ConfigError(f"only scalar fields may be overridden, got {sorted(bad)}")
    if "seed" in overrides:
        raw["seed"] = overrides["seed"]
    if "n_estimators" in overrides:
        raw.setdefault("learner", {})["n_estimators"] = overrides["n_estimators"]
    base = Path(base_dir)
    _check_keys(raw, _TOP_KEYS, "config")

    version = raw.get("config_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}, got {version!r}")
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed is mandatory and must be a non-negative integer")

    csv_raw = raw.get("csv") or {}
    _check_keys(csv_raw, {"delimiter", "encoding", "quotechar", "header"}, "csv")
    csv_opts = CsvOptions(**csv_raw)
    if len(csv_opts.delimiter) != 1:
        raise ConfigError("csv.delimiter must be a single character")

    columns = []
    for i, col in enumerate(_require(raw, "columns", "config")):
        _check_keys(col, {"name", "kind", "role", "missing_tokens", "index"}, f"columns[{i}]")
        columns.append(ColumnSchema(
            name=str(_require(col, "name", f"columns[{i}]")),
            kind=col.get("kind", "categorical"),
            role=col.get("role", "feature"),
            missing_tokens=tuple(col.get("missing_tokens") or ()),
            index=col.get("index"),
        ))
    by_name = {c.name: c for c in columns}

    tasks = {}
    for name, t in (_require(raw, "tasks", "config") or {}).items():
        _check_keys(t, {"label", "positive_class"}, f"tasks.{name}")
        pos = t.get("positive_class")
        tasks[str(name)] = Task(str(name), str(_require(t, "label", f"tasks.{name}")), None if pos is None else str(pos))
    if not tasks:
        raise ConfigError("at least one task is required")
    validate_schema(columns, [t.label for t in tasks.values()])

    km = _require(raw, "key_map", "config")
    if isinstance(km, str):
        if km not in BUILTIN_KEY_MAPS:
            raise ConfigError(f"unknown built-in key_map {km!r}; choose from {sorted(BUILTIN_KEY_MAPS)}")
        key_map = dict(BUILTIN_KEY_MAPS[km])
    elif isinstance(km, Mapping):
        key_map = {str(k): str(v) for k, v in km.items()}
    else:
        raise ConfigError("key_map must be a built-in name or a mapping")
    if not key_map:
        raise ConfigError("key_map is empty")

    facets = []
    for i, f in enumerate(_require(raw, "facets", "config")):
        _check_keys(f, {"attribute", "advantaged", "disadvantaged"}, f"facets[{i}]")
        attr = str(_require(f, "attribute", f"facets[{i}]"))
        col = by_name.get(attr)
        if col is None:
            raise ConfigError(f"facets[{i}]: attribute {attr!r} is not declared in columns")
        if col.role is not Role.PROTECTED or not col.is_coded:
            raise ConfigError(f"facets[{i}]: attribute {attr!r} must be a categorical column with role=protected")
        facets.append(FacetSpec(attr, _require(f, "advantaged", attr), _require(f, "disadvantaged", attr)))
    if len({f.attribute for f in facets}) != len(facets):
        raise ConfigError("each protected attribute may appear in one facet only")

    inputs = []
    for i, inp in enumerate(_require(raw, "inputs", "config")):
        _check_keys(inp, {"name", "path", "task"}, f"inputs[{i}]")
        task = str(_require(inp, "task", f"inputs[{i}]"))
        if task not in tasks:
            raise ConfigError(f"inputs[{i}]: unknown task {task!r}")
        path = Path(str(_require(inp, "path", f"inputs[{i}]")))
        inputs.append(InputSpec(str(_require(inp, "name", f"inputs[{i}]")), path if path.is_absolute() else base / path, task))
    if len({i.name for i in inputs}) != len(inputs):
        raise ConfigError("input names must be unique")
    if not inputs:
        raise ConfigError("at least one input is required")

    lr = dict(raw.get("learner") or {})
    _check_keys(lr, {"n_estimators", "max_depth", "min_samples_split", "features_per_split", "workers"}, "learner")
    workers = int(overrides.get("workers", lr.pop("workers", 1)))
    learner = ForestConfig(master_seed=seed, **lr)

    ev = raw.get("evaluation") or {}
    _check_keys(ev, {"holdout_fraction"}, "evaluation")
    holdout = float(ev.get("holdout_fraction", 0.0))
    if not 0.0 <= holdout < 1.0:
        raise ConfigError("evaluation.holdout_fraction must be in [0, 1)")

    mt = raw.get("metrics") or {}
    _check_keys(mt, {"kl_smoothing"}, "metrics")
    smoothing = float(mt.get("kl_smoothing", 0.0))
    if smoothing < 0:
        raise ConfigError("metrics.kl_smoothing must be >= 0")

    th = raw.get("thresholds") or {}
    _check_keys(th, {"ci_high", "kl_low", "ks_low"}, "thresholds")
    thresholds = Thresholds(**{k: float(v) for k, v in th.items()})

    fig = raw.get("figures") or {}
    _check_keys(fig, {"geometry", "name_property", "ramp", "value_ranges"}, "figures")
    geometry = fig.get("geometry")
    if geometry is not None and not str(geometry).startswith("builtin:") and not Path(geometry).is_absolute():
        geometry = str(base / geometry)
    ranges = {}
    for metric, rng in (fig.get("value_ranges") or {}).items():
        if metric not in METRICS:
            raise ConfigError(f"figures.value_ranges: unknown metric {metric!r}")
        if rng is not None:
            if len(rng) != 2 or not float(rng[0]) < float(rng[1]):
                raise ConfigError(f"figures.value_ranges.{metric} must be [low, high] with low < high")
            ranges[metric] = (float(rng[0]), float(rng[1]))
    ramp = tuple(fig.get("ramp") or FigureOptions.ramp)
    if len(ramp) != 2:
        raise ConfigError("figures.ramp needs exactly two colors")
    figures = FigureOptions(geometry, str(fig.get("name_property", "name")), ramp, ranges)

    out = overrides.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV) or raw.get("output_dir") or "facetaudit-out"
    out = Path(str(out))
    if not out.is_absolute() and "output_dir" not in overrides and OUTPUT_DIR_ENV not in os.environ:
        out = base / out

    return RunConfig(
        seed=seed,
        output_dir=out,
        csv=csv_opts,
        columns=tuple(columns),
        key_map=key_map,
        facets=tuple(facets),
        tasks=tasks,
        inputs=tuple(inputs),
        learner=learner,
        workers=max(1, workers),
        holdout_fraction=holdout,
        kl_smoothing=smoothing,
        thresholds=thresholds,
        figures=figures,
        fingerprint=_fingerprint(raw),
    )


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return parse_config(raw, path.parent, overrides)
