"""Columnar data model, CSV ingestion, preprocessing and group partitioning.

Categorical and binary columns are interned: values are stored as integer
codes into a per-column dictionary that is sorted lexicographically, with
``-1`` reserved for the missing marker. Numeric columns are ``float64`` with
``NaN`` as the missing marker. Tables are immutable once built; every
transformation returns a new table that shares the underlying dictionaries,
so sub-tables taken from one ingested file stay mutually compatible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DataError, DegenerateTaskError

log = logging.getLogger(__name__)

MISSING = "«missing»"
MISSING_CODE = -1

# Abort ingestion when more than this fraction of data rows is malformed.
MAX_REJECT_FRACTION = 0.5


class Kind(str, Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"
    BINARY = "binary"


class Role(str, Enum):
    FEATURE = "feature"
    LABEL = "label"
    PROTECTED = "protected"
    GROUP_KEY = "group_key"
    DROP = "drop"


@dataclass(frozen=True)
class ColumnSchema:
    """Declared type and role of one input column.

    ``index`` is only consulted for header-less files.
    """

    name: str
    kind: Kind = Kind.CATEGORICAL
    role: Role = Role.FEATURE
    missing_tokens: tuple[str, ...] = ()
    index: int | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", Kind(self.kind))
            object.__setattr__(self, "role", Role(self.role))
        except ValueError as exc:
            raise ConfigError(f"column {self.name!r}: {exc}") from None
        object.__setattr__(self, "missing_tokens", tuple(str(t) for t in self.missing_tokens))

    @property
    def is_coded(self) -> bool:
        return self.kind is not Kind.NUMERIC


def validate_schema(schema: Sequence[ColumnSchema], labels: Iterable[str] = ()) -> None:
    """Check the declarative invariants of a schema.

    ``labels`` lists the label columns of the configured tasks; each must be
    declared with ``role=label`` and a coded kind.
    """
    names = [c.name for c in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"duplicate column names in schema: {dupes}")
    keys = [c.name for c in schema if c.role is Role.GROUP_KEY]
    if len(keys) != 1:
        raise ConfigError(f"schema needs exactly one group_key column, found {keys or 'none'}")
    by_name = {c.name: c for c in schema}
    for label in labels:
        col = by_name.get(label)
        if col is None:
            raise ConfigError(f"task label column {label!r} is not declared in the schema")
        if col.role is not Role.LABEL:
            raise ConfigError(f"task label column {label!r} must have role=label, has {col.role.value}")
        if not col.is_coded:
            raise ConfigError(f"task label column {label!r} must be categorical or binary")


@dataclass(frozen=True, eq=False)
class Column:
    schema: ColumnSchema
    values: np.ndarray
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def kind(self) -> Kind:
        return self.schema.kind

    def encode(self, value: str) -> int:
        if value == MISSING:
            return MISSING_CODE
        return self._index[value]

    def decode(self, code: int) -> str:
        return MISSING if code == MISSING_CODE else self.categories[code]

    def decoded(self) -> list:
        """Values as Python objects: strings for coded columns, floats (NaN kept) otherwise."""
        if self.schema.is_coded:
            return [self.decode(int(c)) for c in self.values]
        return self.values.tolist()

    def missing_mask(self) -> np.ndarray:
        if self.schema.is_coded:
            return self.values == MISSING_CODE
        return np.isnan(self.values)

    def take(self, rows: np.ndarray) -> Column:
        return Column(self.schema, self.values[rows], self.categories)

    def with_values(self, values) -> Column:
        """Same schema and dictionary, new per-row values (codes for coded columns)."""
        values = np.asarray(values, dtype=self.values.dtype)
        if values.shape != self.values.shape:
            raise ValueError(f"expected {len(self.values)} values, got {values.shape}")
        if self.schema.is_coded and (values.min(initial=0) < MISSING_CODE or values.max(initial=0) >= len(self.categories)):
            raise ValueError(f"codes out of range for column {self.name!r}")
        return Column(self.schema, values.copy(), self.categories)

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {v: i for i, v in enumerate(self.categories)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def equals(self, other: Column) -> bool:
        return (
            self.schema == other.schema
            and self.categories == other.categories
            and np.array_equal(self.values, other.values, equal_nan=not self.schema.is_coded)
        )


@dataclass(frozen=True)
class IngestSummary:
    path: str
    rows_read: int
    rows_rejected: int
    rejected_lines: tuple[int, ...] = ()

    @property
    def rows_kept(self) -> int:
        return self.rows_read - self.rows_rejected


class DataTable:
    """Immutable named collection of equal-length columns."""

    def __init__(self, columns: Sequence[Column], summary: IngestSummary | None = None):
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate column names: {names}")
        lengths = {len(c.values) for c in columns}
        if len(lengths) > 1:
            raise DataError(f"columns have unequal lengths: {sorted(lengths)}")
        self._columns = {c.name: c for c in columns}
        self.n_rows = lengths.pop() if lengths else 0
        self.summary = summary

    def __repr__(self) -> str:
        return f"DataTable(n_rows={self.n_rows}, columns={self.names})"

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def __getitem__(self, name: str) -> Column:
        try:
            return self._columns[name]
        except KeyError:
            raise KeyError(f"no column {name!r}; have {self.names}") from None

    def __len__(self) -> int:
        return self.n_rows

    @property
    def names(self) -> list[str]:
        return list(self._columns)

    @property
    def columns(self) -> list[Column]:
        return list(self._columns.values())

    @property
    def schema(self) -> list[ColumnSchema]:
        return [c.schema for c in self._columns.values()]

    def with_role(self, *roles: Role) -> list[Column]:
        return [c for c in self._columns.values() if c.schema.role in roles]

    def take(self, rows: np.ndarray) -> DataTable:
        rows = np.asarray(rows, dtype=np.int64)
        return DataTable([c.take(rows) for c in self._columns.values()], self.summary)

    def replace(self, column: Column) -> DataTable:
        """Copy with the same-named column swapped for ``column``."""
        if column.name not in self._columns:
            raise KeyError(f"no column {column.name!r}; have {self.names}")
        return DataTable([column if c.name == column.name else c for c in self._columns.values()], self.summary)

    def without(self, names: Iterable[str]) -> DataTable:
        skip = set(names)
        return DataTable([c for c in self._columns.values() if c.name not in skip], self.summary)

    def equals(self, other: DataTable) -> bool:
        return self.names == other.names and all(self[n].equals(other[n]) for n in self.names)

    def fingerprint(self, names: Sequence[str] | None = None) -> str:
        """Hash of names, kinds and dictionaries of the selected columns (not of values)."""
        payload = [
            [c.name, c.kind.value, list(c.categories)]
            for c in (self[n] for n in (names if names is not None else self.names))
        ]
        blob = json.dumps(payload, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _format_number(v: float) -> str:
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_csv(table: DataTable, path: str | Path, delimiter: str = ";", encoding: str = "latin-1") -> None:
    """Serialize a table back to CSV with a header row; missing values become empty cells."""
    cols = table.columns
    rendered = []
    for c in cols:
        if c.schema.is_coded:
            rendered.append(["" if v == MISSING else v for v in c.decoded()])
        else:
            rendered.append([_format_number(v) for v in c.values.tolist()])
    with open(path, "w", newline="", encoding=encoding) as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(table.names)
        writer.writerows(zip(*rendered))


def _intern(raw: list) -> tuple[np.ndarray, tuple[str, ...]]:
    categories = tuple(sorted({v for v in raw if v is not None}))
    index = {v: i for i, v in enumerate(categories)}
    codes = np.fromiter(
        (MISSING_CODE if v is None else index[v] for v in raw), dtype=np.int64, count=len(raw)
    )
    return codes, categories


def _resolve_positions(schema: Sequence[ColumnSchema], header: list[str] | None, path) -> list[int]:
    if header is not None:
        where = {name: i for i, name in enumerate(header)}
        absent = [c.name for c in schema if c.name not in where]
        if absent:
            raise ConfigError(
                f"{path}: schema columns absent from header: {absent} (header has {len(header)} columns)"
            )
        return [where[c.name] for c in schema]
    positions = []
    for c in schema:
        if c.index is None:
            raise ConfigError(f"column {c.name!r}: header-less input requires an explicit index")
        positions.append(c.index)
    return positions


def read_header(path: str | Path, delimiter: str = ";", encoding: str = "latin-1", quotechar: str = '"') -> list[str]:
    try:
        with open(path, newline="", encoding=encoding) as fh:
            row = next(csv.reader(fh, delimiter=delimiter, quotechar=quotechar), None)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if row is None:
        raise DataError(f"{path}: file is empty")
    return _clean_header(row)


def _clean_header(row: list[str]) -> list[str]:
    names = [h.strip() for h in row]
    if names and names[0].startswith("﻿"):
        names[0] = names[0][1:]
    return names


def ingest_csv(
    path: str | Path,
    schema: Sequence[ColumnSchema],
    delimiter: str = ";",
    encoding: str = "latin-1",
    header: bool = True,
    quotechar: str = '"',
) -> DataTable:
    """Parse a delimited file into a :class:`DataTable` holding only the declared columns.

    Rows with the wrong field count, or with an unparseable / non-finite
    numeric cell, are skipped and counted in ``table.summary``. Empty cells
    and each column's ``missing_tokens`` become the missing marker.
    """
    if not schema:
        raise ConfigError("empty schema")
    try:
        fh = open(path, newline="", encoding=encoding)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None

    raw: list[list] = [[] for _ in schema]
    missing = [frozenset(c.missing_tokens) | {""} for c in schema]
    numeric = [not c.is_coded for c in schema]
    rows_read = 0
    rejected: list[int] = []
    with fh:
        reader = csv.reader(fh, delimiter=delimiter, quotechar=quotechar)
        head = None
        if header:
            first = next(reader, None)
            if first is None:
                raise DataError(f"{path}: file is empty")
            head = _clean_header(first)
        positions = _resolve_positions(schema, head, path)
        width = len(head) if head is not None else None
        need = max(positions) + 1
        for row in reader:
            if not row:
                continue
            rows_read += 1
            if (width is not None and len(row) != width) or len(row) < need:
                rejected.append(reader.line_num)
                continue
            parsed = []
            ok = True
            for j, pos in enumerate(positions):
                cell = row[pos].strip()
                if cell in missing[j]:
                    parsed.append(math.nan if numeric[j] else None)
                elif numeric[j]:
                    try:
                        v = float(cell)
                    except ValueError:
                        ok = False
                        break
                    if not math.isfinite(v):
                        ok = False
                        break
                    parsed.append(v)
                else:
                    parsed.append(cell)
            if not ok:
                rejected.append(reader.line_num)
                continue
            for j, v in enumerate(parsed):
                raw[j].append(v)

    if rows_read == 0:
        raise DataError(f"{path}: no data rows")
    if len(rejected) > MAX_REJECT_FRACTION * rows_read:
        raise DataError(
            f"{path}: {len(rejected)} of {rows_read} rows malformed (expected {width or need} fields "
            f"with delimiter {delimiter!r}); check the delimiter/encoding settings"
        )
    if rejected:
        log.warning("%s: skipped %d malformed rows of %d", path, len(rejected), rows_read)

    columns = []
    for c, vals in zip(schema, raw):
        if c.is_coded:
            codes, cats = _intern(vals)
            if c.kind is Kind.BINARY and len(cats) > 2:
                raise DataError(f"{path}: binary column {c.name!r} has {len(cats)} distinct values: {list(cats)[:5]}")
            columns.append(Column(c, codes, cats))
        else:
            columns.append(Column(c, np.asarray(vals, dtype=np.float64)))
    summary = IngestSummary(str(path), rows_read, len(rejected), tuple(rejected[:20]))
    return DataTable(columns, summary)


def table_from_values(schema: Sequence[ColumnSchema], data: Mapping[str, Sequence]) -> DataTable:
    """Build a table from in-memory values; ``None`` (or NaN for numeric columns) is missing."""
    columns = []
    for c in schema:
        vals = list(data[c.name])
        if c.is_coded:
            codes, cats = _intern([None if v is None or str(v) in c.missing_tokens else str(v) for v in vals])
            columns.append(Column(c, codes, cats))
        else:
            columns.append(Column(c, np.array([math.nan if v is None else float(v) for v in vals], dtype=np.float64)))
    return DataTable(columns)


def drop_columns(table: DataTable) -> DataTable:
    return table.without(c.name for c in table.with_role(Role.DROP))


# Brazilian federative units by macro-region, in the order reports use.
BRAZIL_UF_REGIONS: dict[str, str] = {
    **dict.fromkeys(["AC", "AP", "AM", "PA", "RO", "RR", "TO"], "North"),
    **dict.fromkeys(["AL", "BA", "CE", "MA", "PB", "PE", "PI", "RN", "SE"], "Northeast"),
    **dict.fromkeys(["DF", "GO", "MT", "MS"], "Central-West"),
    **dict.fromkeys(["ES", "MG", "RJ", "SP"], "Southeast"),
    **dict.fromkeys(["PR", "RS", "SC"], "South"),
}


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[str, ...]
    assignment: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.assignment.setflags(write=False)

    def rows(self, group: str) -> np.ndarray:
        return np.flatnonzero(self.assignment == self.groups.index(group))

    @property
    def sizes(self) -> dict[str, int]:
        counts = np.bincount(self.assignment[self.assignment >= 0], minlength=len(self.groups))
        return {g: int(n) for g, n in zip(self.groups, counts)}

    @property
    def n_unassigned(self) -> int:
        return int(np.count_nonzero(self.assignment < 0))


def partition_by_key(table: DataTable, key_map: Mapping[str, str], key: str | None = None) -> GroupPartition:
    """Assign rows to groups through ``key_map`` (key value -> group name).

    Group order follows the first appearance of each group name among the
    map's values. Rows whose key is missing or unmapped stay unassigned.
    """
    if not key_map:
        raise ConfigError("empty key_map")
    if key is None:
        keys = table.with_role(Role.GROUP_KEY)
        if len(keys) != 1:
            raise ConfigError(f"expected one group_key column, found {[c.name for c in keys]}")
        col = keys[0]
    else:
        col = table[key]
    if not col.schema.is_coded:
        raise ConfigError(f"group key column {col.name!r} must be categorical")

    groups = tuple(dict.fromkeys(key_map.values()))
    lookup = np.full(len(col.categories) + 1, -1, dtype=np.int64)  # last slot: missing code
    for code, value in enumerate(col.categories):
        if value in key_map:
            lookup[code] = groups.index(key_map[value])
    assignment = lookup[col.values]
    partition = GroupPartition(groups, assignment)
    if partition.n_unassigned:
        log.info("%d rows not mapped to any group", partition.n_unassigned)
    return partition


class TaskData(NamedTuple):
    features: DataTable
    labels: np.ndarray
    classes: tuple[str, ...]
    n_excluded: int
    rows: np.ndarray


def extract_task(table: DataTable, label: str, min_classes: int = 2) -> TaskData:
    """Split off ``label`` as the prediction target.

    Rows with a missing label are excluded; ``rows`` maps surviving rows back
    to ``table``. Label codes index ``classes``, the label column's dictionary.
    """
    if label not in table:
        raise ConfigError(f"label column {label!r} not in table")
    col = table[label]
    if not col.schema.is_coded:
        raise ConfigError(f"label column {label!r} must be categorical or binary")
    keep = np.flatnonzero(col.values != MISSING_CODE)
    labels = col.values[keep]
    n_distinct = len(np.unique(labels))
    if n_distinct < min_classes:
        raise DegenerateTaskError(
            f"degenerate task: label {label!r} has {n_distinct} distinct value(s) over {len(keep)} rows"
        )
    features = table.without([label]).take(keep)
    return TaskData(features, labels, col.categories, table.n_rows - len(keep), keep)
