"""Exception hierarchy. Each family maps to a distinct CLI exit code."""

from __future__ import annotations


class FacetAuditError(Exception):
    exit_code = 1


class ConfigError(FacetAuditError):
    exit_code = 2


class DataError(FacetAuditError):
    exit_code = 3


class GeometryError(FacetAuditError):
    exit_code = 4


class NoFacetMembers(DataError):
    """Raised when a facet side (or both) has no rows, leaving a metric undefined."""


class DegenerateTaskError(DataError):
    """Raised when a label column carries fewer than two distinct classes."""


class SchemaMismatchError(DataError):
    """Raised when an inference table does not match a model's training schema."""
