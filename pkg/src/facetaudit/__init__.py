"""Pre-training bias audit and cross-group random forest evaluation for tabular data."""

__version__ = "0.1.0"
