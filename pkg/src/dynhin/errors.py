"""Exception hierarchy shared across the package.

DataError maps to CLI exit code 3, TrainingDivergedError to exit code 4.
Shape and argument misuse raise plain ValueError.
"""


class DynhinError(Exception):
    """Base class for package-specific errors."""


class DataError(DynhinError):
    """Malformed or inconsistent input data (schema, edge, label, cache files)."""


class TrainingDivergedError(DynhinError):
    """Loss became non-finite during optimization."""
