"""Shared exception types, mapped to CLI exit codes by the command layer."""


class ConfigError(ValueError):
    """Invalid configuration: bad flag, malformed config file, out-of-range parameter."""


class DataError(ValueError):
    """Invalid data: missing file, schema mismatch, unparseable cell, width mismatch."""


class NumericError(RuntimeError):
    """Numeric failure during fitting (non-finite loss or parameters)."""
