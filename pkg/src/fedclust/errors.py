"""Exception hierarchy shared by every fedclust module."""

from __future__ import annotations


class FedClustError(Exception):
    """Base class for all library errors."""


class ConfigError(FedClustError, ValueError):
    """A configuration value is out of range or inconsistent."""


class DimensionError(FedClustError, ValueError):
    """Parameter vector and data disagree on dimension."""


class EmptyDataError(FedClustError, ValueError):
    """An operation received an empty dataset or split."""


class DivergenceError(FedClustError, ArithmeticError):
    """Training produced a non-finite or exploding loss."""


class TrimError(FedClustError, ValueError):
    """Trimmed mean would retain no values."""


class NoClusterError(FedClustError):
    """Size filtering dissolved every cluster."""


class DataFormatError(FedClustError, ValueError):
    """A federated dataset file on disk is malformed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class NotSyntheticError(FedClustError):
    """Resampling requested on data whose generating distribution is unknown."""
