"""Exception hierarchy shared by the whole package.

CLI exit-code mapping: everything derived from :class:`InputError` exits
with code 2 (bad input or data), :class:`TrainingError` exits with code 3
(numerical failure). Library callers just catch the specific classes.
"""

from __future__ import annotations


class VoxgridError(Exception):
    """Base class for all package errors."""


class InputError(VoxgridError, ValueError):
    """Bad arguments, bad data, or bad configuration supplied by the caller."""


class ArgumentError(InputError):
    """A function argument violates a documented precondition."""


class DataError(InputError):
    """A structure, atom, or label is invalid (e.g. unknown element)."""


class ConfigError(InputError):
    """A run configuration is inconsistent (e.g. density mode without maps)."""


class FormatError(InputError):
    """A binary file does not conform to its format."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ManifestError(InputError):
    """A manifest file is malformed; carries the offending record index."""

    def __init__(self, message: str, record: int | None = None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record


class ShapeError(InputError):
    """Tensor shapes are incompatible with a layer."""


class MetricError(InputError):
    """A metric is undefined for the given inputs (e.g. constant target)."""


class TrainingError(VoxgridError):
    """Training failed numerically; carries the epoch where it happened."""

    def __init__(self, message: str, epoch: int | None = None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch
