"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class carries the category it
reports under (``usage``, ``data`` or ``numerical``).
"""

from __future__ import annotations


class TriportraitError(Exception):
    category = "data"


class StructuralError(TriportraitError, ValueError):
    """Array shapes or dimensions do not compose."""


class ParameterError(TriportraitError, ValueError):
    """A scalar parameter is outside its valid range."""

    category = "usage"


class FormatError(TriportraitError):
    """A binary file could not be decoded.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int = 0, path: str | None = None):
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at byte {offset})")


class NumericalError(TriportraitError, ArithmeticError):
    category = "numerical"


class EmptyDataError(TriportraitError, ValueError):
    """An aggregate was requested over no data."""


class DegenerateVarianceError(TriportraitError, ValueError):
    """Too few entries to compute a sample standard deviation."""
