"""Exception hierarchy.

Data problems derive from :class:`DataError` and numeric breakdowns from
:class:`NumericError`; the CLI maps those two families onto exit codes 3 and 4.
"""


class Spo2Error(Exception):
    """Base class for all package errors."""


class DataError(Spo2Error, ValueError):
    pass


class NumericError(Spo2Error, ArithmeticError):
    pass


class InvalidSpecError(DataError):
    """Filter, window or resampling parameters are out of range."""


class InsufficientDataError(DataError):
    pass


class ShapeError(DataError):
    pass


class MissingLabelError(DataError):
    pass


class InvalidConfigError(DataError):
    pass


class InsufficientSubjectsError(DataError):
    pass


class SessionParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(DataError):
    """Unreadable checkpoint, unknown version, or config mismatch."""


class DegenerateWindowError(NumericError):
    pass


class DegenerateFitError(NumericError):
    pass


class StaleGraphError(NumericError, RuntimeError):
    """Backward called without a matching forward cache."""
