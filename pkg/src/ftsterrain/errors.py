"""Exception types shared by all modules.

Everything that signals bad input data derives from :class:`DataError`, so the
command line can map it to a single exit code.
"""


class FtsTerrainError(Exception):
    """Base class for all package errors."""


class DataError(FtsTerrainError, ValueError):
    """Input data is malformed or unusable."""


class ParseError(DataError):
    """A CSV file could not be parsed.

    ``line`` is the 1-based line number in the file (the header is line 1),
    ``row`` the 1-based data row.
    """

    def __init__(self, message, line=None, row=None):
        self.line = line
        self.row = row
        if row is not None:
            message = f"row {row} (line {line}): {message}"
        super().__init__(message)


class SchemaError(DataError):
    """Columns do not match the declared sensor schema."""


class OrderingError(DataError):
    """Timestamps decrease somewhere in a stream."""


class FrameError(FtsTerrainError):
    """Operation applied to a stream in the wrong reference frame."""


class AlignmentError(DataError):
    """Streams share no common time span."""


class EmptyWindowError(DataError):
    """Statistics requested for an empty window."""


class ShapeError(DataError):
    """Dimension mismatch between arrays."""


class DegenerateDataError(DataError):
    """Training data lacks the classes a model needs."""


class DivergenceError(FtsTerrainError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} in epoch {epoch}")


class ConfigError(FtsTerrainError, ValueError):
    """Invalid or incomplete configuration."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap."""
