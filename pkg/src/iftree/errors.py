"""Exception hierarchy shared across the package."""


class IftreeError(Exception):
    """Base class for all package errors."""


class UsageError(IftreeError):
    """Invalid configuration or argument combination (CLI exit code 1)."""


class DataError(IftreeError):
    """Invalid input data (CLI exit code 2).

    Carries the offending row/column where that is known so messages can
    point at the exact cell.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        if row is not None or column is not None:
            where = ", ".join(
                s for s in (f"row {row}" if row is not None else "",
                            f"column {column!r}" if column is not None else "") if s
            )
            message = f"{message} ({where})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericError(IftreeError):
    """Numerical failure during model fitting (CLI exit code 3)."""


class RankDeficientError(NumericError):
    """Design matrix is rank deficient; the candidate model cannot be fit."""
