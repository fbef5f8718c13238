"""Exception and warning types shared across the toolkit."""


class FlimError(Exception):
    """Base class for all toolkit-specific errors."""


class LowSignalError(FlimError):
    """Raised when there are too few photons to run an operation."""


class UndefinedLifetimeError(FlimError):
    """Raised when a closed-form lifetime does not exist for the input."""


class TrainingFailureError(FlimError):
    """Raised when estimator training diverges."""


class RankDeficiencyError(FlimError):
    """Raised when a linear inversion is rank deficient and unregularized."""


class FileFormatError(FlimError):
    """Raised on malformed container files; carries a byte offset when known.

    Attributes:
        offset: byte position of the problem, or None if not applicable.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FlimWarning(UserWarning):
    """Base class for toolkit warnings."""


class TruncationWarning(FlimWarning):
    """IRF or decay support does not fit inside the time grid."""


class DegenerateParameterWarning(FlimWarning):
    """A fitted parameter hit a guard rail and was clamped."""
