"""Exception hierarchy.

Errors fall in three families that the CLI maps onto exit codes:
configuration problems (2), data problems (3) and numerical failures (4).
"""


class PtsneError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PtsneError, ValueError):
    """Invalid parameters or parameter combinations."""


class DataError(PtsneError, ValueError):
    """Input data that cannot be used."""


class ParseError(DataError):
    pass


class AsymmetryError(DataError):
    pass


class RankError(DataError):
    pass


class ShapeError(DataError):
    pass


class NormalizationError(DataError):
    pass


class GridError(ConfigError):
    pass


class OutOfGridError(DataError):
    pass


class SizeCapError(ConfigError):
    pass


class NumericalError(PtsneError, ArithmeticError):
    """A numerical procedure failed to produce a usable value."""


class DegenerateRowError(NumericalError):
    """All candidate distances are equal, so no precision reaches the target."""


class NoConvergenceError(NumericalError):
    pass


class DegenerateSpanError(NumericalError):
    """All mapped positions coincide; the learning rate would be zero."""


class DivergenceError(NumericalError):
    pass


class WorkerError(PtsneError):
    """Wraps an exception raised inside an orchestrator worker."""

    def __init__(self, thread: int, error: Exception):
        super().__init__(f"thread {thread}: {type(error).__name__}: {error}")
        self.thread = thread
        self.error = error
