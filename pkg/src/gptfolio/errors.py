"""Exception types shared across the package."""


class GptfolioError(Exception):
    """Base class for all package errors."""


class DataError(GptfolioError):
    """Malformed or insufficient input data."""


class InfeasibleError(GptfolioError):
    """The requested optimization problem has no feasible point."""


class ConvergenceError(GptfolioError):
    """A solver ran out of its iteration budget before converging."""


class BudgetError(GptfolioError):
    """A combinatorial or node budget was exceeded."""


class TranscriptError(GptfolioError):
    """A replay transcript is malformed or exhausted."""


class ChatError(GptfolioError):
    """A live chat-completion call failed."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ConfigError(GptfolioError):
    """A run configuration is invalid or references missing files."""
