"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DependencyError -> 3, BackendError -> 4, DataError -> 5.
"""


class ChronoRulesError(Exception):
    """Base class for all package errors."""


class DataError(ChronoRulesError):
    """Invalid or unreadable input data."""


class ParseError(DataError):
    """Malformed record in a data file; carries file path and line number."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class ResolutionError(DataError):
    """Name or id does not resolve in a catalog."""


class DegenerateInputError(DataError):
    """Numerically degenerate input (e.g. a zero-norm embedding vector)."""


class ConfigError(ChronoRulesError):
    """Invalid configuration value or unknown configuration key."""


class DependencyError(ChronoRulesError):
    """A stage input artifact is missing; names the producing command."""


class BackendError(ChronoRulesError):
    """LLM backend failure after retries."""


class ReplayDivergenceError(BackendError):
    """A replayed request does not match the recorded transcript."""
