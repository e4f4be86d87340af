"""Exception hierarchy; each class maps to one CLI exit code."""


class VolcastError(Exception):
    exit_code = 1


class ConfigError(VolcastError, ValueError):
    """Invalid configuration or usage."""

    exit_code = 1


class DataError(VolcastError, ValueError):
    """Unreadable, malformed, or insufficient input data."""

    exit_code = 2


class NumericalError(VolcastError, ArithmeticError):
    """Non-finite values, diverged training, or failed model fits."""

    exit_code = 3


class StageError(VolcastError):
    """A pipeline stage failed for one stock; wraps the underlying error."""

    def __init__(self, stage, ticker, cause):
        self.stage = stage
        self.ticker = ticker
        self.cause = cause
        where = f" [{ticker}]" if ticker else ""
        super().__init__(f"stage '{stage}'{where} failed: {cause}")

    @property
    def exit_code(self):
        return getattr(self.cause, "exit_code", 3)
