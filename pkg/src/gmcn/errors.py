"""Exception types shared across the package."""


class GmcnError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GmcnError, ValueError):
    """Input violates a documented precondition (shape, range, symmetry)."""


class NumericError(GmcnError, ArithmeticError):
    """A computation produced non-finite values."""


class ParseError(GmcnError, ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, path, lineno: int, message: str):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class ConfigError(GmcnError, ValueError):
    """An experiment configuration is invalid or refers to missing files."""
