"""Exception types shared across the package."""


class BayensError(Exception):
    """Base class for all package errors."""


class ParseError(BayensError):
    """Malformed dataset input; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyDatasetError(BayensError):
    """Input contained no samples."""


class ConfigError(BayensError):
    """Invalid or inconsistent experiment configuration."""


class QuadratureError(BayensError):
    """Numerical integration failed to converge; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
