"""Exception types shared across the package."""


class GramscoreError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GramscoreError):
    """Invalid configuration: bad rule tables, bad config files, missing rules."""


class RuleParseError(GramscoreError):
    """Syntax or validation error in a rule file, with source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        if line:
            message = f"line {line}, col {col}: {message}" if col else f"line {line}: {message}"
        super().__init__(message)


class FormatError(GramscoreError):
    """Malformed record file (questions, responses, refsets, reports)."""


class CalibrationError(GramscoreError):
    """Reference set cannot be calibrated (empty set, zero normalizer)."""


class ReportError(GramscoreError):
    """Aggregation or correlation cannot be computed from the given data."""
