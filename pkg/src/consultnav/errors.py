"""Exception types shared across the package."""


class ConsultNavError(Exception):
    """Base class for all package-specific errors."""


class ParseError(ConsultNavError):
    """A file could not be parsed (malformed line, bad magic, truncation)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ConsultNavError):
    """Parsed data violates a domain invariant."""


class ConfigError(ConsultNavError):
    """A configuration value or combination is invalid."""


class DataError(ConsultNavError):
    """A dataset is unusable for the requested operation (e.g. yields no pairs)."""


class UnsupportedVersionError(ConsultNavError):
    """A persisted artifact declares a format version this build cannot read."""


class UndefinedMetricError(ConsultNavError):
    """A metric's denominator is empty or zero; the value does not exist."""


class TransportError(ConsultNavError):
    """A remote core-model call failed at the HTTP level."""


class SessionExpiredError(ConsultNavError):
    """The session existed but was evicted for idleness."""


class UnknownSessionError(ConsultNavError):
    """No session with the given id was ever registered."""
