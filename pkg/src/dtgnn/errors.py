"""Exception hierarchy shared across the package."""


class DtgnnError(Exception):
    """Base class for all package errors."""


class InputError(DtgnnError, ValueError):
    """An operation rejected its input (shape/dimension/value violation)."""


class ConfigError(DtgnnError, ValueError):
    """A run configuration is inconsistent (bad architecture, divisibility...)."""


class EdgeListParseError(InputError):
    """Malformed edge-list text; carries the offending 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CorruptDeltaError(InputError):
    """A snapshot delta is inconsistent with the base snapshot."""


class ProtocolError(DtgnnError, RuntimeError):
    """A simulated worker violated the exchange protocol (missing chunks...)."""
