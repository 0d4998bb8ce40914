"""Exception hierarchy shared across the package.

Two branches matter for the CLI exit-code contract: InputError maps to
exit code 2 (bad files, bad flags), DomainError maps to exit code 3
(semantically invalid configurations or simulations).
"""


class OlsrTuneError(Exception):
    """Base class for all package errors."""


class InputError(OlsrTuneError):
    """Unusable input: missing files, malformed trace rows, bad flag values."""


class TraceParseError(InputError):
    """A mobility-trace row could not be parsed; carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TraceValidationError(InputError):
    """A parsed trace violates a structural invariant."""


class DomainError(OlsrTuneError):
    """Semantically invalid domain object or operation."""


class ConfigurationError(DomainError):
    """Invalid protocol/scenario/GA configuration values."""
