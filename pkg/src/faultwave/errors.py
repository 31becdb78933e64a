"""Exception hierarchy shared across faultwave modules.

The CLI maps each family to a process exit code: configuration problems
exit 1, I/O and file-format problems exit 2, numeric failures exit 3.
"""


class FaultwaveError(Exception):
    """Base class for all library errors."""


class ConfigurationError(FaultwaveError, ValueError):
    """Invalid or inconsistent configuration (exit code 1)."""


class DomainError(FaultwaveError, ValueError):
    """Argument outside an operation's mathematical domain (exit code 1)."""


class FormatError(FaultwaveError, ValueError):
    """A persisted file failed to parse (exit code 2).

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(FaultwaveError, ArithmeticError):
    """Non-finite values appeared during computation (exit code 3)."""
