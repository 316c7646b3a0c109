"""Shared exception types.

Every failure that a caller can reasonably handle derives from DomainError,
which the command line maps to exit code 1.
"""


class DomainError(Exception):
    """Base class for expected, recoverable failures."""


class CapacityError(DomainError):
    """A configured size or state cap was exceeded."""
