"""Exception hierarchy shared by all modules.

Exit-code mapping for the CLI: ConfigurationError / InputError / UsageError
mean the caller supplied something invalid (exit 2); NumericError and
IntegrityError mean the run itself went wrong (exit 1).
"""


class AirstreamsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AirstreamsError):
    """A config value or shape combination is structurally invalid."""


class InputError(AirstreamsError):
    """Runtime data (labels, files, arrays) violates a precondition."""


class UsageError(AirstreamsError):
    """An API was called in an unsupported way (e.g. backward on a vector)."""


class NumericError(AirstreamsError):
    """Non-finite values or numeric breakdown during computation."""


class IntegrityError(AirstreamsError):
    """On-disk artifacts are missing or inconsistent with their manifest."""
