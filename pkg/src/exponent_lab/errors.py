"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: validation/resource problems exit 2,
numerical failures exit 3, truncation contamination exits 4.
"""


class ExponentLabError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(ExponentLabError):
    """Bad input: malformed network, invalid parameter, empty set, ..."""

    exit_code = 2


class ResourceError(ExponentLabError):
    """A configurable resource budget (vertex cap, retry cap) was exceeded."""

    exit_code = 2


class NumericalError(ExponentLabError):
    """An iterative solve failed to converge or a post-condition failed.

    Carries the final relative residual when available.
    """

    exit_code = 3

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TruncationError(ExponentLabError):
    """A query touched the truncation boundary and would return a biased
    value.  The caller must enlarge the network."""

    exit_code = 4


class EstimationError(ExponentLabError):
    """Not enough usable scales survived the censoring filter."""

    exit_code = 2
