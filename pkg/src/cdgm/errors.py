"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation problems exit 1,
numerical failures exit 2, and I/O problems exit 3.
"""


class CdgmError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(CdgmError):
    """Invalid input: malformed data, non-conforming arguments, bad config."""


class CapacityError(ValidationError):
    """A request that would enumerate more cells than the exact path supports."""


class NumericalError(CdgmError):
    """A numerical failure: non-convergence, singular information, degenerate rates."""
