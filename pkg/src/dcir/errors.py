"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, `DataError`
exits 2, `NumericalError` exits 3.
"""


class DcirError(Exception):
    """Base class for all package-specific errors."""


class DataError(DcirError):
    """Malformed, missing, or dimensionally inconsistent input data."""


class NumericalError(DcirError):
    """A numerical procedure failed (non-convergence, degenerate system)."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
