"""Exception and warning types shared across the package."""

from __future__ import annotations


class ConvergenceError(RuntimeError):
    """Raised when an adaptive refinement loop exhausts its budget.

    Carries the last two estimates so callers can judge how far apart
    they were.
    """

    def __init__(self, message, last=None, previous=None):
        super().__init__(message)
        self.last = last
        self.previous = previous


class NumericalRangeError(ArithmeticError):
    """Raised when a matrix element or determinant leaves the
    representable range despite exponent folding. The message names the
    offending node so sweeps can report where they died."""


class FitQualityWarning(UserWarning):
    """Non-fatal warning for least-squares fits whose residuals do not
    look like noise (systematic structure, non-monotone convergence)."""
