"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the requested function."""


class ConvergenceError(ArithmeticError):
    """A series or iterative scheme did not reach its tolerance."""


class SingularGeometryError(DomainError):
    """The pointing geometry makes the linearised footprint undefined."""


class DegenerateTruncationError(ArithmeticError):
    """The selection threshold leaves (numerically) no probability mass."""
