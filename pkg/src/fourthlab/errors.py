"""Exception types shared across the package."""

from __future__ import annotations


class FourthLabError(Exception):
    """Base class for all package errors."""


class DomainError(FourthLabError, ValueError):
    """Parameters fall outside the domain where an operation is defined."""


class PositivityError(FourthLabError, ValueError):
    """A field value is at or below the positivity floor where a power needs it positive."""


class DegenerateError(FourthLabError, ValueError):
    """A ratio was requested but its denominator is numerically zero."""


class SolverError(FourthLabError, RuntimeError):
    """A linear solve failed to reach its tolerance."""


class NewtonDivergence(FourthLabError, RuntimeError):
    """Damped Newton failed to converge within its iteration budget.

    Carries the last iterate and the residual history so callers can inspect
    the failure.
    """

    def __init__(self, message, rho=None, flux_potential=None, history=None):
        super().__init__(message)
        self.rho = rho
        self.flux_potential = flux_potential
        self.history = list(history or [])


class PositivityBreach(NewtonDivergence):
    """No damping factor kept the density iterate strictly positive."""


class BudgetExhausted(FourthLabError, RuntimeError):
    """An optimizer ran out of iterations; ``report`` holds the best-so-far result."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
