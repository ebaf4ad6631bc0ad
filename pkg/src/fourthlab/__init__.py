"""Functional inequalities and an implicit scheme for fourth-order degenerate parabolic equations."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    BudgetExhausted,
    DegenerateError,
    DomainError,
    FourthLabError,
    NewtonDivergence,
    PositivityBreach,
    PositivityError,
    SolverError,
)
from .grid import Field, Grid, gradient_sq, hessian_sq, integrate, laplacian_neumann, power_field
from .regions import (
    ExponentTriple,
    RegionVerdict,
    best_region,
    check_diagonal_family,
    check_gamma_large,
    check_gamma_small,
    check_log_case,
    check_midpoint,
    check_n1,
    choose_epsilon,
    hessian_weighted_coefficients,
)
from .scheme import SchemeParams, StepState, Trajectory, explicit_F, rho_residual, run, solve_F_given_rho, step
