"""Implicit time stepping for  u_t + div[u^n grad(u^(a-1) Lap u^a)] = 0  with Neumann data.

Each step solves the coupled elliptic pair for (rho, F) given the previous
density f:

    (rho - f)/tau = -div[(rho + tau)^n grad F] + tau F
    -Lap rho^a + tau rho^p = -c(rho) F + tau

with ``c(rho) = rho^(1-eps) / (rho^(a-eps) + tau)`` (general variant) or
``c(rho) = rho^(1-a)`` (the simpler variant for 0 < a < 1).

The flux term is discretized in divergence form on cell faces with the
arithmetic mean of ``rho + tau`` raised to ``n``.  Multiplied by the
quadrature weights the operator is symmetric, and it integrates to zero
exactly, so the discrete mass balance ``int rho - int f = tau^2 int F``
holds up to the Newton tolerance.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solveh_banded
from scipy.optimize import brentq
from scipy.sparse.linalg import cg, spsolve

from .errors import DomainError, NewtonDivergence, PositivityBreach, PositivityError, SolverError
from .grid import (
    POSITIVITY_FLOOR,
    Field,
    Grid,
    face_average_matrices,
    face_difference_matrices,
    face_weights,
    integral,
    lap,
    laplacian_matrix,
)
from .regions import choose_epsilon

log = logging.getLogger(__name__)

GENERAL = "general"
ALPHA_LT_1 = "alpha-lt-1"

#: Time steps at or above this are flagged; estimates only hold for small tau.
LARGE_TAU = 0.1


@dataclass(frozen=True)
class NewtonOptions:
    max_iter: int = 50
    tol: float = 1e-9
    damping_min: float = 2.0**-30


@dataclass(frozen=True)
class SchemeParams:
    alpha: float
    n: float
    tau: float
    epsilon: float = 0.0
    p: float = 3.0
    variant: str = GENERAL
    newton: NewtonOptions = field(default_factory=NewtonOptions)

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.tau < 1:
            raise DomainError(f"tau must lie in (0, 1), got {self.tau}")
        if not 0 <= self.epsilon < 1:
            raise DomainError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.variant == ALPHA_LT_1:
            if not 0 < self.alpha < 1:
                raise DomainError("the alpha-lt-1 variant needs 0 < alpha < 1")
        elif self.variant == GENERAL:
            if self.alpha < 1:
                raise DomainError("the general variant needs alpha >= 1; use variant='alpha-lt-1'")
        else:
            raise DomainError(f"unknown variant {self.variant!r}")
        if not self.p > 2:
            raise DomainError(f"p must exceed max(N/2, 2), got {self.p}")
        if self.tau >= LARGE_TAU:
            warnings.warn(f"tau = {self.tau} is not small; a priori estimates assume tau below an unknown threshold",
                          stacklevel=3)

    def check_dimension(self, N: int) -> None:
        if not self.p > max(N / 2, 2):
            raise DomainError(f"p = {self.p} must exceed max(N/2, 2) = {max(N / 2, 2)}")

    @staticmethod
    def sigma(N: int, at_four: float = 0.5) -> float:
        """Integrability gain: 1 for N < 4, 4/N for N > 4, any value in (0, 1) at N = 4."""
        if N < 4:
            return 1.0
        if N > 4:
            return 4.0 / N
        if not 0 < at_four < 1:
            raise DomainError("at N = 4 sigma must be chosen in (0, 1)")
        return at_four

    def with_tau(self, tau: float) -> "SchemeParams":
        return dataclasses.replace(self, tau=tau)

    @classmethod
    def thin_film(cls, tau: float, n: float = 1.0, N: int = 1, p: float = 3.0, **kw) -> "SchemeParams":
        """alpha = 1, general variant, n in (1/2, 1 + sigma/4), eps from the epsilon rule."""
        upper = 1 + cls.sigma(N) / 4
        if not 0.5 < n < upper:
            raise DomainError(f"thin-film mobility exponent must lie in (1/2, {upper}), got {n}")
        eps = choose_epsilon(1.0, N).epsilon if N >= 2 else 0.0
        return cls(alpha=1.0, n=n, tau=tau, epsilon=eps, p=p, variant=GENERAL, **kw)

    @classmethod
    def qdd(cls, tau: float, p: float = 3.0, **kw) -> "SchemeParams":
        """Quantum drift-diffusion: alpha = 1/2, n = 1, simplified variant."""
        return cls(alpha=0.5, n=1.0, tau=tau, epsilon=0.0, p=p, variant=ALPHA_LT_1, **kw)


@dataclass(frozen=True)
class StepState:
    rho: Field
    flux_potential: Field
    newton_iters: int
    residual_norm: float
    min_rho: float


@dataclass
class Trajectory:
    u0: Field
    params: SchemeParams
    grid: Grid
    T: float
    j: int
    states: list[StepState] = field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None

    @property
    def tau(self) -> float:
        return self.params.tau

    @property
    def times(self) -> np.ndarray:
        """``t_k = k tau`` for k = 0..len(states)."""
        return self.tau * np.arange(len(self.states) + 1)

    def rho(self, k: int) -> Field:
        """``rho_k`` with ``rho_0 = u0``."""
        return self.u0 if k == 0 else self.states[k - 1].rho

    def _interval(self, t: float) -> int:
        if not 0 <= t <= self.tau * len(self.states) * (1 + 1e-12):
            raise DomainError(f"t = {t} outside the computed time range")
        return min(max(int(np.ceil(t / self.tau - 1e-9)), 1), len(self.states))

    def u_bar(self, t: float) -> Field:
        """Piecewise-constant interpolant: ``rho_k`` on ``(t_{k-1}, t_k]``."""
        if t == 0:
            return self.u0
        return self.rho(self._interval(t))

    def u_tilde(self, t: float) -> Field:
        """Piecewise-linear interpolant between consecutive densities."""
        if t == 0:
            return self.u0
        k = self._interval(t)
        s = (t - (k - 1) * self.tau) / self.tau
        return Field(self.grid, (1 - s) * self.rho(k - 1).values + s * self.rho(k).values)

    def masses(self) -> np.ndarray:
        return np.array([integral(self.rho(k).values, self.grid) for k in range(len(self.states) + 1)])


# -- discrete operators ------------------------------------------------------------


class _Operators:
    """Sparse pieces of the flux operator on a grid, cached per grid."""

    _cache: dict = {}

    def __init__(self, grid: Grid):
        self.grid = grid
        self.D = face_difference_matrices(grid)
        self.A = face_average_matrices(grid)
        self.fw = [w.ravel() for w in face_weights(grid)]
        self.w = grid.weights().ravel()
        self.L = laplacian_matrix(grid)

    @classmethod
    def of(cls, grid: Grid) -> "_Operators":
        if grid not in cls._cache:
            cls._cache[grid] = cls(grid)
        return cls._cache[grid]

    def face_coeff(self, rho: np.ndarray, tau: float, n: float) -> list[np.ndarray]:
        return [(A @ rho + tau) ** n for A in self.A]

    def stiffness(self, coeff: list[np.ndarray]) -> sp.csr_matrix:
        """``sum_axes D^T diag(face_w * coeff) D``; equals ``W (-div coeff grad)``."""
        return sum(D.T @ sp.diags(fw * c) @ D for D, fw, c in zip(self.D, self.fw, coeff)).tocsr()

    def neg_div(self, coeff: list[np.ndarray], F: np.ndarray) -> np.ndarray:
        """Nodal ``-div(coeff grad F)``."""
        out = sum(D.T @ (fw * c * (D @ F)) for D, fw, c in zip(self.D, self.fw, coeff))
        return out / self.w


def _coupling(rho: np.ndarray, params: SchemeParams) -> np.ndarray:
    a, e, tau = params.alpha, params.epsilon, params.tau
    if params.variant == ALPHA_LT_1:
        return rho ** (1 - a)
    return rho ** (1 - e) / (rho ** (a - e) + tau)


def _coupling_derivative(rho: np.ndarray, params: SchemeParams) -> np.ndarray:
    a, e, tau = params.alpha, params.epsilon, params.tau
    if params.variant == ALPHA_LT_1:
        return (1 - a) * rho ** (-a)
    d = rho ** (a - e) + tau
    return ((1 - e) * rho ** (-e) * d - (a - e) * rho ** (a - 2 * e)) / (d * d)


def _require_positive(rho: np.ndarray, what: str = "rho") -> None:
    if not np.all(rho > POSITIVITY_FLOOR):
        raise PositivityError(f"{what} must exceed {POSITIVITY_FLOOR:g}; min is {float(np.min(rho)):.3e}")


# -- public operations -----------------------------------------------------------------


def solve_F_given_rho(rho: Field, f_prev: Field, params: SchemeParams, grid: Grid | None = None) -> Field:
    """Solve ``-div[(rho+tau)^n grad F] + tau F = (rho - f_prev)/tau`` with zero normal flux."""
    grid = grid or rho.grid
    r = rho.values.ravel()
    _require_positive(r)
    ops = _Operators.of(grid)
    tau = params.tau
    K = ops.stiffness(ops.face_coeff(r, tau, params.n)) + sp.diags(tau * ops.w)
    b = ops.w * (r - f_prev.values.ravel()) / tau
    if grid.dim == 1:
        ab = np.zeros((2, grid.size))
        ab[0, 1:] = K.diagonal(1)
        ab[1] = K.diagonal()
        F = solveh_banded(ab, b)
    else:
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            F = np.zeros_like(b)
        else:
            F, info = cg(K, b, rtol=1e-12, atol=0.0, maxiter=20 * grid.size)
            if info != 0:
                raise SolverError(f"conjugate gradients stopped with info={info}")
    return Field(grid, F.reshape(grid.shape))


def rho_residual(rho: Field, F: Field, params: SchemeParams, grid: Grid | None = None) -> Field:
    """Nodal ``-Lap rho^a + tau rho^p + c(rho) F - tau``."""
    grid = grid or rho.grid
    r = rho.values
    _require_positive(r)
    a, tau = params.alpha, params.tau
    res = -lap(r**a, grid) + tau * r**params.p + _coupling(r, params) * F.values - tau
    return Field(grid, res)


def explicit_F(rho: Field, params: SchemeParams, grid: Grid | None = None) -> Field:
    """The flux potential that makes :func:`rho_residual` vanish for the given density.

    General variant:
    ``rho^(a-1) Lap rho^a + tau rho^(e-1) Lap rho^a - tau rho^(p+a-1) - tau^2 rho^(p+e-1) + tau rho^(a-1) + tau^2 rho^(e-1)``.
    """
    grid = grid or rho.grid
    r = rho.values
    _require_positive(r)
    a, e, p, tau = params.alpha, params.epsilon, params.p, params.tau
    la = lap(r**a, grid)
    if params.variant == ALPHA_LT_1:
        F = r ** (a - 1) * (la - tau * r**p + tau)
    else:
        F = (
            r ** (a - 1) * la
            + tau * r ** (e - 1) * la
            - tau * r ** (p + a - 1)
            - tau**2 * r ** (p + e - 1)
            + tau * r ** (a - 1)
            + tau**2 * r ** (e - 1)
        )
    return Field(grid, F)


def stacked_residual(rho: np.ndarray, F: np.ndarray, f_prev: np.ndarray, params: SchemeParams, grid: Grid) -> np.ndarray:
    """``[tau(-div(a grad F) + tau F) - (rho - f), -Lap rho^a + tau rho^p + c(rho) F - tau]`` flattened."""
    ops = _Operators.of(grid)
    tau = params.tau
    r = rho.ravel()
    Fv = F.ravel()
    e1 = tau * (ops.neg_div(ops.face_coeff(r, tau, params.n), Fv) + tau * Fv) - (r - f_prev.ravel())
    e2 = -(ops.L @ r**params.alpha) + tau * r**params.p + _coupling(r, params) * Fv - tau
    return np.concatenate([e1, e2])


def jacobian(rho: np.ndarray, F: np.ndarray, params: SchemeParams, grid: Grid) -> sp.csr_matrix:
    """Jacobian of :func:`stacked_residual` with respect to ``[rho, F]``."""
    ops = _Operators.of(grid)
    tau, n, a = params.tau, params.n, params.alpha
    r = rho.ravel()
    Fv = F.ravel()
    m = grid.size
    winv = sp.diags(1.0 / ops.w)
    coeff = ops.face_coeff(r, tau, n)
    d_coeff = [n * (A @ r + tau) ** (n - 1) for A in ops.A]
    J11 = tau * winv @ sum(
        D.T @ sp.diags(fw * dc * (D @ Fv)) @ A for D, A, fw, dc in zip(ops.D, ops.A, ops.fw, d_coeff)
    ) - sp.identity(m)
    J12 = tau * (winv @ ops.stiffness(coeff) + tau * sp.identity(m))
    J21 = -(ops.L @ sp.diags(a * r ** (a - 1))) + sp.diags(
        tau * params.p * r ** (params.p - 1) + _coupling_derivative(r, params) * Fv
    )
    J22 = sp.diags(_coupling(r, params))
    return sp.bmat([[J11, J12], [J21, J22]], format="csc")


def _merit(res: np.ndarray, w2: np.ndarray) -> float:
    return float(np.sqrt(np.sum(w2 * res * res)))


def _newton(rho, F, f, params, grid, history):
    opts = params.newton
    m = grid.size
    w2 = np.tile(_Operators.of(grid).w, 2)
    res = stacked_residual(rho, F, f, params, grid)
    for it in range(opts.max_iter + 1):
        norm_inf = float(np.abs(res).max())
        history.append(norm_inf)
        if norm_inf <= opts.tol:
            return rho, F, it, norm_inf
        if it == opts.max_iter:
            break
        delta = spsolve(jacobian(rho, F, params, grid), -res)
        if not np.all(np.isfinite(delta)):
            raise NewtonDivergence("singular Newton system", rho, F, history)
        merit = _merit(res, w2)
        lam = 1.0
        positive_seen = False
        while lam >= opts.damping_min:
            r_new = rho + lam * delta[:m]
            if np.all(r_new > POSITIVITY_FLOOR):
                positive_seen = True
                F_new = F + lam * delta[m:]
                res_new = stacked_residual(r_new, F_new, f, params, grid)
                if np.all(np.isfinite(res_new)) and _merit(res_new, w2) < merit:
                    break
            lam *= 0.5
        else:
            if not positive_seen:
                raise PositivityBreach("no damping keeps rho positive", rho, F, history)
            raise NewtonDivergence("line search failed to reduce the residual", rho, F, history)
        rho, F, res = r_new, F_new, res_new
    raise NewtonDivergence(f"no convergence in {opts.max_iter} iterations", rho, F, history)


def _alternation_sweep(rho, f, params, grid):
    """One Gauss-Seidel sweep: F from the linear flux problem, then rho from the second equation."""
    F = solve_F_given_rho(Field(grid, rho.reshape(grid.shape)), Field(grid, f.reshape(grid.shape)), params, grid)
    Fv = F.values.ravel()
    ops = _Operators.of(grid)
    a, tau = params.alpha, params.tau
    r = rho.ravel().copy()
    for _ in range(params.newton.max_iter):
        g = -(ops.L @ r**a) + tau * r**params.p + _coupling(r, params) * Fv - tau
        if np.abs(g).max() <= params.newton.tol:
            break
        Jr = -(ops.L @ sp.diags(a * r ** (a - 1))) + sp.diags(
            tau * params.p * r ** (params.p - 1) + _coupling_derivative(r, params) * Fv
        )
        d = spsolve(Jr.tocsc(), -g)
        lam = 1.0
        while lam >= params.newton.damping_min and not np.all(r + lam * d > POSITIVITY_FLOOR):
            lam *= 0.5
        r = r + lam * d
    return r, Fv


def step(f_prev: Field, params: SchemeParams, grid: Grid | None = None) -> StepState:
    """Advance one time step by damped Newton on the stacked (rho, F) system."""
    grid = grid or f_prev.grid
    params.check_dimension(grid.dim)
    f = f_prev.values.ravel()
    _require_positive(f, "f_prev")
    rho0 = f.copy()
    F0 = explicit_F(f_prev, params, grid).values.ravel()
    history: list[float] = []
    try:
        rho, F, iters, norm = _newton(rho0, F0, f, params, grid, history)
    except NewtonDivergence as first:
        log.info("Newton failed (%s); retrying after an alternation sweep", first)
        try:
            r1, F1 = _alternation_sweep(first.rho if first.rho is not None else rho0, f, params, grid)
            if not np.all(r1 > POSITIVITY_FLOOR):
                raise first
            rho, F, iters, norm = _newton(r1, F1, f, params, grid, history)
        except (NewtonDivergence, PositivityError, SolverError) as second:
            raise type(first)(f"{first}; fallback: {second}", first.rho, first.flux_potential, history) from second
    return StepState(
        rho=Field(grid, rho.reshape(grid.shape)),
        flux_potential=Field(grid, F.reshape(grid.shape)),
        newton_iters=len(history) - 1,
        residual_norm=norm,
        min_rho=float(rho.min()),
    )


def run(u0: Field, T: float, j: int, params: SchemeParams, grid: Grid | None = None) -> Trajectory:
    """Take ``j`` steps of size ``T/j`` from ``u0``; the step in ``params`` is replaced by ``T/j``.

    A step failure ends the run early and marks the trajectory failed.
    """
    grid = grid or u0.grid
    if j < 1 or not T > 0:
        raise DomainError("need T > 0 and j >= 1")
    _require_positive(u0.values, "u0")
    tau = T / j
    if params.tau != tau:
        params = params.with_tau(tau)
    traj = Trajectory(u0=u0, params=params, grid=grid, T=T, j=j)
    f = u0
    for k in range(1, j + 1):
        try:
            state = step(f, params, grid)
        except NewtonDivergence as exc:
            traj.failed = True
            traj.error = f"step {k}: {exc}"
            log.warning("run stopped at step %d: %s", k, exc)
            break
        traj.states.append(state)
        f = state.rho
    return traj


def constant_state_root(c0: float, params: SchemeParams) -> float:
    """Spatially constant solution of one step from ``f = c0``.

    Both equations reduce to ``rho - c0 = tau^3 (1 - rho^p) / c(rho)``.
    """
    tau = params.tau

    def g(r):
        return r - c0 - tau**3 * (1 - r**params.p) / _coupling(np.array(r), params)

    lo, hi = min(c0, 1.0), max(c0, 1.0)
    if lo == hi:
        return float(c0)
    return float(brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
