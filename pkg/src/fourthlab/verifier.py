"""Numerical evaluation of the inequality functionals on grid fields.

All integrals use the grid's mirrored-ghost operators and trapezoidal
quadrature, so identities that rely on integration by parts hold up to
O(h^2) discretization error on smooth Neumann fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExhausted, DegenerateError, DomainError
from .grid import Field, Grid, check_power, grad, hessian, integral, lap, power
from .regions import ExponentTriple, best_region, hessian_weighted_coefficients

#: Denominators below this make a Rayleigh ratio meaningless.
DENOMINATOR_FLOOR = 1e-10


# -- random fields ---------------------------------------------------------------


def cosine_modes(grid: Grid, count: int) -> np.ndarray:
    """The ``count`` lowest nonconstant Neumann cosine modes, shape ``(count, *grid.shape)``."""
    if grid.dim == 1:
        (L,) = grid.extent
        (x,) = grid.coords()
        return np.array([np.cos(k * np.pi * x / L) for k in range(1, count + 1)])
    Lx, Ly = grid.extent
    x, y = grid.coords()
    kmax = int(np.ceil(np.sqrt(count))) + 2
    pairs = [(i, j) for i in range(kmax + 1) for j in range(kmax + 1) if (i, j) != (0, 0)]
    pairs.sort(key=lambda p: ((p[0] / Lx) ** 2 + (p[1] / Ly) ** 2, p))
    return np.array([np.cos(i * np.pi * x / Lx) * np.cos(j * np.pi * y / Ly) for i, j in pairs[:count]])


def random_field(grid: Grid, rng: np.random.Generator, modes: int = 8, amplitude: float = 0.7) -> Field:
    """``exp(sum a_k phi_k)`` with ``a_k ~ U[-amplitude, amplitude]``; positive and mirror-symmetric."""
    phi = cosine_modes(grid, modes)
    a = rng.uniform(-amplitude, amplitude, size=modes)
    return Field(grid, np.exp(np.tensordot(a, phi, axes=1)))


# -- functionals -------------------------------------------------------------------


def _positive(u: Field, *exponents: float) -> np.ndarray:
    for s in exponents:
        check_power(u.values, s)
    return u.values


def functional_I(u: Field, alpha: float, beta: float, gamma: float) -> float:
    """``int u^(2g-a-b) Lap(u^a) Lap(u^b)``."""
    v = _positive(u, 2 * gamma - alpha - beta, alpha, beta)
    g = u.grid
    return integral(power(v, 2 * gamma - alpha - beta) * lap(power(v, alpha), g) * lap(power(v, beta), g), g)


def functional_J(u: Field, alpha: float, gamma: float) -> float:
    """``int u^(2g-a) Lap(ln u) Lap(u^a)``."""
    v = _positive(u, 2 * gamma - alpha, alpha, 0.0)
    g = u.grid
    return integral(power(v, 2 * gamma - alpha) * lap(np.log(v), g) * lap(power(v, alpha), g), g)


def laplacian_energy(u: Field, gamma: float) -> float:
    """``int (Lap u^g)^2``."""
    _positive(u, gamma)
    return integral(lap(power(u.values, gamma), u.grid) ** 2, u.grid)


def _denominator(u: Field, gamma: float) -> float:
    d = laplacian_energy(u, gamma)
    if d <= DENOMINATOR_FLOOR:
        raise DegenerateError(f"int (Lap u^gamma)^2 = {d:.3e} is below {DENOMINATOR_FLOOR:g}")
    return d


def rayleigh_ratio(u: Field, t: ExponentTriple) -> float:
    return functional_I(u, t.alpha, t.beta, t.gamma) / _denominator(u, t.gamma)


def log_ratio(u: Field, alpha: float, gamma: float) -> float:
    return functional_J(u, alpha, gamma) / _denominator(u, gamma)


def _grad_sq(a: np.ndarray, grid: Grid) -> np.ndarray:
    return sum(c * c for c in grad(a, grid))


def identity_residual(u: Field, t: ExponentTriple) -> float:
    """Defect of the exact rewriting of I(u) in terms of v = u^(g/2), w = u^g.

    (g^2/ab) I = int (Lap w)^2 + 16(a-g)(b-g)/g^2 int |grad v|^4 + 4(a+b-2g)/g int |grad v|^2 Lap w

    Returned relative to ``int (Lap w)^2``.
    """
    a, b, g = t.alpha, t.beta, t.gamma
    den = _denominator(u, g)
    vals = _positive(u, g / 2)
    grid = u.grid
    w = power(vals, g)
    lw = lap(w, grid)
    gv = _grad_sq(power(vals, g / 2), grid)
    rhs = den
    if (a - g) * (b - g) != 0:
        rhs += 16 * (a - g) * (b - g) / g**2 * integral(gv * gv, grid)
    if a + b - 2 * g != 0:
        rhs += 4 * (a + b - 2 * g) / g * integral(gv * lw, grid)
    lhs = g * g / (a * b) * functional_I(u, a, b, g)
    return abs(lhs - rhs) / den


def gradient_ibp_residual(u: Field, alpha: float) -> float:
    """Relative defect of 4 int |grad v|^4 = 2 int grad v . (D^2 w grad v) + int |grad v|^2 Lap w, v = u^(a/2), w = u^a."""
    vals = _positive(u, alpha / 2)
    grid = u.grid
    v = power(vals, alpha / 2)
    w = power(vals, alpha)
    gv = grad(v, grid)
    H = hessian(w, grid)
    gsq = sum(c * c for c in gv)
    quad = sum(gv[i] * H[i][j] * gv[j] for i in range(grid.dim) for j in range(grid.dim))
    lhs = 4 * integral(gsq * gsq, grid)
    rhs = 2 * integral(quad, grid) + integral(gsq * lap(w, grid), grid)
    scale = abs(lhs) + abs(rhs)
    return 0.0 if scale == 0 else abs(lhs - rhs) / scale


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    passed: bool

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.passed))


def gradient_quartic_bound(u: Field, alpha: float, tol: float = 1e-2) -> BoundCheck:
    """``int |grad u^(a/2)|^4 <= (9/16) int (Lap u^a)^2`` with relative slack ``tol``."""
    vals = _positive(u, alpha / 2)
    gv = _grad_sq(power(vals, alpha / 2), u.grid)
    lhs = integral(gv * gv, u.grid)
    rhs = 9 / 16 * integral(lap(power(vals, alpha), u.grid) ** 2, u.grid)
    return BoundCheck(lhs, rhs, lhs <= rhs * (1 + tol))


def weighted_hessian_bound(u: Field, alpha: float, beta: float, tol: float = 1e-2) -> BoundCheck:
    """``int u^(2a-2b)|D^2 u^b|^2 >= A int |D^2 u^a|^2 + B int (Lap u^a)^2 + C int |grad u^(a/2)|^4``.

    The dimension N in (A, B, C) is the grid dimension.
    """
    grid = u.grid
    vals = _positive(u, 2 * alpha - 2 * beta, alpha / 2, beta)
    A, B, C = hessian_weighted_coefficients(alpha, beta, grid.dim)
    d = grid.dim
    Hb = hessian(power(vals, beta), grid)
    Ha = hessian(power(vals, alpha), grid)
    hb2 = sum(Hb[i][j] ** 2 for i in range(d) for j in range(d))
    ha2 = sum(Ha[i][j] ** 2 for i in range(d) for j in range(d))
    gv = _grad_sq(power(vals, alpha / 2), grid)
    lhs = integral(power(vals, 2 * alpha - 2 * beta) * hb2, grid)
    rhs = A * integral(ha2, grid) + B * integral(lap(power(vals, alpha), grid) ** 2, grid) + C * integral(gv * gv, grid)
    return BoundCheck(lhs, rhs, lhs >= rhs - tol * abs(rhs))


# -- Rayleigh-quotient minimisation -----------------------------------------------------


@dataclass
class RayleighReport:
    ratio_min: float
    argmin_field: Field = field(repr=False)
    samples: int
    c_certified: Optional[float]
    margin: float
    grid_spacing: float
    restarts: int = 0
    converged_restarts: int = 0


class _RatioModel:
    """Ratio and its gradient with respect to mode coefficients of v = log u."""

    def __init__(self, t: ExponentTriple, grid: Grid, modes: np.ndarray):
        self.t = t
        self.grid = grid
        self.phi = modes.reshape(modes.shape[0], -1)
        self.w = grid.weights().ravel()
        self.shape = grid.shape

    def _lap(self, a):
        return lap(a.reshape(self.shape), self.grid).ravel()

    def field(self, c):
        return np.exp(c @ self.phi)

    def value(self, c):
        a, b, g = self.t.alpha, self.t.beta, self.t.gamma
        u = self.field(c)
        num = np.dot(self.w, u ** (2 * g - a - b) * self._lap(u**a) * self._lap(u**b))
        den = np.dot(self.w, self._lap(u**g) ** 2)
        return num / den, den

    def value_and_grad(self, c):
        a, b, g = self.t.alpha, self.t.beta, self.t.gamma
        m = 2 * g - a - b
        u = self.field(c)
        um = u**m
        La, Lb, Lg = self._lap(u**a), self._lap(u**b), self._lap(u**g)
        num = np.dot(self.w, um * La * Lb)
        den = np.dot(self.w, Lg * Lg)
        r = num / den
        # W L is symmetric, so L^T (W z) = W L z
        dnum = m * um * La * Lb + a * u**a * self._lap(um * Lb) + b * u**b * self._lap(um * La)
        dden = 2 * g * u**g * self._lap(Lg)
        dv = self.w * (dnum - r * dden) / den
        return r, den, self.phi @ dv


def minimize_ratio(
    t: ExponentTriple,
    grid: Grid,
    budget: int = 500,
    restarts: int = 20,
    seed: int = 0,
    modes: int = 8,
    amplitude: float = 0.7,
    max_coefficient: float = 2.0,
    raise_on_budget: bool = False,
) -> RayleighReport:
    """Smallest Rayleigh ratio found by projected gradient descent over positive fields.

    Fields are ``u = exp(v)`` with ``v`` restricted to the span of the lowest
    ``modes`` Neumann cosine modes, which keeps them positive, mean-free in
    ``v`` (the ratio is scale invariant) and resolved on the grid.  Each of
    ``restarts`` random starts takes at most ``budget`` steps along the
    max-normalised negative gradient, projected onto the coefficient box
    ``|c_k| <= max_coefficient``.  The step is halved until the ratio
    decreases; it starts from 1.0 and afterwards from twice the last
    accepted step (capped at 1.0).
    """
    if budget < 1 or restarts < 1:
        raise DomainError("budget and restarts must be positive")
    if t.dim != grid.dim:
        t = ExponentTriple(t.alpha, t.beta, t.gamma, grid.dim)
    verdict = best_region(t)
    c_cert = verdict.constant if verdict.certified else None
    model = _RatioModel(t, grid, cosine_modes(grid, modes))
    rng = np.random.default_rng(seed)
    best_r, best_c = np.inf, None
    samples = 0
    converged = 0
    for _ in range(restarts):
        c = rng.uniform(-amplitude, amplitude, size=modes)
        r, den, gr = model.value_and_grad(c)
        step = 1.0
        samples += 1
        done = False
        for _ in range(budget):
            gmax = np.abs(gr).max()
            if not np.isfinite(r) or gmax == 0:
                done = True
                break
            d = -gr / gmax
            step = min(1.0, 2.0 * step)
            while step > 1e-12:
                trial = np.clip(c + step * d, -max_coefficient, max_coefficient)
                rt, dt = model.value(trial)
                samples += 1
                if np.isfinite(rt) and dt > DENOMINATOR_FLOOR and rt < r and not np.array_equal(trial, c):
                    break
                step *= 0.5
            else:
                done = True
                break
            c = trial
            r, den, gr = model.value_and_grad(c)
            samples += 1
        converged += done
        if np.isfinite(r) and den > DENOMINATOR_FLOOR and r < best_r:
            best_r, best_c = r, c.copy()
    if best_c is None:
        raise DegenerateError("every restart collapsed to a constant field")
    u = Field(grid, model.field(best_c).reshape(grid.shape))
    margin = best_r - c_cert if c_cert is not None else np.nan
    report = RayleighReport(best_r, u, samples, c_cert, margin, grid.h, restarts, converged)
    if raise_on_budget and converged < restarts:
        raise BudgetExhausted(f"{restarts - converged} restarts hit the iteration budget", report)
    return report
