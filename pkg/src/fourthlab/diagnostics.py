"""Entropy, potentials and a priori quantities computed from scheme output."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import DomainError
from .grid import POSITIVITY_FLOOR, Field, Grid, check_power, dirichlet_form, face_diffs, face_weights, grad, integral, lap, power
from .scheme import ALPHA_LT_1, SchemeParams, Trajectory

#: Exponents this close to 1 use the logarithmic branch.
UNIT_SNAP = 1e-9


def _snap(n: float) -> float:
    return 1.0 if abs(n - 1.0) <= UNIT_SNAP else n


def entropy_density(s: np.ndarray, n: float) -> np.ndarray:
    """G(s) = s (n > 1), s^(2-n) (n < 1), s ln s - s (n = 1)."""
    n = _snap(n)
    s = np.asarray(s, dtype=float)
    if n > 1:
        return s.copy()
    if n < 1:
        return s ** (2 - n)
    safe = np.where(s > POSITIVITY_FLOOR, s, 1.0)
    return np.where(s > POSITIVITY_FLOOR, s * np.log(safe), 0.0) - s


def entropy_G(u: Field, n: float) -> float:
    """``int G(u)``."""
    return integral(entropy_density(u.values, n), u.grid)


def potential_K(r, n: float, tau: float):
    """``int_1^r (s + tau)^(-n) ds`` in closed form."""
    n = _snap(n)
    r = np.asarray(r, dtype=float)
    if n == 1:
        out = np.log((r + tau) / (1 + tau))
    else:
        out = ((r + tau) ** (1 - n) - (1 + tau) ** (1 - n)) / (1 - n)
    return out if out.ndim else float(out)


def _power_potential(r: float, exponent: float, n: float, tau: float) -> float:
    # s = e^x turns the integrand into exponent * e^(exponent x) / (e^x + tau)^n,
    # smooth on the whole line and integrable at -inf
    if r == 1:
        return 0.0
    upper = np.log(r) if r > 0 else -np.inf

    def integrand(x):
        return exponent * np.exp(exponent * x) / (np.exp(x) + tau) ** n

    lo, hi = (0.0, upper) if upper > 0 else (upper, 0.0)
    val, _ = quad(integrand, lo, hi, epsabs=1e-10, epsrel=1e-10, limit=200)
    return val if upper > 0 else -val


def _potential(r, exponent: float, n: float, tau: float):
    if exponent <= 0:
        raise DomainError("exponent must be positive")
    if np.any(np.asarray(r) < 0):
        raise DomainError("potentials are defined for r >= 0")
    if n == 0:
        out = np.asarray(r, dtype=float) ** exponent - 1.0
        return out if out.ndim else float(out)
    if exponent == 1:
        return potential_K(r, n, tau)
    out = np.vectorize(lambda x: _power_potential(float(x), exponent, n, tau), otypes=[float])(r)
    return out if out.ndim else float(out)


def potential_L(r, alpha: float, n: float, tau: float):
    """``int_1^r alpha s^(alpha-1) (s + tau)^(-n) ds``."""
    return _potential(r, alpha, n, tau)


def potential_M(r, beta: float, n: float, tau: float):
    """``int_1^r beta s^(beta-1) (s + tau)^(-n) ds``; bounded by beta/(n-beta) for r > 1 when beta < n."""
    return _potential(r, beta, n, tau)


# -- a priori quantities ------------------------------------------------------------


def weighted_gradient_energy(rho: np.ndarray, s: float, grid: Grid) -> float:
    """Face-based ``int rho^s |grad rho|^2`` (mean of rho on each face); nonnegative by construction."""
    total = 0.0
    for axis, (w, d) in enumerate(zip(face_weights(grid), face_diffs(rho, grid))):
        n = grid.points[axis]
        mean = 0.5 * (np.take(rho, range(n - 1), axis=axis) + np.take(rho, range(1, n), axis=axis))
        total += float(np.sum(w * mean**s * d * d))
    return total


AUX_TERMS = (
    "laplacian_alpha",
    "laplacian_mid",
    "gradient_p_alpha",
    "gradient_p_eps",
    "gradient_alpha",
    "gradient_eps",
)


def step_terms(rho: Field, params: SchemeParams) -> dict[str, float]:
    """Per-step integrands of the a priori estimate, before the time weight tau."""
    r = rho.values
    g = rho.grid
    a, e, p, tau = params.alpha, params.epsilon, params.p, params.tau
    return {
        "laplacian_alpha": integral(lap(power(r, a), g) ** 2, g),
        "laplacian_mid": tau * integral(lap(power(r, (a + e) / 2), g) ** 2, g),
        "gradient_p_alpha": tau * weighted_gradient_energy(r, p + a - 2, g),
        "gradient_p_eps": tau**2 * weighted_gradient_energy(r, p + e - 2, g),
        "gradient_alpha": tau * weighted_gradient_energy(r, a - 2, g),
        "gradient_eps": tau**2 * weighted_gradient_energy(r, e - 2, g),
    }


@dataclass
class EntropyReport:
    """Per-step quantities indexed k = 0..len(states); cumulative terms start at 0."""

    times: np.ndarray
    entropy_G: np.ndarray
    dissipation_cum: np.ndarray
    mass: np.ndarray
    min_rho: np.ndarray
    aux_terms: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def max_entropy(self) -> float:
        return float(np.max(self.entropy_G))

    @property
    def total(self) -> float:
        """Left side of the a priori estimate at the final time."""
        return float(sum(v[-1] for v in self.aux_terms.values()) + self.max_entropy)

    def rows(self) -> tuple[list[str], list[list[float]]]:
        header = ["step", "t", "mass", "min_rho", "entropy", "dissipation_cum", *AUX_TERMS]
        rows = []
        for k in range(len(self.times)):
            rows.append(
                [k, self.times[k], self.mass[k], self.min_rho[k], self.entropy_G[k], self.dissipation_cum[k]]
                + [self.aux_terms[name][k] for name in AUX_TERMS]
            )
        return header, rows


def entropy_estimate(traj: Trajectory) -> EntropyReport:
    """Every term on the left of the j-uniform a priori estimate, per step and cumulatively."""
    params, g = traj.params, traj.grid
    K = len(traj.states)
    cum = {name: np.zeros(K + 1) for name in AUX_TERMS}
    ent = np.zeros(K + 1)
    mass = np.zeros(K + 1)
    mins = np.zeros(K + 1)
    for k in range(K + 1):
        rho = traj.rho(k)
        ent[k] = entropy_G(rho, params.n)
        mass[k] = integral(rho.values, g)
        mins[k] = rho.min()
        if k == 0:
            continue
        terms = step_terms(rho, params)
        for name in AUX_TERMS:
            cum[name][k] = cum[name][k - 1] + params.tau * terms[name]
    return EntropyReport(traj.times, ent, cum["laplacian_alpha"].copy(), mass, mins, cum)


@dataclass(frozen=True)
class DissipationBalance:
    lhs: float
    terms: dict
    rhs: float

    @property
    def residual(self) -> float:
        scale = abs(self.lhs) + sum(abs(v) for v in self.terms.values())
        return 0.0 if scale == 0 else abs(self.lhs - self.rhs) / scale

    def __iter__(self):
        return iter((self.lhs, self.rhs))


def dissipation_identity(rho: Field, F: Field, params: SchemeParams, grid: Grid | None = None) -> DissipationBalance:
    """``int F Lap rho`` against its expansion after substituting F from the second scheme equation.

    The gradient terms use the face form, for which ``-int q Lap rho`` is
    exactly ``sum_faces D+q D+rho``; the expansion is therefore an identity up
    to the Newton residual.
    """
    grid = grid or rho.grid
    r = rho.values
    a, e, p, tau = params.alpha, params.epsilon, params.p, params.tau
    for s in (a - 1, e - 1, p + a - 1):
        check_power(r, s)
    lr = lap(r, grid)
    la = lap(power(r, a), grid)
    lhs = integral(F.values * lr, grid)
    terms = {
        "laplacian_alpha": integral(lr * power(r, a - 1) * la, grid),
        "gradient_p_alpha": tau * dirichlet_form(r, power(r, p + a - 1), grid),
        "gradient_alpha": -tau * dirichlet_form(r, power(r, a - 1), grid),
    }
    if params.variant != ALPHA_LT_1:
        terms["laplacian_eps"] = tau * integral(lr * power(r, e - 1) * la, grid)
        terms["gradient_p_eps"] = tau**2 * dirichlet_form(r, power(r, p + e - 1), grid)
        terms["gradient_eps"] = -(tau**2) * dirichlet_form(r, power(r, e - 1), grid)
    return DissipationBalance(lhs, terms, float(sum(terms.values())))


def weak_form_residual(traj: Trajectory, xi: Callable[..., np.ndarray]) -> float:
    """Defect of the weak formulation on the piecewise-constant interpolant.

    ``xi(t, *coords)`` is the test function; it should vanish at the final
    time and have zero normal derivative.  Time integrals of the flux terms
    sample ``xi`` at interval midpoints; the time-derivative term is
    integrated exactly over each interval.
    """
    params, g = traj.params, traj.grid
    a, n, tau = params.alpha, params.n, params.tau
    coords = g.coords()

    def xi_at(t):
        return np.broadcast_to(xi(t, *coords), g.shape).astype(float)

    total = -integral(traj.u0.values * xi_at(0.0), g)
    prev = xi_at(0.0)
    for k in range(1, len(traj.states) + 1):
        rho = traj.rho(k).values
        cur = xi_at(k * tau)
        total -= integral(rho * (cur - prev), g)
        mid = xi_at((k - 0.5) * tau)
        la = lap(power(rho, a), g)
        dot = sum(gu * gx for gu, gx in zip(grad(power(rho, a / 2), g), grad(mid, g)))
        flux = (2 * n / a) * power(rho, n + a / 2 - 1) * dot * la + power(rho, a + n - 1) * la * lap(mid, g)
        total += tau * integral(flux, g)
        prev = cur
    return abs(total)
