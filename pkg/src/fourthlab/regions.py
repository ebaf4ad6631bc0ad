"""Admissibility regions and explicit constants for the inequality family

    I(u) = int u^(2g-a-b) Lap(u^a) Lap(u^b)  >=  c int (Lap u^g)^2

on bounded convex domains in any dimension N.

Every check is a *sufficient* condition.  A verdict of "not-certified"
means no available argument covers the triple; it never claims the
inequality fails.  Boundary cases of strict inequalities are not certified.

Result identifiers (``RegionVerdict.lemma``):

``identity``                 a = b = g, where I(u) is exactly int (Lap u^g)^2
``one-dim``                  N = 1, using the exact 1D gradient identity
``gamma-large-linear``       2g > a + b and 3(a+b)/5 > g >= max(a, b)
``gamma-large-quadratic``    2g > a + b and g < min(max(a, b), 3 min(a, b)/2)
``midpoint``                 g = (a + b)/2
``gamma-small``              2g < a + b, N >= 2, auxiliary exponent eta
``log``                      the J(u) functional with Lap(ln u)
``diagonal:<delegate>``      b = 1, g = a
``epsilon-shift:<delegate>`` b = 1, g = (a + eps)/2 with eps from :func:`choose_epsilon`
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .errors import DomainError

# relative tolerance for recognising the exact-shape special cases
_SHAPE_TOL = 1e-12


@dataclass(frozen=True)
class ExponentTriple:
    alpha: float
    beta: float
    gamma: float
    dim: int = 1

    def __post_init__(self):
        if not (self.alpha * self.beta > 0):
            raise DomainError(f"need alpha*beta > 0, got alpha={self.alpha}, beta={self.beta}")
        if self.gamma == 0 or not math.isfinite(self.gamma):
            raise DomainError("gamma must be finite and nonzero")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def ceiling(self) -> float:
        """Near-constant limit of the Rayleigh ratio; no valid constant exceeds it."""
        return self.alpha * self.beta / self.gamma**2

    def swapped(self) -> "ExponentTriple":
        return ExponentTriple(self.beta, self.alpha, self.gamma, self.dim)

    def ordered(self) -> "ExponentTriple":
        """Same triple with ``alpha >= beta`` (I(u) is symmetric in the pair)."""
        return self if self.alpha >= self.beta else self.swapped()


@dataclass(frozen=True)
class RegionVerdict:
    certified: bool
    constant: Optional[float] = None
    lemma: str = ""
    eta: Optional[float] = None
    notes: str = ""

    def __post_init__(self):
        if self.certified and self.constant is not None and not self.constant > 0:
            raise ValueError(f"certified verdict needs a positive constant, got {self.constant}")

    @property
    def admissible(self) -> str:
        return "certified" if self.certified else "not-certified"


def _no(lemma: str, notes: str, eta: float | None = None) -> RegionVerdict:
    return RegionVerdict(False, None, lemma, eta, notes)


def _close(x: float, y: float) -> bool:
    return abs(x - y) <= _SHAPE_TOL * max(1.0, abs(x), abs(y))


def hessian_weighted_coefficients(alpha: float, beta: float, N: int) -> tuple[float, float, float]:
    """Coefficients (A, B, C) of the lower bound

        int u^(2a-2b) |D^2 u^b|^2 >= A int |D^2 u^a|^2 + B int (Lap u^a)^2 + C int |grad u^(a/2)|^4
    """
    if alpha == 0:
        raise DomainError("alpha must be nonzero")
    d = (2 + N) * alpha**2
    A = 2 * beta**2 / d
    B = beta**2 / d
    C = 16 * beta**2 * (alpha - beta) * (alpha - 3 * beta) / ((2 + N) * alpha**4)
    return A, B, C


def check_n1(t: ExponentTriple) -> RegionVerdict:
    if t.dim != 1:
        raise DomainError("the one-dimensional check needs N = 1")
    a, b, g = t.ordered().alpha, t.ordered().beta, t.gamma
    q = g * g - 2 * (a + b) * g + 3 * a * b
    if q >= 0:
        return RegionVerdict(True, a * b / g**2, "one-dim", None, "gradient quartic term has nonnegative coefficient")
    r = math.sqrt(a * a + b * b - a * b)
    if g > min(1.5 * a, a + b + r) or g < max(1.5 * b, a + b - r):
        c = a * b * (4 * g * g - 6 * (a + b) * g + 9 * a * b) / g**4
        if c > 0:
            return RegionVerdict(True, c, "one-dim", None, "quartic term bounded by 9/16 of the Laplacian energy")
    return _no("one-dim", "gamma lies in the gap where the quartic bound is too weak")


def check_gamma_large(t: ExponentTriple) -> RegionVerdict:
    a, b, g = t.ordered().alpha, t.ordered().beta, t.gamma
    if not 2 * g - a - b > 0:
        raise DomainError("needs 2*gamma > alpha + beta")
    if g <= 0:
        return _no("gamma-large", "sign argument needs gamma > 0")
    if 0.6 * (a + b) > g >= a:
        c = a * b * (3 * (a + b) - 5 * g) / g**3
        return RegionVerdict(True, c, "gamma-large-linear", None, "3(a+b)/5 > gamma >= max(a, b)")
    if g < min(a, 1.5 * b):
        c = a * b * (4 * g * g - 6 * (a + b) * g + 9 * a * b) / g**4
        return RegionVerdict(True, c, "gamma-large-quadratic", None, "gamma < min(max(a,b), 3 min(a,b)/2)")
    return _no("gamma-large", "neither gamma window applies")


def check_midpoint(alpha: float, beta: float) -> RegionVerdict:
    if not alpha * beta > 0:
        raise DomainError("needs alpha*beta > 0")
    s = alpha + beta
    k = 1 - 9 * (alpha - beta) ** 2 / s**2
    if k > 0:
        return RegionVerdict(True, 4 * alpha * beta / s**2 * k, "midpoint", None, "gamma = (a+b)/2")
    return _no("midpoint", "alpha outside (beta/2, 2 beta)")


def gamma_small_eta(alpha: float, beta: float, gamma: float, N: int) -> float:
    """Auxiliary exponent that cancels the gradient-quartic term when 2g < a + b."""
    s = alpha + beta - 2 * gamma
    return ((N + 1) * gamma * s - (2 + N) * (alpha * beta - gamma**2)) / ((N - 1) * s)


def check_gamma_small(t: ExponentTriple) -> RegionVerdict:
    a, b, g, N = t.alpha, t.beta, t.gamma, t.dim
    if not 2 * g - a - b < 0:
        raise DomainError("needs 2*gamma < alpha + beta")
    if N < 2:
        raise DomainError("needs N >= 2")
    eta = gamma_small_eta(a, b, g, N)
    D = (1 - N) * (a + b) + 3 * N * g - (2 + N) * eta
    if not g - eta > 0:
        return _no("gamma-small", "eta >= gamma", eta)
    if not D > 0:
        return _no("gamma-small", "Laplacian coefficient not positive", eta)
    c = a * b * D / ((2 + N) * g**2 * (g - eta))
    return RegionVerdict(True, c, "gamma-small", eta, f"eta = {eta:.12g}")


def diagonal_lower_endpoint(N: int) -> float:
    return (N - 1) ** 2 / (2 * N**2 + 1)


def check_diagonal_family(alpha: float, N: int) -> RegionVerdict:
    """The case beta = 1, gamma = alpha: certified on ((N-1)^2/(2N^2+1), 3/2)."""
    if not alpha > 0:
        return _no("diagonal", "alpha must be positive")
    if alpha == 1:
        return RegionVerdict(True, 1.0, "diagonal:identity", None, "trivial at alpha = 1")
    if 1 < alpha < 1.5:
        v = check_gamma_large(ExponentTriple(alpha, 1.0, alpha, N))
    elif diagonal_lower_endpoint(N) < alpha < 1:
        t = ExponentTriple(alpha, 1.0, alpha, N)
        v = check_gamma_small(t) if N >= 2 else check_n1(t)
    else:
        return _no("diagonal", f"alpha outside ({diagonal_lower_endpoint(N):.6g}, 3/2)")
    return RegionVerdict(v.certified, v.constant, f"diagonal:{v.lemma}", v.eta, v.notes)


class EpsilonChoice(NamedTuple):
    epsilon: float
    eta: Optional[float]
    certified: bool
    alpha: float
    dim: int

    @property
    def gamma(self) -> float:
        return 0.5 * (self.alpha + self.epsilon)

    @property
    def verdict(self) -> RegionVerdict:
        t = ExponentTriple(self.alpha, 1.0, self.gamma, self.dim)
        return check_gamma_small(t) if self.dim >= 2 else check_n1(t)


def choose_epsilon(alpha: float, N: int) -> EpsilonChoice:
    """Shift eps so that int u^(eps-1) Lap(u^a) Lap(u) >= c int (Lap u^((a+eps)/2))^2.

    eps = 0 whenever N <= 4; otherwise eps minimises the quadratic obstruction,
    clipped at zero.
    """
    if not 0.5 < alpha < 2:
        raise DomainError(f"alpha must lie in (1/2, 2), got {alpha}")
    if N < 2:
        v = check_n1(ExponentTriple(alpha, 1.0, 0.5 * alpha, 1))
        return EpsilonChoice(0.0, None, v.certified, alpha, 1)
    if N <= 4 or alpha > 2 * (2 * N - 5) / (N + 2):
        eps = 0.0
    else:
        eps = (-(N + 2) * alpha + 2 * (2 * N - 5)) / (5 * N - 8)
    eta = (-N * eps**2 + 2 * (N + 1 + alpha) * eps + (N + 2) * alpha**2 - 2 * (N + 3) * alpha) / (
        4 * (N - 1) * (1 - eps)
    )
    gamma = 0.5 * (alpha + eps)
    coef = -(N - 1) * (alpha + 1) + 1.5 * N * (alpha + eps) - (2 + N) * eta
    return EpsilonChoice(eps, eta, gamma > eta and coef > 0, alpha, N)


def log_case_eta(alpha: float, gamma: float, N: int) -> float:
    return ((2 + N) * (gamma - alpha) * gamma + (alpha - 2 * gamma) * alpha) / ((N - 1) * (2 * gamma - alpha))


def check_log_case(alpha: float, gamma: float, N: int) -> RegionVerdict:
    """J(u) = int u^(2g-a) Lap(ln u) Lap(u^a) >= c int (Lap u^g)^2; the constant is not quantified."""
    if not alpha - 2 * gamma > 0:
        raise DomainError("needs alpha > 2*gamma")
    if N < 2:
        raise DomainError("needs N >= 2")
    if gamma == 0:
        raise DomainError("gamma must be nonzero")
    eta = log_case_eta(alpha, gamma, N)
    if eta - gamma < 0 and (2 + N) * (eta - gamma) + (N - 1) * (alpha - 2 * gamma) < 0:
        return RegionVerdict(True, None, "log", eta, "constant exists, not quantified")
    return _no("log", "eta conditions fail", eta)


def best_region(t: ExponentTriple) -> RegionVerdict:
    """Run every applicable check and return the certified verdict with the largest constant."""
    t = t.ordered()
    a, b, g, N = t.alpha, t.beta, t.gamma, t.dim
    candidates: list[RegionVerdict] = []
    if _close(a, b) and _close(b, g):
        candidates.append(RegionVerdict(True, 1.0, "identity", None, "I(u) = int (Lap u^g)^2"))
    if N == 1:
        candidates.append(check_n1(t))
    s = 2 * g - a - b
    if abs(s) <= _SHAPE_TOL * max(1.0, abs(a) + abs(b)):
        candidates.append(check_midpoint(a, b))
    elif s > 0:
        candidates.append(check_gamma_large(t))
    elif N >= 2:
        candidates.append(check_gamma_small(t))
    # the named families, recognised with either exponent playing the role of 1
    for other, one in ((a, b), (b, a)):
        if not _close(one, 1.0):
            continue
        if _close(g, other):
            candidates.append(check_diagonal_family(other, N))
        if N >= 2 and 0.5 < other < 2:
            choice = choose_epsilon(other, N)
            if _close(g, choice.gamma):
                v = choice.verdict
                candidates.append(RegionVerdict(v.certified, v.constant, f"epsilon-shift:{v.lemma}", v.eta, v.notes))
    certified = [v for v in candidates if v.certified and v.constant is not None]
    if certified:
        # stable: first candidate wins ties
        return max(certified, key=lambda v: v.constant)
    tried = ", ".join(sorted({v.lemma for v in candidates})) or "none"
    return _no("none", f"no sufficient condition applies (tried: {tried})")
