"""End-to-end acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one PASS/FAIL line; the lines are repeated in the terminal summary.
"""

from __future__ import annotations

import numpy as np
import pytest

from fourthlab.diagnostics import entropy_estimate, weak_form_residual
from fourthlab.grid import Field, Grid, integral
from fourthlab.regions import (
    ExponentTriple,
    best_region,
    check_diagonal_family,
    choose_epsilon,
    diagonal_lower_endpoint,
)
from fourthlab.scheme import NewtonOptions, SchemeParams, jacobian, run, stacked_residual, step
from fourthlab.verifier import (
    gradient_ibp_residual,
    gradient_quartic_bound,
    identity_residual,
    minimize_ratio,
    random_field,
)

pytestmark = pytest.mark.acceptance


def cosine(grid, amp, base=1.0):
    if grid.dim == 1:
        return Field.from_function(grid, lambda x: base + amp * np.cos(np.pi * x))
    return Field.from_function(grid, lambda x, y: base + amp * np.cos(np.pi * x) * np.cos(np.pi * y))


def bisect(pred, lo, hi, tol=1e-12):
    """Boundary of ``pred`` on [lo, hi] assuming pred(lo) != pred(hi)."""
    plo = pred(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid) == plo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_01_region_arithmetic(criterion):
    with criterion(1, "diagonal-family interval and eps = 0 for N <= 4", 1.0) as c:
        worst = 0.0
        for N in range(1, 7):
            certified = lambda a: check_diagonal_family(a, N).certified  # noqa: E731
            lo = bisect(certified, 1e-6, 1.0) if N > 1 else 0.0
            hi = bisect(certified, 1.0, 2.0)
            worst = max(worst, abs(lo - (N - 1) ** 2 / (2 * N**2 + 1)), abs(hi - 1.5))
            for a in np.linspace(0, 2, 201)[1:]:
                inside = (N - 1) ** 2 / (2 * N**2 + 1) < a < 1.5
                if min(abs(a - diagonal_lower_endpoint(N)), abs(a - 1.5)) > 1e-9:
                    assert certified(a) == inside, (N, a)
        assert diagonal_lower_endpoint(3) == pytest.approx(4 / 19, abs=1e-15)
        assert worst <= 1e-9
        for N in range(1, 5):
            for a in np.linspace(0.5, 2, 151)[1:-1]:
                assert choose_epsilon(a, N).epsilon == 0.0
        c.note(f"max endpoint error {worst:.1e}")


def test_criterion_02_constant_ceiling(criterion):
    with criterion(2, "certified constant never exceeds alpha*beta/gamma^2", 5.0) as c:
        rng = np.random.default_rng(2)
        found = violations = drawn = 0
        while found < 10_000:
            a, b = rng.uniform(0.1, 3.0, 2)
            g = rng.uniform(0.05, 1.5 * max(a, b))
            N = int(rng.integers(1, 9))
            drawn += 1
            v = best_region(ExponentTriple(a, b, g, N))
            if not v.certified or v.constant is None:
                continue
            found += 1
            if v.constant > a * b / g**2 + 1e-12:
                violations += 1
        c.note(f"{found} certified of {drawn} drawn, {violations} violations")
        assert violations == 0


def test_criterion_03_identity_suite(criterion):
    with criterion(3, "identity residuals converge at order >= 1.5", 10.0) as c:
        sizes = (65, 129, 257)
        fields = [cosine(Grid.interval(n), 1.0, 2.0) for n in sizes]
        triples = [ExponentTriple(1.5, 1, 1.25), ExponentTriple(1.4, 1, 1.3), ExponentTriple(0.5, 1, 0.5),
                   ExponentTriple(2, 1, 0.8)]
        worst_order = np.inf
        for t in triples:
            r = [identity_residual(u, t) for u in fields]
            orders = np.log2(np.array(r[:-1]) / np.array(r[1:]))
            worst_order = min(worst_order, orders.min())
        for a in (0.5, 1.0, 1.5):
            r = [gradient_ibp_residual(u, a) for u in fields]
            orders = np.log2(np.array(r[:-1]) / np.array(r[1:]))
            worst_order = min(worst_order, orders.min())
        diag = max(identity_residual(u, ExponentTriple(a, a, a)) for u in fields for a in (0.5, 1.0, 1.7))
        c.note(f"worst observed order {worst_order:.2f}, equal-exponent residual {diag:.1e}")
        assert worst_order >= 1.5
        assert diag <= 1e-10


STRESS_TRIPLES = [(1, 1, 1), (0.5, 1, 0.5), (1, 1, 0.9), (1.5, 1, 1.25), (1.4, 1, 1.3)]


def test_criterion_04_inequality_stress(criterion):
    with criterion(4, "minimized ratio stays above the certified constant", 120.0) as c:
        margins = {}
        for a, b, g in STRESS_TRIPLES:
            t = ExponentTriple(a, b, g)
            margins[(a, b, g)] = [
                minimize_ratio(t, Grid.interval(n), budget=500, restarts=20, seed=0).margin for n in (129, 257)
            ]
        c.note(", ".join(f"{k}: {m[0]:+.4g} -> {m[1]:+.4g}" for k, m in margins.items()))
        floor_ok = all(m[1] >= -0.05 for m in margins.values())
        monotone = [k for k, m in margins.items() if m[1] < m[0]]
        assert floor_ok, margins
        assert not monotone, f"margin decreases from 129 to 257 points for {monotone}"


def test_criterion_05_gradient_quartic_sampling(criterion):
    with criterion(5, "quartic gradient bound on 1000 random fields in 1D and 2D", 60.0) as c:
        rng = np.random.default_rng(5)
        worst = 0.0
        for grid in (Grid.interval(257), Grid.box(65)):
            for _ in range(1000):
                u = random_field(grid, rng)
                for a in (0.5, 1.0, 1.5):
                    chk = gradient_quartic_bound(u, a, tol=1e-2)
                    assert chk.passed, (grid.dim, a, chk)
                    worst = max(worst, chk.lhs / chk.rhs)
        c.note(f"largest lhs/rhs {worst:.3f}")


def test_criterion_06_fixed_point_and_constant_drift(criterion):
    with criterion(6, "constant one preserved, constant two drifts like tau^3", 10.0) as c:
        g = Grid.interval(65)
        for P in (SchemeParams.thin_film(1e-3), SchemeParams.qdd(1e-3)):
            traj = run(Field.constant(g, 1.0), 0.064, 64, P)
            assert not traj.failed
            assert max(np.abs(s.rho.values - 1).max() for s in traj.states) <= 1e-10
        c0, drifts, errs = 2.0, [], []
        for tau in (0.05, 0.025, 0.0125):
            P = SchemeParams.thin_film(tau, newton=NewtonOptions(tol=1e-12))
            root = bisect(lambda r: r - c0 - tau**3 * (1 - r**P.p) * (r + tau) / r > 0, 1.0, c0, tol=1e-15)
            rho1 = step(Field.constant(g, c0), P).rho.values
            errs.append(np.abs(rho1 - root).max())
            drifts.append(abs(rho1.mean() - c0))
        ratios = np.array(drifts[:-1]) / np.array(drifts[1:])
        c.note(f"oracle error {max(errs):.1e}, drift ratios {np.round(ratios, 3).tolist()}")
        assert max(errs) <= 1e-10
        assert np.all(np.abs(ratios - 8) <= 0.2 * 8)


def test_criterion_07_positivity_and_mass(criterion):
    with criterion(7, "positivity, per-step mass identity, time-averaged mass drift", 60.0) as c:
        g = Grid.interval(257)
        u0 = cosine(g, 0.5)
        drift = {}
        worst_identity = 0.0
        for tau, j in ((1e-3, 64), (5e-4, 128)):
            traj = run(u0, 0.064, j, SchemeParams.thin_film(tau))
            assert not traj.failed
            assert min(s.min_rho for s in traj.states) > 0
            m = traj.masses()
            for k, s in enumerate(traj.states, start=1):
                dm = m[k] - m[k - 1]
                worst_identity = max(worst_identity,
                                     abs(dm - tau**2 * integral(s.flux_potential.values, g)) / m[k - 1])
            T = traj.tau * j
            drift[tau] = weak_form_residual(traj, lambda t, x: (T - t) / T + 0 * x)
        ratio = drift[5e-4] / drift[1e-3]
        c.note(f"mass identity {worst_identity:.1e}, drift {drift[1e-3]:.3e} -> {drift[5e-4]:.3e} (ratio {ratio:.3f})")
        assert worst_identity <= 1e-8
        assert all(d <= 5 * tau for tau, d in drift.items())
        assert abs(ratio - 0.5) <= 0.3 * 0.5, f"drift ratio {ratio:.3f} under tau-halving"


def test_criterion_08_entropy_dissipation_bounded(criterion):
    with criterion(8, "entropy and dissipation uniform in j", 120.0) as c:
        g = Grid.interval(257)
        u0 = cosine(g, 0.5)
        ent, dis = [], []
        for j in (16, 32, 64):
            traj = run(u0, 0.01, j, SchemeParams.thin_film(0.01 / j))
            assert not traj.failed
            rep = entropy_estimate(traj)
            ent.append(rep.max_entropy)
            dis.append(rep.dissipation_cum[-1])

        def spread(v):
            v = np.abs(v)
            return (v.max() - v.min()) / v.min()

        c.note(f"entropy spread {spread(ent):.2e}, dissipation {np.round(dis, 5).tolist()}")
        assert spread(ent) < 0.25 and spread(dis) < 0.25


def test_criterion_09_weak_form_consistency(criterion):
    with criterion(9, "weak-form residual decreases under joint refinement", 180.0) as c:
        T = 0.01
        xi = lambda t, x: (T - t) * np.cos(np.pi * x)  # noqa: E731
        res = []
        for j, pts in ((16, 33), (32, 65), (64, 129)):
            traj = run(cosine(Grid.interval(pts), 0.5), T, j, SchemeParams.thin_film(T / j))
            assert not traj.failed
            res.append(weak_form_residual(traj, xi))
        c.note("residuals " + ", ".join(f"{r:.3e}" for r in res))
        assert res[1] < res[0] and res[2] < res[1]


def test_criterion_10_jacobian(criterion):
    with criterion(10, "Newton Jacobian matches finite differences", 30.0) as c:
        rng = np.random.default_rng(10)
        g = Grid.interval(65)
        m = g.size
        worst = 0.0
        for P in (SchemeParams.thin_film(1e-2), SchemeParams.qdd(1e-2)):
            for _ in range(100):
                r = np.exp(rng.uniform(-0.7, 0.7, m))
                F = rng.normal(size=m)
                f = np.exp(rng.uniform(-0.7, 0.7, m))
                v = rng.normal(size=2 * m)
                h = 1e-6
                fd = (stacked_residual(r + h * v[:m], F + h * v[m:], f, P, g)
                      - stacked_residual(r - h * v[:m], F - h * v[m:], f, P, g)) / (2 * h)
                Jv = jacobian(r, F, P, g) @ v
                worst = max(worst, np.linalg.norm(fd - Jv) / np.linalg.norm(Jv))
        c.note(f"worst relative mismatch {worst:.1e}")
        assert worst <= 1e-5


def test_stress_triples_are_certified():
    for a, b, g in STRESS_TRIPLES:
        assert best_region(ExponentTriple(a, b, g)).certified

