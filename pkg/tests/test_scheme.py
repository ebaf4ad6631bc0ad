from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from fourthlab.errors import DomainError, NewtonDivergence, PositivityError
from fourthlab.grid import Field, Grid, dirichlet_form, face_average_matrices, face_diffs, face_weights, integral
from fourthlab.scheme import (
    ALPHA_LT_1,
    NewtonOptions,
    SchemeParams,
    constant_state_root,
    explicit_F,
    jacobian,
    rho_residual,
    run,
    solve_F_given_rho,
    stacked_residual,
    step,
)

G = Grid.interval(65)
THIN = SchemeParams.thin_film(1e-3)
QDD = SchemeParams.qdd(1e-3)


def cosine(grid, amp=0.1, base=1.0):
    if grid.dim == 1:
        return Field.from_function(grid, lambda x: base + amp * np.cos(np.pi * x))
    return Field.from_function(grid, lambda x, y: base + amp * np.cos(np.pi * x) * np.cos(np.pi * y))


def bisect(fn, lo, hi, iters=200):
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sign(fn(mid)) == np.sign(flo):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- parameters


def test_params_validation():
    with pytest.raises(DomainError):
        SchemeParams(alpha=0.5, n=1, tau=0.01)  # general needs alpha >= 1
    with pytest.raises(DomainError):
        SchemeParams(alpha=1.2, n=1, tau=0.01, variant=ALPHA_LT_1)
    with pytest.raises(DomainError):
        SchemeParams(alpha=1, n=1, tau=1.5)
    with pytest.raises(DomainError):
        SchemeParams(alpha=1, n=1, tau=0.01, p=2)
    with pytest.raises(DomainError):
        SchemeParams(alpha=1, n=1, tau=0.01, epsilon=1.0)
    with pytest.raises(DomainError):
        SchemeParams(alpha=1, n=1, tau=0.01, p=2.4).check_dimension(5)
    with pytest.warns(UserWarning, match="not small"):
        SchemeParams(alpha=1, n=1, tau=0.2)


def test_presets_and_sigma():
    assert (THIN.alpha, THIN.n, THIN.epsilon, THIN.p, THIN.variant) == (1.0, 1.0, 0.0, 3.0, "general")
    assert (QDD.alpha, QDD.n, QDD.variant) == (0.5, 1.0, ALPHA_LT_1)
    assert SchemeParams.sigma(2) == 1.0 and SchemeParams.sigma(8) == 0.5 and SchemeParams.sigma(4, 0.3) == 0.3
    with pytest.raises(DomainError):
        SchemeParams.thin_film(1e-3, n=1.3)  # above 1 + sigma/4 = 1.25
    with pytest.raises(DomainError):
        SchemeParams.thin_film(1e-3, n=0.5)


# -- linear flux problem


def test_solve_F_examples():
    one = Field.constant(G, 1.0)
    assert np.abs(solve_F_given_rho(one, one, THIN).values).max() == 0.0
    tau = 0.05
    P = SchemeParams.thin_film(tau)
    F = solve_F_given_rho(one, Field.constant(G, 1 - tau**2), P)
    assert np.allclose(F.values, 1.0, atol=1e-12)


@pytest.mark.parametrize("grid", [Grid.interval(65), Grid.box(17)])
def test_solve_F_energy_identity(grid):
    P = SchemeParams.thin_film(0.01, n=0.8)
    rho = cosine(grid, 0.4)
    f = cosine(grid, 0.2, 1.01)
    F = solve_F_given_rho(rho, f, P).values
    a = [(A @ rho.values.ravel() + P.tau) ** P.n for A in face_average_matrices(grid)]
    flux = sum(np.sum(w.ravel() * c * d.ravel() ** 2) for w, c, d in zip(face_weights(grid), a, face_diffs(F, grid)))
    lhs = flux + P.tau * integral(F * F, grid)
    rhs = integral(F * (rho.values - f.values), grid) / P.tau
    assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


def test_solve_F_refuses_nonpositive_rho():
    with pytest.raises(PositivityError):
        solve_F_given_rho(Field.constant(G, 0.0), Field.constant(G, 1.0), THIN)


# -- second equation


def test_rho_residual_examples():
    one, zero = Field.constant(G, 1.0), Field.constant(G, 0.0)
    assert np.all(rho_residual(one, zero, THIN).values == 0.0)
    two = Field.constant(G, 2.0)
    assert np.allclose(rho_residual(two, zero, THIN).values, THIN.tau * (2**3 - 1), rtol=1e-14)
    P_var = dataclasses.replace(THIN, alpha=0.999999, variant=ALPHA_LT_1)
    u, F = cosine(G, 0.3), cosine(G, 0.5, 0.2)
    P1 = SchemeParams(alpha=1.0, n=1.0, tau=1e-3)
    # at alpha = 1, eps = 0 the two couplings differ only by the tau in the denominator
    general = rho_residual(u, F, P1).values
    c_general = u.values / (u.values + P1.tau)
    variant_like = general - c_general * F.values + F.values
    assert np.allclose(variant_like, rho_residual(u, F, P_var).values, atol=1e-4)
    assert not np.allclose(general, rho_residual(u, F, P_var).values, atol=1e-4)
    with pytest.raises(PositivityError):
        rho_residual(Field.constant(G, -1.0), zero, THIN)


def test_explicit_F_examples():
    one = Field.constant(G, 1.0)
    assert np.allclose(explicit_F(one, THIN).values, 0.0, atol=1e-18)
    tau = THIN.tau
    F = explicit_F(Field.constant(G, 2.0), THIN).values
    # the last term carries rho^(eps - 1) = 1/2
    assert np.allclose(F, -8 * tau - 4 * tau**2 + tau + tau**2 / 2, rtol=1e-13)
    # same value from solving the constant residual for F
    assert np.allclose(F, tau * (1 - 8) * (2 + tau) / 2, rtol=1e-13)


@pytest.mark.parametrize("P", [THIN, QDD, SchemeParams(alpha=1.3, n=0.7, tau=0.01, epsilon=0.2)])
def test_explicit_F_zeroes_rho_residual(P):
    u = cosine(G, 0.4)
    F = explicit_F(u, P)
    assert np.abs(rho_residual(u, F, P).values).max() <= 1e-9


# -- Jacobian


@pytest.mark.parametrize("P", [THIN, QDD, SchemeParams(alpha=1.3, n=0.7, tau=0.05, epsilon=0.2)])
@pytest.mark.parametrize("grid", [Grid.interval(17), Grid.box((6, 5))])
def test_jacobian_matches_finite_differences(P, grid, rng):
    m = grid.size
    for _ in range(10):
        r = np.exp(rng.uniform(-0.5, 0.5, m))
        F = rng.normal(size=m)
        f = np.exp(rng.uniform(-0.5, 0.5, m))
        v = rng.normal(size=2 * m)
        h = 1e-6
        Ep = stacked_residual(r + h * v[:m], F + h * v[m:], f, P, grid)
        Em = stacked_residual(r - h * v[:m], F - h * v[m:], f, P, grid)
        Jv = jacobian(r, F, P, grid) @ v
        assert np.linalg.norm((Ep - Em) / (2 * h) - Jv) <= 1e-5 * np.linalg.norm(Jv)


# -- steps


@pytest.mark.parametrize("P", [THIN, QDD])
def test_step_fixed_point(P):
    s = step(Field.constant(G, 1.0), P)
    assert s.newton_iters <= 2
    assert np.all(s.rho.values == 1.0)
    assert np.abs(s.flux_potential.values).max() <= 1e-15


@pytest.mark.parametrize("P", [SchemeParams.thin_film(0.05), SchemeParams.qdd(0.05)])
def test_step_constant_state_matches_bisection(P):
    P = dataclasses.replace(P, newton=NewtonOptions(tol=1e-12))
    c0 = 2.0
    if P.variant == ALPHA_LT_1:
        coupling = lambda r: r ** (1 - P.alpha)  # noqa: E731
    else:
        coupling = lambda r: r ** (1 - P.epsilon) / (r ** (P.alpha - P.epsilon) + P.tau)  # noqa: E731
    root = bisect(lambda r: r - c0 - P.tau**3 * (1 - r**P.p) / coupling(r), 1.0, c0)
    s = step(Field.constant(G, c0), P)
    assert np.abs(s.rho.values - root).max() <= 1e-10
    assert constant_state_root(c0, P) == pytest.approx(root, abs=1e-13)
    assert np.allclose(s.flux_potential.values, (root - c0) / P.tau**2, rtol=1e-6)


def test_constant_drift_is_cubic():
    drifts = [abs(constant_state_root(2.0, SchemeParams.thin_film(t)) - 2.0) for t in (0.04, 0.02, 0.01)]
    ratios = np.array(drifts[:-1]) / np.array(drifts[1:])
    assert np.all(np.abs(ratios - 8) <= 0.2 * 8)


def test_step_thin_film_cosine():
    P = SchemeParams.thin_film(1e-3)
    s = step(cosine(G, 0.1), P)
    assert s.min_rho > 0 and s.residual_norm <= P.newton.tol
    assert np.abs(s.flux_potential.values - explicit_F(s.rho, P).values).max() <= 10 * P.newton.tol


def test_step_mass_identity_2d():
    g = Grid.box(17)
    f = cosine(g, 0.3)
    s = step(f, THIN, g)
    dmass = integral(s.rho.values, g) - integral(f.values, g)
    assert abs(dmass - THIN.tau**2 * integral(s.flux_potential.values, g)) <= 1e-8 * integral(f.values, g)


def test_step_reports_divergence():
    P = SchemeParams.thin_film(0.05, newton=NewtonOptions(max_iter=1, tol=1e-14))
    with pytest.raises(NewtonDivergence) as info:
        step(cosine(G, 0.8), P)
    assert info.value.history


def test_step_refuses_nonpositive_start():
    with pytest.raises(PositivityError):
        step(Field.constant(G, 0.0), THIN)


# -- runs


@pytest.mark.parametrize("P", [THIN, QDD])
def test_run_constant_one(P):
    traj = run(Field.constant(G, 1.0), 0.016, 16, P)
    assert len(traj.states) == 16 and not traj.failed
    assert all(np.all(s.rho.values == 1.0) for s in traj.states)


def test_run_interpolants():
    u0 = cosine(G, 0.3)
    traj = run(u0, 0.004, 4, THIN)
    tau = traj.tau
    assert tau == pytest.approx(1e-3)
    assert traj.u_bar(0.0) is u0
    assert np.array_equal(traj.u_bar(tau).values, traj.states[0].rho.values)
    assert np.array_equal(traj.u_bar(1.5 * tau).values, traj.states[1].rho.values)
    mid = traj.u_tilde(1.5 * tau).values
    assert np.allclose(mid, 0.5 * (traj.states[0].rho.values + traj.states[1].rho.values))
    assert np.allclose(traj.u_tilde(2 * tau).values, traj.states[1].rho.values)
    with pytest.raises(DomainError):
        traj.u_bar(1.0)


def test_run_self_convergence():
    u0 = cosine(Grid.interval(129), 0.5)
    trajs = {j: run(u0, 0.01, j, SchemeParams.thin_film(0.01 / j)) for j in (16, 32, 64)}

    def dist(a, b):
        # L2(Omega_T) distance of piecewise-constant interpolants on the finer time grid
        fine = trajs[b]
        tot = 0.0
        for k in range(1, b + 1):
            t = k * fine.tau
            d = trajs[a].u_bar(t).values - fine.u_bar(t).values
            tot += fine.tau * integral(d * d, u0.grid)
        return np.sqrt(tot)

    d1, d2 = dist(16, 32), dist(32, 64)
    assert np.isfinite(d1) and d2 < d1


def test_run_qdd_positive():
    traj = run(cosine(G, 0.5), 0.01, 16, QDD)
    assert not traj.failed and min(s.min_rho for s in traj.states) > 0


def test_run_marks_failure():
    P = SchemeParams.thin_film(1e-3, newton=NewtonOptions(max_iter=1, tol=1e-15))
    traj = run(cosine(G, 0.5), 0.01, 4, P)
    assert traj.failed and traj.error and len(traj.states) < 4
