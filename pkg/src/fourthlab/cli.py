"""Command-line front end.

    fourthlab regions|verify|solve|sweep [--config FILE] [--out DIR] [--seed N] [--preset NAME] [key=value ...]

Configuration is a flat ``key=value`` file (``#`` starts a comment);
trailing ``key=value`` arguments override it.  Exit codes: 0 success,
2 invalid configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .diagnostics import entropy_estimate, weak_form_residual
from .errors import DomainError, NewtonDivergence, SolverError
from .grid import Field, Grid
from .regions import ExponentTriple, best_region
from .report import heatmap_svg, lines_svg, write_csv
from .scheme import ALPHA_LT_1, GENERAL, NewtonOptions, SchemeParams, constant_state_root, run, step
from .verifier import minimize_ratio

log = logging.getLogger("fourthlab")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
PRESETS = ("thin-film", "qdd", "custom")
MODES = ("regions", "verify", "solve", "sweep")


class ConfigError(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


def _parse_value(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def parse_pairs(lines, source: str) -> dict:
    out = {}
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{i}: expected key=value, got {raw.strip()!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ConfigError(f"{source}:{i}: empty key")
        out[k] = _parse_value(v)
    return out


@dataclass
class RunConfig:
    mode: str
    values: dict
    out: Path
    seed: int
    preset: str | None = None
    used: set = field(default_factory=set)

    def get(self, key, default=None, kind: Callable | None = None):
        self.used.add(key)
        v = self.values.get(key, default)
        if v is None:
            return None
        if kind is not None:
            try:
                return kind(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}={v!r}: {exc}") from None
        return v

    def echo(self) -> dict:
        d = dict(self.values)
        d.update(mode=self.mode, seed=self.seed, preset=self.preset or "none", version=__version__)
        return d

    # -- shared builders

    def grid(self, default_points: int = 129) -> Grid:
        dim = self.get("dim", 1, int)
        points = self.get("points", default_points, int)
        extent = self.get("extent", 1.0, float)
        return Grid.interval(points, extent) if dim == 1 else Grid.box(points, extent)

    def scheme_params(self, tau: float, N: int) -> SchemeParams:
        newton = NewtonOptions(
            max_iter=self.get("newton_max_iter", 50, int),
            tol=self.get("newton_tol", 1e-9, float),
            damping_min=self.get("newton_damping_min", 2.0**-30, float),
        )
        p = self.get("p", 3.0, float)
        if self.preset == "thin-film":
            return SchemeParams.thin_film(tau, n=self.get("n", 1.0, float), N=N, p=p, newton=newton)
        if self.preset == "qdd":
            return SchemeParams.qdd(tau, p=p, newton=newton)
        alpha = self.get("alpha", 1.0, float)
        return SchemeParams(
            alpha=alpha,
            n=self.get("n", 1.0, float),
            tau=tau,
            epsilon=self.get("epsilon", 0.0, float),
            p=p,
            variant=self.get("variant", GENERAL if alpha >= 1 else ALPHA_LT_1, str),
            newton=newton,
        )

    def initial(self, grid: Grid) -> Field:
        amp = self.get("u0_amplitude", 0.5, float)
        base = self.get("u0_mean", 1.0, float)
        if grid.dim == 1:
            return Field.from_function(grid, lambda x: base + amp * np.cos(np.pi * x / grid.extent[0]))
        return Field.from_function(
            grid, lambda x, y: base + amp * np.cos(np.pi * x / grid.extent[0]) * np.cos(np.pi * y / grid.extent[1])
        )


def _floats(text, key: str) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _linspace(cfg: RunConfig, prefix: str, lo: float, hi: float, steps: int) -> np.ndarray:
    return np.linspace(cfg.get(f"{prefix}_min", lo, float), cfg.get(f"{prefix}_max", hi, float),
                       cfg.get(f"{prefix}_steps", steps, int))


# -- verbs ---------------------------------------------------------------------------


def cmd_regions(cfg: RunConfig) -> list[Path]:
    beta = cfg.get("beta", 1.0, float)
    N = cfg.get("N", 2, int)
    if N < 1:
        raise ConfigError("N must be a positive integer")
    alphas = _linspace(cfg, "alpha", 0.05, 2.0, 40)
    gammas = _linspace(cfg, "gamma", 0.0, 2.0, 41)
    rows = []
    values = np.full((len(gammas), len(alphas)), np.nan)
    invalid = np.zeros(values.shape, dtype=bool)
    for iy, g in enumerate(gammas):
        for ix, a in enumerate(alphas):
            try:
                t = ExponentTriple(float(a), beta, float(g), N)
            except DomainError as exc:
                invalid[iy, ix] = True
                rows.append([a, beta, g, N, "invalid", None, "", None, None, str(exc)])
                continue
            v = best_region(t)
            if v.certified:
                values[iy, ix] = v.constant
            rows.append([a, beta, g, N, v.admissible, v.constant, v.lemma, v.eta, t.ceiling, v.notes])
    header = ["alpha", "beta", "gamma", "N", "status", "constant", "lemma", "eta", "ceiling", "notes"]
    out = [write_csv(cfg.out / "regions.csv", header, rows, cfg.echo())]
    out.append(
        heatmap_svg(cfg.out / "regions.svg", alphas, gammas, values,
                    f"certified constants, beta={beta:g}, N={N}", "alpha", "gamma", invalid)
    )
    return out


DEFAULT_TRIPLES = "1:1:1;0.5:1:0.5;1:1:0.9;1.5:1:1.25;1.4:1:1.3"


def _triples(text: str, N: int) -> list[ExponentTriple]:
    out = []
    for item in str(text).split(";"):
        if not item.strip():
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigError(f"triple {item!r} must look like alpha:beta:gamma")
        out.append(ExponentTriple(*(float(x) for x in parts), N))
    return out


def cmd_verify(cfg: RunConfig) -> list[Path]:
    grid = cfg.grid(257)
    triples = _triples(cfg.get("triples", DEFAULT_TRIPLES, str), grid.dim)
    restarts = cfg.get("restarts", 20, int)
    budget = cfg.get("budget", 500, int)
    modes = cfg.get("modes", 8, int)
    rows = []
    for t in triples:
        rep = minimize_ratio(t, grid, budget=budget, restarts=restarts, seed=cfg.seed, modes=modes)
        rows.append([t.alpha, t.beta, t.gamma, t.dim, grid.points[0], grid.h, rep.ratio_min,
                     rep.c_certified, rep.margin, rep.samples, rep.converged_restarts])
    header = ["alpha", "beta", "gamma", "N", "points", "h", "ratio_min", "c_certified", "margin", "samples",
              "converged_restarts"]
    return [write_csv(cfg.out / "verify.csv", header, rows, cfg.echo())]


def _time_setup(cfg: RunConfig) -> tuple[float, int]:
    T = cfg.get("T", None, float)
    j = cfg.get("j", None, int)
    tau = cfg.get("tau", None, float)
    if T is None:
        T = (tau or 1e-3) * (j or 64)
    if j is None:
        j = max(1, int(round(T / tau))) if tau else 64
    return T, j


def cmd_solve(cfg: RunConfig) -> list[Path]:
    grid = cfg.grid(129)
    T, j = _time_setup(cfg)
    params = cfg.scheme_params(T / j, grid.dim)
    u0 = cfg.initial(grid)
    traj = run(u0, T, j, params, grid)
    rep = entropy_estimate(traj)
    echo = cfg.echo()
    out = []
    iters = [0] + [s.newton_iters for s in traj.states]
    resid = [0.0] + [s.residual_norm for s in traj.states]
    rows = [[k, rep.times[k], rep.mass[k], rep.min_rho[k], rep.entropy_G[k], rep.dissipation_cum[k], iters[k], resid[k]]
            for k in range(len(rep.times))]
    out.append(write_csv(cfg.out / "trajectory.csv",
                         ["step", "t", "mass", "min_rho", "entropy", "dissipation", "newton_iters", "residual"],
                         rows, echo))
    header, erows = rep.rows()
    out.append(write_csv(cfg.out / "entropy.csv", header, erows, echo))
    Tend = traj.tau * len(traj.states)
    if grid.dim == 1:
        xi = lambda t, x: (Tend - t) * np.cos(np.pi * x / grid.extent[0])  # noqa: E731
    else:
        xi = lambda t, x, y: (Tend - t) * np.cos(np.pi * x / grid.extent[0]) * np.cos(np.pi * y / grid.extent[1])  # noqa: E731
    wres = weak_form_residual(traj, xi) if traj.states else float("nan")
    out.append(write_csv(cfg.out / "weak_residual.csv", ["tau", "h", "residual"], [[traj.tau, grid.h, wres]], echo))
    snaps = _floats(cfg.get("snapshots", f"0,{Tend}"), "snapshots")
    if grid.dim == 1:
        cols = [traj.u_bar(min(t, Tend)).values for t in snaps]
        srows = [[x] + [c[i] for c in cols] for i, x in enumerate(grid.axes()[0])]
        out.append(write_csv(cfg.out / "profiles.csv", ["x"] + [f"t={t:.6g}" for t in snaps], srows, echo))
        out.append(lines_svg(cfg.out / "profiles.svg",
                             [("rho", [(f"t={t:.4g}", grid.axes()[0], c) for t, c in zip(snaps, cols)])], "x"))
    else:
        for t in snaps:
            vals = traj.u_bar(min(t, Tend)).values
            out.append(write_csv(cfg.out / f"snapshot_t{t:.6g}.csv", [f"y{i}" for i in range(grid.points[1])],
                                 vals.tolist(), echo))
    out.append(lines_svg(cfg.out / "solve.svg",
                         [("mass", [("mass", rep.times, rep.mass)]),
                          ("entropy", [("entropy", rep.times, rep.entropy_G)]),
                          ("min rho", [("min rho", rep.times, rep.min_rho)])], "t"))
    if traj.failed:
        raise SolverFailure(traj.error)
    return out


# sweep workers are top-level so a process pool can pickle them


def _mass_drift_job(args):
    values, preset, points, T, j = args
    cfg = RunConfig("sweep", values, Path("."), 0, preset)
    grid = cfg.grid(points)
    params = cfg.scheme_params(T / j, grid.dim)
    traj = run(cfg.initial(grid), T, j, params, grid)
    if traj.failed:
        raise SolverFailure(traj.error)
    avg = weak_form_residual(traj, lambda t, *xs: (T - t) / T + 0.0 * xs[0])
    return [params.tau, grid.h, avg]


def _weak_job(args):
    values, preset, points, T, j = args
    cfg = RunConfig("sweep", values, Path("."), 0, preset)
    grid = cfg.grid(points)
    params = cfg.scheme_params(T / j, grid.dim)
    traj = run(cfg.initial(grid), T, j, params, grid)
    if traj.failed:
        raise SolverFailure(traj.error)
    L = grid.extent[0]
    return [params.tau, grid.h, weak_form_residual(traj, lambda t, x, *rest: (T - t) * np.cos(np.pi * x / L))]


def _constant_job(args):
    values, preset, points, tau, c0 = args
    cfg = RunConfig("sweep", values, Path("."), 0, preset)
    grid = cfg.grid(points)
    params = cfg.scheme_params(tau, grid.dim)
    state = step(Field.constant(grid, c0), params, grid)
    root = constant_state_root(c0, params)
    return [tau, grid.h, abs(root - c0), float(np.abs(state.rho.values - root).max())]


def cmd_sweep(cfg: RunConfig) -> list[Path]:
    kind = cfg.get("kind", "mass-drift", str)
    levels = cfg.get("levels", 3, int)
    workers = cfg.get("workers", 1, int)
    T = cfg.get("T", 0.01, float)
    j0 = cfg.get("j", 16, int)
    p0 = cfg.get("points", 33, int)
    vals = dict(cfg.values)
    if kind == "mass-drift":
        jobs = [(vals, cfg.preset, p0, T, j0 * 2**l) for l in range(levels)]
        fn, header = _mass_drift_job, ["tau", "h", "time_averaged_mass_drift"]
    elif kind == "weak-residual":
        jobs = [(vals, cfg.preset, (p0 - 1) * 2**l + 1, T, j0 * 2**l) for l in range(levels)]
        fn, header = _weak_job, ["tau", "h", "weak_residual"]
    elif kind == "constant-drift":
        tau0 = cfg.get("tau", 0.05, float)
        c0 = cfg.get("c0", 2.0, float)
        jobs = [(vals, cfg.preset, p0, tau0 / 2**l, c0) for l in range(levels)]
        fn, header = _constant_job, ["tau", "h", "drift", "solver_error"]
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}; use mass-drift, weak-residual or constant-drift")
    for key in ("kind", "levels", "workers", "T", "j", "points", "tau", "c0"):
        cfg.used.add(key)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(fn, jobs))
    else:
        rows = [fn(job) for job in jobs]
    return [write_csv(cfg.out / f"sweep_{kind}.csv", header, rows, cfg.echo())]


COMMANDS = {"regions": cmd_regions, "verify": cmd_verify, "solve": cmd_solve, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fourthlab", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", type=Path, help="flat key=value configuration file")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, help="random seed (required here or in the config)")
    ap.add_argument("--preset", choices=PRESETS)
    ap.add_argument("--verbose", "-v", action="store_true")
    ap.add_argument("overrides", nargs="*", metavar="key=value")
    return ap


def load_config(args) -> RunConfig:
    values = {}
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        values.update(parse_pairs(text.splitlines(), str(args.config)))
    values.update(parse_pairs(args.overrides, "command line"))
    seed = args.seed if args.seed is not None else values.pop("seed", None)
    values.pop("seed", None)
    if seed is None or isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("a random seed is required (--seed N or seed=N in the config)")
    preset = args.preset or values.pop("preset", None)
    values.pop("preset", None)
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    if preset == "custom":
        preset = None
    return RunConfig(args.mode, values, args.out, seed, preset)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_intermixed_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            paths = COMMANDS[args.mode](cfg)
        unused = sorted(set(cfg.values) - cfg.used)
        if unused:
            log.warning("unused configuration keys: %s", ", ".join(unused))
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"fourthlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverFailure, NewtonDivergence, SolverError) as exc:
        print(f"fourthlab: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
