"""Command-line entry point: scenario orchestration, persistence, sweeps.

Subcommands: eig, speed, steady, strip, simulate, verify, sweep.
Exit codes: 0 success, 1 configuration error, 2 solver/numerical error,
3 verification failure.  Results land under <out>/runs/<scenario hash>/;
the PULSEFRONT_OUT environment variable overrides the default output root.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import itertools
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import frontsim, spectral, steady, strip
from .errors import ParseError, ScenarioError, SolverError
from .fields import (
    COEFFICIENT_NAMES,
    CoefficientSpec,
    PeriodicGrid,
    IntervalGrid,
    build_field,
    load_scenario,
    serialize_scenario,
)

__version__ = "0.1.0"

NEAR_CRITICAL_BAND = 1e-3


def fmt(value):
    return format(float(value), ".12g")


def scenario_hash(config):
    digest = hashlib.sha256(serialize_scenario(config).encode()).hexdigest()
    return digest[:12]


def _out_root(args):
    if args.out:
        return Path(args.out)
    env = os.environ.get("PULSEFRONT_OUT")
    return Path(env) if env else Path("runs")


def _run_dir(args, config):
    root = _out_root(args)
    run_dir = root / "runs" / scenario_hash(config) if root.name != "runs" \
        else root / scenario_hash(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _write_manifest(run_dir, config, command, params, artifacts, wall):
    manifest = {
        "scenario_hash": scenario_hash(config),
        "command": command,
        "parameters": params,
        "artifacts": sorted(artifacts),
        "wall_time_s": round(wall, 3),
        "version": __version__,
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load(args):
    config = load_scenario(args.scenario)
    field = build_field(config)
    grid = PeriodicGrid(int(config.grid_opt("n_cells")), field.period_L)
    return config, field, grid


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


# --------------------------------------------------------------------------
# Steady-state cache
# --------------------------------------------------------------------------

def _steady_cached(run_dir, field, grid, quiet=False):
    """Nontrivial steady state, cached as npz; rebuilt when corrupted."""
    cache = run_dir / "steady_cache.npz"
    if cache.exists():
        try:
            data = np.load(cache)
            p, q = data["p"], data["q"]
            if len(p) == grid.n_cells:
                return steady.SteadyState(
                    p=p, q=q, residual=float(data["residual"]),
                    beta=0.0, method_tag="cache")
        except Exception:
            if not quiet:
                print("steady cache unreadable, rebuilding", file=sys.stderr)
    marched = steady.steady_time_march(field, grid)
    state = steady.steady_newton(field, grid,
                                 (np.maximum(marched.p, 1e-14),
                                  np.maximum(marched.q, 1e-14)))
    np.savez(cache, p=state.p, q=state.q, residual=state.residual)
    return state


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_eig(args):
    config, field, grid = _load(args)
    run_dir = _run_dir(args, config)
    t0 = time.perf_counter()
    if args.dirichlet is not None:
        R = args.dirichlet
        n_points = max(32, int(round(2 * R * grid.n_cells / field.period_L)) - 1)
        igrid = IntervalGrid.symmetric(R, n_points)
        pair = spectral.dirichlet_principal_eig(field, igrid, tol=args.tol)
        print(f"lambda1_R = {fmt(pair.lam)}")
        print(f"C_b = {fmt(pair.component_ratio)}")
        xs = igrid.x_interior
    else:
        pair = spectral.periodic_principal_eig(
            field, grid, lam_drift=args.drift, epsilon=args.eps, tol=args.tol)
        label = "k_eps" if args.drift else "lambda1"
        print(f"{label} = {fmt(pair.lam)}")
        xs = grid.x
    path = run_dir / "eigenvector.csv"
    _write_csv(path, ["x", "phi", "psi"],
               [(fmt(x), fmt(p), fmt(s))
                for x, p, s in zip(xs, pair.phi, pair.psi)])
    _write_manifest(run_dir, config, "eig",
                    {"dirichlet": args.dirichlet, "drift": args.drift,
                     "eps": args.eps}, [path.name],
                    time.perf_counter() - t0)
    return 0


def _parse_range(text, n_parts):
    parts = text.split(":")
    if len(parts) != n_parts:
        raise ParseError(f"expected {n_parts} colon-separated values, "
                         f"got {text!r}")
    return [float(p) for p in parts]


def cmd_speed(args):
    config, field, grid = _load(args)
    run_dir = _run_dir(args, config)
    t0 = time.perf_counter()
    lam_range = tuple(_parse_range(args.lambda_range, 2))
    curve = spectral.dispersion_curve(field, grid, epsilon=args.eps,
                                      lam_range=lam_range,
                                      n_samples=args.samples, tol=args.tol)
    path = run_dir / "dispersion.csv"
    _write_csv(path, ["lambda", "k_eps", "c_of_lambda"],
               [(fmt(l), fmt(k), fmt(c))
                for l, k, c in zip(curve.lambdas, curve.k_values,
                                   curve.c_values)])
    print(f"c_bar = {fmt(curve.c_bar)}")
    print(f"lambda_star = {fmt(curve.lam_star)}")
    _write_manifest(run_dir, config, "speed",
                    {"eps": args.eps, "lambda_range": args.lambda_range,
                     "samples": args.samples}, [path.name],
                    time.perf_counter() - t0)
    return 0


def cmd_steady(args):
    config, field, grid = _load(args)
    run_dir = _run_dir(args, config)
    t0 = time.perf_counter()
    artifacts = []
    if args.branch:
        lo, hi, n = _parse_range(args.branch, 3)
        points = steady.continuation_branch(field, grid, (lo, hi), int(n))
        path = run_dir / "branch.csv"
        _write_csv(path, ["beta", "sup_norm", "min_p", "min_q", "residual"],
                   [(fmt(bp.beta), fmt(bp.norm), fmt(bp.steady.p.min()),
                     fmt(bp.steady.q.min()), fmt(bp.steady.residual))
                    for bp in points])
        artifacts.append(path.name)
        print(f"branch_points = {len(points)}")
    else:
        state = steady.steady_time_march(field, grid, allow_extinction=True)
        if args.newton and state.nontrivial:
            state = steady.steady_newton(field, grid,
                                         (np.maximum(state.p, 1e-14),
                                          np.maximum(state.q, 1e-14)))
        path = run_dir / "steady.csv"
        _write_csv(path, ["x", "p", "q"],
                   [(fmt(x), fmt(p), fmt(q))
                    for x, p, q in zip(grid.x, state.p, state.q)])
        artifacts.append(path.name)
        print(f"sup_norm = {fmt(state.sup_norm)}")
        print(f"residual = {fmt(state.residual)}")
        print(f"nontrivial = {state.nontrivial}")
    _write_manifest(run_dir, config, "steady",
                    {"branch": args.branch, "newton": args.newton},
                    artifacts, time.perf_counter() - t0)
    return 0


def cmd_strip(args):
    config, field, grid = _load(args)
    run_dir = _run_dir(args, config)
    t0 = time.perf_counter()
    state = _steady_cached(run_dir, field, grid)
    consts = strip.strip_constants(field, state)
    K = args.K if args.K else 1.05 * consts["K0"]
    nu = args.nu if args.nu else 0.5 * consts["nu0"]
    epsilon = args.eps
    a0 = args.a0 if args.a0 else 1.05 * consts["a0_star"]
    margin_info = strip.decay_margin(field, state, epsilon, nu, K,
                                     grid_x=grid)
    a = a0 + margin_info["a_bar"] + 1.0
    c_hi = margin_info["c_bar"] + epsilon
    sgrid = strip.choose_strip_grid(field.period_L, a, a0, epsilon,
                                    c_max=abs(c_hi) + 1.0,
                                    n_x_min=grid.n_cells
                                    if grid.n_cells <= 64 else 32)
    if sgrid.n_x != grid.n_cells:
        # the supersolution needs the steady state on the strip's x-grid
        sub = PeriodicGrid(sgrid.n_x, field.period_L)
        marched = steady.steady_time_march(field, sub)
        state = steady.steady_newton(field, sub,
                                     (np.maximum(marched.p, 1e-14),
                                      np.maximum(marched.q, 1e-14)))
    if args.c is not None:
        sol = strip.solve_cooperative(field, sgrid, args.c, epsilon, K,
                                      state, tol=args.tol)
    else:
        sol = strip.solve_with_normalization(field, sgrid, epsilon, K, nu,
                                             state, c_hi=c_hi, tol=args.tol)
        print(f"c_star = {fmt(sol.c)}")
    print(f"norm_window = {fmt(sol.norm_window)}")
    print(f"iterations = {sol.iterations}")
    base = run_dir / "strip"
    strip.save_strip(base, sol)
    _write_manifest(run_dir, config, "strip",
                    {"eps": epsilon, "K": K, "nu": nu, "c": args.c},
                    ["strip.bin", "strip.csv"], time.perf_counter() - t0)
    return 0


def _front_level(field, grid, state):
    b = field.bounds
    pair = spectral.periodic_principal_eig(field, grid)
    nu0 = min(1.0, -pair.lam / (4.0 * b.gamma_inf),
              float(min(state.p.min(), state.q.min())))
    return 0.5 * nu0


def cmd_simulate(args):
    config, field, grid = _load(args)
    run_dir = _run_dir(args, config)
    t0 = time.perf_counter()
    sim = config.simulation
    width = args.width or int(sim.get("width_periods", 20))
    n_per = int(sim.get("n_per_period", 64))
    dt = float(sim.get("dt", 0.01))
    t_max = args.tmax or float(sim.get("t_max", 40.0))
    stride = args.emit_stride or int(sim.get("emit_stride", 25))
    lam1 = spectral.periodic_principal_eig(field, grid).lam

    # decaying scenarios start from domain-filling data so the fitted rate
    # reflects the asymptotic decay, not the spreading of a compact blob
    initial = None
    if lam1 > 0:
        u0 = np.full(width * n_per - 1, 0.125)
        initial = (u0, u0.copy())
    result = frontsim.simulate(field, width_periods=width,
                               n_per_period=n_per, dt=dt, t_max=t_max,
                               kappa=args.kappa, emit_stride=stride,
                               initial=initial)
    snap_path = run_dir / "snapshots.csv"
    rows = []
    for s in result.states[::max(1, len(result.states) // 16)]:
        for x, u, v in zip(result.x, s.u, s.v):
            rows.append((fmt(s.t), fmt(x), fmt(u), fmt(v)))
    _write_csv(snap_path, ["t", "x", "u", "v"], rows)

    speed = stderr = resid = decay = ""
    c_bar0 = ""
    if lam1 < 0:
        state = _steady_cached(run_dir, field, grid)
        level = _front_level(field, grid, state)
        traj = frontsim.level_trajectory(result, level)
        metrics = frontsim.front_speed(traj)
        speed = fmt(metrics.fitted_speed)
        stderr = fmt(metrics.speed_stderr)
        resid = fmt(frontsim.pulsating_residual(result,
                                                metrics.fitted_speed))
        c_bar0 = fmt(spectral.dispersion_curve(field, grid).c_bar)
        print(f"fitted_speed = {speed}")
        print(f"pulsating_residual = {resid}")
    else:
        decay = fmt(frontsim.extinction_rate_fit(result))
        print(f"decay_rate = {decay}")
    metrics_path = run_dir / "metrics.csv"
    _write_csv(metrics_path,
               ["scenario_id", "lambda1", "c_bar0", "fitted_speed",
                "speed_stderr", "pulsating_residual", "decay_rate"],
               [(scenario_hash(config), fmt(lam1), c_bar0, speed, stderr,
                 resid, decay)])
    _write_manifest(run_dir, config, "simulate",
                    {"width": width, "tmax": t_max, "kappa": args.kappa,
                     "emit_stride": stride},
                    [snap_path.name, metrics_path.name],
                    time.perf_counter() - t0)
    return 0


def _verify_checks(field, grid, config, run_dir):
    """Run the invariant battery; yields (name, status, detail) rows."""
    pair = spectral.periodic_principal_eig(field, grid)
    lam1 = pair.lam
    yield ("lambda1", "INFO", fmt(lam1))

    # Dirichlet eigenvalues squeeze lambda_1 from above at rate 1/R
    radii = [5.0, 10.0, 20.0, 40.0]
    lam_R = []
    for R in radii:
        n_points = max(32, int(round(2 * R * grid.n_cells
                                     / field.period_L)) - 1)
        n_points = min(n_points, 8192)
        igrid = IntervalGrid.symmetric(R, n_points)
        lam_R.append(spectral.dirichlet_principal_eig(field, igrid).lam)
    sandwich = all(lam1 <= lr for lr in lam_R)
    monotone = all(b <= a + 1e-12 for a, b in zip(lam_R, lam_R[1:]))
    gaps = [(lr - lam1) * R for lr, R in zip(lam_R, radii)]
    rate = all(g <= 2.0 * gaps[0] + 1e-12 for g in gaps)
    ok = sandwich and monotone and rate
    yield ("dirichlet_sandwich", "PASS" if ok else "FAIL",
           ";".join(fmt(v) for v in lam_R))

    if lam1 < 0:
        a0_star = 2.0 * np.sqrt(5.0 / -lam1)
        ok = True
        worst = -np.inf
        for eps in (0.0, 0.5, 1.0):
            r = spectral.strip_rayleigh_bound(field, a0_star, eps, grid=grid)
            slack = r["quadrature_value"] - r["bound_value"]
            worst = max(worst, slack)
            ok = ok and slack <= 1e-6
        yield ("rayleigh_bound", "PASS" if ok else "FAIL", fmt(worst))
        c_bars = spectral.monotonicity_check_eps(field, grid,
                                                 [0.0, 0.25, 0.5])
        ok = all(b >= a - 1e-8 * (1 + abs(b))
                 for a, b in zip(c_bars, c_bars[1:]))
        yield ("eps_monotonicity", "PASS" if ok else "FAIL",
               ";".join(fmt(c) for c in c_bars))
    else:
        yield ("rayleigh_bound", "SKIP", "lambda1 >= 0")
        yield ("eps_monotonicity", "SKIP", "lambda1 >= 0")

    if abs(lam1) < NEAR_CRITICAL_BAND:
        yield ("dichotomy", "SKIP", "near-critical band")
    else:
        state = steady.steady_time_march(field, grid, allow_extinction=True)
        ok = state.nontrivial == (lam1 < 0)
        yield ("dichotomy", "PASS" if ok else "FAIL",
               f"nontrivial={state.nontrivial}")

    sim = config.simulation
    t_max = float(sim.get("t_max", 40.0))
    width = int(sim.get("width_periods", 20))
    n_per = int(sim.get("n_per_period", 64))
    initial = None
    if lam1 > 0:
        u0 = np.full(width * n_per - 1, 0.125)
        initial = (u0, u0.copy())
    result = frontsim.simulate(
        field, width_periods=width, n_per_period=n_per,
        dt=float(sim.get("dt", 0.01)), t_max=t_max,
        emit_stride=int(sim.get("emit_stride", 25)), initial=initial)
    if lam1 < 0:
        state = _steady_cached(run_dir, field, grid, quiet=True)
        level = _front_level(field, grid, state)
        traj = frontsim.level_trajectory(result, level)
        metrics = frontsim.front_speed(traj)
        resid = frontsim.pulsating_residual(result, metrics.fitted_speed)
        ok = resid <= 0.02
        yield ("pulsation", "PASS" if ok else "FAIL", fmt(resid))
    elif lam1 > NEAR_CRITICAL_BAND:
        rate = frontsim.extinction_rate_fit(result)
        ok = abs(rate - lam1) <= 0.1 * lam1
        yield ("extinction_rate", "PASS" if ok else "FAIL", fmt(rate))
    else:
        yield ("pulsation", "SKIP", "near-critical band")


def cmd_verify(args):
    config, field, grid = _load(args)
    run_dir = _run_dir(args, config)
    t0 = time.perf_counter()
    rows = list(_verify_checks(field, grid, config, run_dir))
    width = max(len(name) for name, _, _ in rows)
    for name, status, detail in rows:
        print(f"{name:<{width}}  {status:<4}  {detail}")
    path = run_dir / "verify.csv"
    _write_csv(path, ["check", "status", "detail"], rows)
    _write_manifest(run_dir, config, "verify", {}, [path.name],
                    time.perf_counter() - t0)
    return 3 if any(status == "FAIL" for _, status, _ in rows) else 0


def _apply_axis(config, name, value):
    if name == "r_contrast":
        base = 0.5 * (config.coefficients["r_u"].mean
                      + config.coefficients["r_v"].mean)
        coeffs = dict(config.coefficients)
        coeffs["r_u"] = CoefficientSpec(base + 0.5 * value,
                                        coeffs["r_u"].harmonics)
        coeffs["r_v"] = CoefficientSpec(base - 0.5 * value,
                                        coeffs["r_v"].harmonics)
        return replace(config, coefficients=coeffs)
    if name.endswith("_mean") and name[:-5] in COEFFICIENT_NAMES:
        coef = name[:-5]
        coeffs = dict(config.coefficients)
        coeffs[coef] = CoefficientSpec(value, coeffs[coef].harmonics)
        return replace(config, coefficients=coeffs)
    raise ParseError(f"unknown sweep axis {name!r}")


def _sweep_cell(config, run_dir, axes, values):
    cell = replace(config, sweep=[])
    for (name, *_), value in zip(axes, values):
        cell = _apply_axis(cell, name, value)
    cell_hash = scenario_hash(cell)
    cell_path = run_dir / "cells" / f"{cell_hash}.csv"
    if cell_path.exists():
        return cell_path
    field = build_field(cell)
    grid = PeriodicGrid(int(cell.grid_opt("n_cells")), field.period_L)
    lam1 = spectral.periodic_principal_eig(field, grid).lam
    if lam1 < 0:
        c_bar = fmt(spectral.dispersion_curve(field, grid).c_bar)
        persistent = 1
    else:
        c_bar = ""
        persistent = 0
    cell_path.parent.mkdir(parents=True, exist_ok=True)
    row = [fmt(v) for v in values] + [fmt(lam1), c_bar, str(persistent)]
    cell_path.write_text(",".join(row) + "\n")
    return cell_path


def cmd_sweep(args):
    config = load_scenario(args.scenario)
    if not config.sweep:
        raise ParseError("sweep file has no [sweep] axes")
    axes = config.sweep
    grids = [np.linspace(lo, hi, n) for _, lo, hi, n in axes]
    if any(len(g) == 0 for g in grids):
        raise ParseError("sweep axis with zero points")
    run_dir = _run_dir(args, config)
    t0 = time.perf_counter()
    cells = list(itertools.product(*grids))
    jobs = max(1, args.jobs)
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            paths = list(pool.map(
                lambda vals: _sweep_cell(config, run_dir, axes, vals), cells))
    else:
        paths = [_sweep_cell(config, run_dir, axes, vals) for vals in cells]
    out_path = run_dir / "sweep.csv"
    header = [name for name, *_ in axes] + ["lambda1", "c_bar0", "persistent"]
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for path in paths:
            fh.write(path.read_text())
    print(f"cells = {len(cells)}")
    _write_manifest(run_dir, config, "sweep", {"jobs": jobs},
                    [out_path.name], time.perf_counter() - t0)
    return 0


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ScenarioError(message)


def build_parser():
    parser = _Parser(prog="pulsefront",
                     description="Periodic two-type reaction-diffusion "
                                 "toolkit")
    parser.add_argument("--scenario", required=True, help="scenario file")
    parser.add_argument("--out", default=None, help="output root directory")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--tol", type=float, default=1e-10)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eig")
    p.add_argument("--dirichlet", type=float, default=None, metavar="R")
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=0.0)
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("speed")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--lambda-range", default="0.02:20", dest="lambda_range")
    p.add_argument("--samples", type=int, default=41)
    p.set_defaults(func=cmd_speed)

    p = sub.add_parser("steady")
    p.add_argument("--branch", default=None, metavar="LO:HI:N")
    p.add_argument("--march", action="store_true")
    p.add_argument("--newton", action="store_true")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("strip")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--K", type=float, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--a0", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.set_defaults(func=cmd_strip)

    p = sub.add_parser("simulate")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--emit-stride", type=int, default=None,
                   dest="emit_stride")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
