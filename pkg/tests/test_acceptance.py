"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (visible with -s or on failure)
and asserts the stated tolerance.
"""

import time

import numpy as np
import pytest

from pulsefront import (
    IntervalGrid,
    PeriodicGrid,
    box_bound,
    constant_field,
    continuation_branch,
    dirichlet_principal_eig,
    dispersion_curve,
    extinction_rate_fit,
    front_speed,
    kappa_uniform_gradient_check,
    level_trajectory,
    load_scenario,
    lower_envelope_check,
    min_speed,
    monotonicity_check_eps,
    periodic_principal_eig,
    pulsating_residual,
    simulate,
    solve_cooperative,
    solve_with_normalization,
    steady_newton,
    steady_time_march,
    strip_constants,
    strip_rayleigh_bound,
)
from pulsefront.cli import main, scenario_hash
from pulsefront.spectral import (
    assemble_periodic_operator,
    dense_principal_eig,
    inverse_power_principal,
)
from pulsefront.strip import choose_strip_grid, decay_margin

from .conftest import make_harmonic_field, random_harmonic_field


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"criterion {num:02d} {name}: {status} {detail}")
    assert ok, f"criterion {num:02d} {name}: {detail}"


# --------------------------------------------------------------------------
# shared expensive runs
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def wide_homog_field():
    # constant coefficients: the period is a free bookkeeping length, chosen
    # so 40 periods comfortably contain a speed-2 front over 60 time units
    return constant_field(period_L=3.5, r_u=1.0, r_v=1.0, gamma_u=1.0,
                          gamma_v=1.0, mu=0.1)


@pytest.fixture(scope="module")
def homog_front_run(wide_homog_field):
    t0 = time.perf_counter()
    result = simulate(wide_homog_field, width_periods=40, n_per_period=64,
                      dt=0.01, t_max=60.0, emit_stride=10)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def hetero_front_run(hetero_field):
    result = simulate(hetero_field, width_periods=115, n_per_period=64,
                      dt=0.01, t_max=50.0, emit_stride=25)
    return result


# --------------------------------------------------------------------------
# 1. constant-coefficient closed forms
# --------------------------------------------------------------------------

def test_criterion_01_constant_eigenvalue_closed_forms(grid256):
    worst = 0.0
    for mu in (0.05, 0.3, 1.0):
        field = constant_field(r_u=0.7, r_v=0.7, mu=mu)
        lam = periodic_principal_eig(field, grid256).lam
        worst = max(worst, abs(lam + 0.7))
    r_u, r_v, mu = 1.2, 0.4, 0.25
    field = constant_field(r_u=r_u, r_v=r_v, mu=mu)
    exact = -((r_u + r_v) / 2 - mu
              + np.sqrt(((r_u - r_v) / 2) ** 2 + mu ** 2))
    lam = periodic_principal_eig(field, grid256).lam
    worst = max(worst, abs(lam - exact))
    _report(1, "constant-eigenvalue-closed-forms", worst <= 1e-8,
            f"max error {worst:.3g}")


# --------------------------------------------------------------------------
# 2. dense-oracle equivalence
# --------------------------------------------------------------------------

def test_criterion_02_dense_oracle_equivalence():
    rng = np.random.default_rng(42)
    grid = PeriodicGrid(48, 1.0)
    worst = 0.0
    for _ in range(10):
        field = random_harmonic_field(rng)
        K = assemble_periodic_operator(field, grid)
        lam_sparse, _, _ = inverse_power_principal(K)
        lam_dense, _, _ = dense_principal_eig(K)
        worst = max(worst, abs(lam_sparse - lam_dense))
    _report(2, "dense-oracle-equivalence", worst <= 1e-10,
            f"max deviation {worst:.3g} over 10 random fields")


# --------------------------------------------------------------------------
# 3. Dirichlet sandwich and 1/R rate
# --------------------------------------------------------------------------

def test_criterion_03_dirichlet_sandwich(hetero_field, grid256):
    lam1 = periodic_principal_eig(hetero_field, grid256).lam
    radii = [5.0, 10.0, 20.0, 40.0]
    lam_R = []
    for R in radii:
        n_points = min(int(round(2 * R * 256)) - 1, 8192)
        lam_R.append(dirichlet_principal_eig(
            hetero_field, IntervalGrid.symmetric(R, n_points)).lam)
    sandwich = all(lam1 <= lr for lr in lam_R)
    monotone = all(b <= a + 1e-12 for a, b in zip(lam_R, lam_R[1:]))
    gaps = [(lr - lam1) * R for lr, R in zip(lam_R, radii)]
    rate = all(g <= 2.0 * gaps[0] + 1e-12 for g in gaps)
    _report(3, "dirichlet-sandwich-rate", sandwich and monotone and rate,
            f"gap*R values {[round(g, 4) for g in gaps]}")


# --------------------------------------------------------------------------
# 4. KPP minimal speeds and epsilon-monotonicity
# --------------------------------------------------------------------------

def test_criterion_04_kpp_speeds(homog_field, hetero_field, grid256, grid64):
    c0 = dispersion_curve(homog_field, grid256).c_bar
    err = abs(c0 - 2.0)
    for eps in (0.1, 0.2):
        c_eps, _, _ = min_speed(homog_field, grid256, epsilon=eps)
        err = max(err, abs(c_eps - 2.0 * np.sqrt(1.0 + eps)))
    mono_ok = True
    rng = np.random.default_rng(11)
    fields = [homog_field, hetero_field,
              random_harmonic_field(rng), random_harmonic_field(rng)]
    for field in fields:
        if periodic_principal_eig(field, grid64).lam >= 0:
            continue
        c_bars = monotonicity_check_eps(field, grid64, [0.0, 0.25, 0.5, 1.0])
        mono_ok = mono_ok and all(
            b >= a - 1e-9 * (1 + abs(b))
            for a, b in zip(c_bars, c_bars[1:]))
    _report(4, "kpp-minimal-speeds", err <= 1e-6 and mono_ok,
            f"max closed-form error {err:.3g}, monotone {mono_ok}")


# --------------------------------------------------------------------------
# 5. Rayleigh strip bound
# --------------------------------------------------------------------------

def test_criterion_05_rayleigh_strip_bound(hetero_field, grid256):
    lam1 = periodic_principal_eig(hetero_field, grid256).lam
    a0_star = 2.0 * np.sqrt(5.0 / -lam1)
    worst = -np.inf
    for a0 in (a0_star, 2.0 * a0_star):
        for eps in (0.0, 0.5, 1.0):
            rep = strip_rayleigh_bound(hetero_field, a0, eps, grid=grid256)
            bound = lam1 + 2.5 / a0 ** 2 * (1.0 + eps)
            assert rep["bound_value"] == pytest.approx(bound, abs=1e-9)
            worst = max(worst, rep["quadrature_value"] - rep["bound_value"])
    _report(5, "rayleigh-strip-bound", worst <= 1e-6,
            f"worst quadrature-minus-bound {worst:.3g}")


# --------------------------------------------------------------------------
# 6. steady-state dichotomy
# --------------------------------------------------------------------------

def test_criterion_06_steady_dichotomy(grid64):
    results = []
    ok = True
    for mean in (-0.5, -0.25, 0.0, 0.25, 0.5):
        field = make_harmonic_field(r_u=(mean, 0.2, 1, 0.0),
                                    r_v=(mean, 0.15, 2, 0.9),
                                    gamma_u=(1.0,), gamma_v=(1.0,),
                                    mu=(0.1,))
        lam1 = periodic_principal_eig(field, grid64).lam
        if abs(lam1) < 1e-3:
            results.append((mean, lam1, "near-critical"))
            continue
        state = steady_time_march(field, grid64, allow_extinction=True)
        agrees = state.nontrivial == (lam1 < 0)
        ok = ok and agrees
        if state.nontrivial:
            cap = box_bound(field)
            ok = ok and state.p.min() > 0 and state.q.min() > 0
            ok = ok and max(state.p.max(), state.q.max()) <= cap + 1e-9
        results.append((mean, lam1, state.nontrivial))
    _report(6, "steady-dichotomy", ok, f"family {results}")


# --------------------------------------------------------------------------
# 7. bifurcation branch behavior
# --------------------------------------------------------------------------

def test_criterion_07_branch_behavior(hetero_field, grid64):
    lam1 = periodic_principal_eig(hetero_field, grid64).lam
    deltas = np.array([0.32, 0.16, 0.08, 0.04, 0.02, 0.01])
    points = []
    for d in deltas:
        branch = continuation_branch(hetero_field, grid64,
                                     (lam1 + d, lam1 + d), 1)
        points.append(branch[-1].norm)
    slope = np.polyfit(np.log(deltas), np.log(points), 1)[0]
    marched = steady_time_march(hetero_field, grid64)
    direct = steady_newton(hetero_field, grid64, (marched.p, marched.q))
    branch = continuation_branch(hetero_field, grid64, (lam1 + 0.05, 0.0), 8)
    tip = branch[-1]
    gap = max(np.abs(tip.steady.p - direct.p).max(),
              np.abs(tip.steady.q - direct.q).max())
    ok = slope > 0 and tip.beta == 0.0 and gap <= 1e-6
    _report(7, "branch-behavior", ok,
            f"log-log slope {slope:.3f}, beta=0 gap {gap:.3g}")


# --------------------------------------------------------------------------
# 8. strip monotone iteration and normalization
# --------------------------------------------------------------------------

def test_criterion_08_strip_monotone_iteration(homog_field):
    grid_x = PeriodicGrid(32, 1.0)
    marched = steady_time_march(homog_field, grid_x)
    steady = steady_newton(homog_field, grid_x, (marched.p, marched.q))
    consts = strip_constants(homog_field, steady)
    eps = 0.5
    K = 1.05 * consts["K0"]
    nu = 0.9 * consts["nu0"]
    info = decay_margin(homog_field, steady, eps, nu, K, grid_x=grid_x)
    c_hi = info["c_bar"] + eps
    sgrid = choose_strip_grid(1.0, a=4.0, a0=1.5, epsilon=eps,
                              c_max=c_hi + 1.0)
    norms = []
    ok = True
    for c in (0.8, 1.8):
        sol = solve_cooperative(homog_field, sgrid, c, eps, K, steady)
        certs = sol.certificates
        ok = ok and certs["iterate_monotone"] and certs["s_monotone"] \
            and certs["bounds_ok"]
        norms.append(sol.norm_window)
    ok = ok and norms[0] > norms[1]
    sol = solve_with_normalization(homog_field, sgrid, eps, K, nu, steady,
                                   c_hi=c_hi)
    ok = ok and 0.0 < sol.c < c_hi
    ok = ok and abs(sol.norm_window - nu) <= 1e-6
    ok = ok and sol.certificates["iterate_monotone"] \
        and sol.certificates["s_monotone"] and sol.certificates["bounds_ok"]
    # probes recorded during bisection must show the norm decreasing in c
    probes = sorted(sol.probes)
    ok = ok and all(n2 <= n1 + 1e-9 for (_, n1), (_, n2)
                    in zip(probes, probes[1:]))
    _report(8, "strip-monotone-iteration", ok,
            f"c*={sol.c:.6g} in (0, {c_hi:.4g}), "
            f"|norm-nu|={abs(sol.norm_window - nu):.3g}")


# --------------------------------------------------------------------------
# 9. extinction rate
# --------------------------------------------------------------------------

def test_criterion_09_extinction_rate(extinct_field, grid64):
    checks = []
    ok = True
    fields = [(extinct_field, 0.5),
              (make_harmonic_field(r_u=(-0.5, 0.2, 1, 0.0),
                                   r_v=(-0.6, 0.15, 2, 0.4)), None)]
    for field, exact in fields:
        lam1 = exact if exact is not None \
            else periodic_principal_eig(field, grid64).lam
        n = 40 * 64 - 1
        u0 = np.full(n, 0.125)
        result = simulate(field, width_periods=40, n_per_period=64, dt=0.01,
                          t_max=55.0, initial=(u0, u0.copy()),
                          emit_stride=10)
        rate = extinction_rate_fit(result)
        rel = abs(rate - lam1) / lam1
        ok = ok and rel <= 0.05
        checks.append((round(rate, 5), round(lam1, 5)))
    _report(9, "extinction-rate", ok, f"(fitted, lambda1) pairs {checks}")


# --------------------------------------------------------------------------
# 10. front formation and speed bound
# --------------------------------------------------------------------------

def test_criterion_10_front_speed(wide_homog_field, homog_front_run,
                                  hetero_field, hetero_front_run, grid256):
    result, wall = homog_front_run
    traj = level_trajectory(result, 0.125)
    metrics = front_speed(traj)
    c_bar0 = dispersion_curve(wide_homog_field,
                              PeriodicGrid(256, 3.5)).c_bar
    ok = 0.0 < metrics.fitted_speed <= 1.02 * c_bar0
    ok = ok and metrics.r_squared >= 0.99
    ok = ok and abs(metrics.fitted_speed - 2.0) <= 0.06
    ok = ok and wall <= 120.0

    het = hetero_front_run
    het_metrics = front_speed(level_trajectory(het, 0.1))
    het_c_bar0 = dispersion_curve(hetero_field, grid256).c_bar
    ok = ok and 0.0 < het_metrics.fitted_speed <= 1.02 * het_c_bar0
    ok = ok and het_metrics.r_squared >= 0.99
    _report(10, "front-speed", ok,
            f"homogeneous {metrics.fitted_speed:.5g} (R2 "
            f"{metrics.r_squared:.5f}, {wall:.1f}s), heterogeneous "
            f"{het_metrics.fitted_speed:.5g} <= 1.02*{het_c_bar0:.5g}")


# --------------------------------------------------------------------------
# 11. pulsating-front constraint
# --------------------------------------------------------------------------

def test_criterion_11_pulsating_constraint(hetero_front_run):
    result = hetero_front_run
    metrics = front_speed(level_trajectory(result, 0.1))
    resid = pulsating_residual(result, metrics.fitted_speed)
    control = pulsating_residual(result, 1.5 * metrics.fitted_speed)
    ok = resid <= 0.02 and control >= 5.0 * resid
    _report(11, "pulsating-constraint", ok,
            f"residual {resid:.4g}, 1.5c control {control:.4g} "
            f"({control / resid:.1f}x)")


# --------------------------------------------------------------------------
# 12. forward lower envelope
# --------------------------------------------------------------------------

def test_criterion_12_lower_envelope(homog_front_run):
    result, _ = homog_front_run
    rep = lower_envelope_check(result, center=20.0, half_width=10.0)
    ok = not rep.get("skipped") and rep["min_ratio"] >= 1.0 - 1e-3
    _report(12, "lower-envelope", ok,
            f"min ratio {rep.get('min_ratio', float('nan')):.6f} after "
            f"t={rep.get('crossing_time')}")


# --------------------------------------------------------------------------
# 13. kappa-uniform interior gradients
# --------------------------------------------------------------------------

def test_criterion_13_kappa_uniform_gradients(hetero_field):
    t0 = time.perf_counter()
    n = 16 * 32 - 1
    u0 = np.full(n, 0.125)
    rep = kappa_uniform_gradient_check(
        hetero_field, [1.0, 0.1, 0.01, 0.001], width_periods=16,
        t_max=20.0, initial=(u0, u0.copy()),
        probe_box={"t": (12.0, 20.0), "x": (3.0, 13.0)})
    wall = time.perf_counter() - t0
    ok = rep["uniform"] and rep["spread"] < 2.0 and wall <= 300.0
    _report(13, "kappa-uniform-gradients", ok,
            f"spread {rep['spread']:.4f} across kappa, {wall:.1f}s")


# --------------------------------------------------------------------------
# 14. CLI determinism
# --------------------------------------------------------------------------

SCENARIO_14 = """\
period_L = 1.0

[r_u]
mean = -0.5

[r_v]
mean = -0.5

[gamma_u]
mean = 1.0

[gamma_v]
mean = 1.0

[mu]
mean = 0.1

[grid]
n_cells = 64
"""


def test_criterion_14_cli_determinism(tmp_path, capsys):
    scn = tmp_path / "case.scn"
    scn.write_text(SCENARIO_14)
    outputs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        rc = main(["--scenario", str(scn), "--out", str(out), "verify"])
        assert rc == 0
        run_dir = out / "runs" / scenario_hash(load_scenario(str(scn)))
        outputs.append(((run_dir / "verify.csv").read_bytes(),
                        capsys.readouterr().out))
    ok = outputs[0][0] == outputs[1][0] and outputs[0][1] == outputs[1][1]
    _report(14, "cli-determinism", ok,
            f"verify.csv {len(outputs[0][0])} bytes bit-identical")
