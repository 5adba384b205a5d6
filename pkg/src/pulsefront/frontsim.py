"""Time-domain simulation of the two-type system on a wide interval.

Integrates

    u_t = u_xx + u (r_u - gamma_u (u + v)) + mu (v - u)    (and symmetrically v)

with homogeneous Dirichlet far-field conditions, tracks the rightmost
level-set position to measure the invasion speed, verifies the pulsating
constraint u(t + L/c, x) = u(t, x - L), fits extinction rates, and checks
that the interior gradient functional stays bounded uniformly in the
damped-wave regularization weight kappa (kappa u_tt + u_t = u_xx + ...).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BlowUp,
    BoundaryContamination,
    FitRejected,
    NeverCrossed,
    NoFront,
    ProbeOutOfRange,
    SimulationUnconverged,
    WindowTooShort,
)
from .fields import CoefficientField, IntervalGrid
from .spectral import dirichlet_principal_eig


@dataclass(frozen=True)
class SimulationState:
    t: float
    u: np.ndarray
    v: np.ndarray
    ut: np.ndarray
    vt: np.ndarray
    step_index: int
    clip_count: int


@dataclass(frozen=True)
class SimulationResult:
    states: list
    x: np.ndarray
    h: float
    dt: float
    n_per_period: int
    kappa: float
    field: CoefficientField


@dataclass(frozen=True)
class FrontMetrics:
    level: float
    trajectory: list
    fitted_speed: float
    speed_stderr: float
    r_squared: float


def default_initial(field: CoefficientField, x, height=0.25):
    """Compactly supported plateau on the leftmost period."""
    u = np.where(x <= field.period_L, 0.5 * height, 0.0)
    return u, u.copy()


def simulate(field: CoefficientField, width_periods=20, n_per_period=64,
             dt=0.01, t_max=40.0, initial=None, kappa=0.0,
             emit_stride=25) -> SimulationResult:
    """Run the parabolic (kappa = 0) or damped-wave (kappa > 0) system.

    Diffusion is Crank-Nicolson implicit, reaction and mutation explicit.
    For kappa > 0 the auxiliary velocity w = u_t is advanced by
    (kappa/dt + 1 - dt*Lap) w_new = (kappa/dt) w + Lap u + f, then
    u_new = u + dt*w_new; dt is clamped to 0.5*sqrt(kappa)*h for the
    hyperbolic part.  Emits states (with time derivatives) every
    emit_stride steps.
    """
    L = field.period_L
    h = L / n_per_period
    n_nodes = width_periods * n_per_period - 1  # interior nodes
    x = h * np.arange(1, n_nodes + 1)
    ru = field.sample("r_u", x)
    rv = field.sample("r_v", x)
    gu = field.sample("gamma_u", x)
    gv = field.sample("gamma_v", x)
    mu = field.sample("mu", x)
    if kappa > 0:
        dt = min(dt, 0.5 * np.sqrt(kappa) * h)
    if initial is None:
        u, v = default_initial(field, x)
    else:
        u = np.array(initial[0], dtype=float)
        v = np.array(initial[1], dtype=float)
    b = field.bounds
    blowup_cap = 10.0 * max(2.0 * b.r_inf / b.gamma0, float(np.max(u + v)), 1.0)

    main = np.full(n_nodes, -2.0 / h**2)
    off = np.full(n_nodes - 1, 1.0 / h**2)
    Lap = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    I = sp.identity(n_nodes, format="csr")

    def reaction(u, v):
        fu = u * (ru - gu * (u + v)) + mu * (v - u)
        fv = v * (rv - gv * (u + v)) + mu * (u - v)
        return fu, fv

    if kappa > 0:
        wave_lu = spla.splu(((kappa / dt + 1.0) * I - dt * Lap).tocsc())
        wu = np.zeros(n_nodes)
        wv = np.zeros(n_nodes)
    else:
        cn_lu = spla.splu((I - 0.5 * dt * Lap).tocsc())
        cn_rhs = (I + 0.5 * dt * Lap).tocsr()

    n_steps = int(round(t_max / dt))
    clip_count = 0
    states = []
    # Front tracking needs an uncontaminated right tail; if the initial
    # data already reaches the right end there is no tail to protect.
    guard_right = u[-1] + v[-1] <= 1e-8

    def emit(step, t, u, v, wu=None, wv=None):
        fu, fv = reaction(u, v)
        ut = wu if wu is not None else Lap @ u + fu
        vt = wv if wv is not None else Lap @ v + fv
        states.append(SimulationState(t=t, u=u.copy(), v=v.copy(),
                                      ut=np.asarray(ut).copy(),
                                      vt=np.asarray(vt).copy(),
                                      step_index=step,
                                      clip_count=clip_count))

    emit(0, 0.0, u, v, wu if kappa > 0 else None, wv if kappa > 0 else None)
    for step in range(1, n_steps + 1):
        fu, fv = reaction(u, v)
        if kappa > 0:
            wu = wave_lu.solve((kappa / dt) * wu + Lap @ u + fu)
            wv = wave_lu.solve((kappa / dt) * wv + Lap @ v + fv)
            u = u + dt * wu
            v = v + dt * wv
        else:
            u = cn_lu.solve(cn_rhs @ u + dt * fu)
            v = cn_lu.solve(cn_rhs @ v + dt * fv)
        for w in (u, v):
            bad = w < -1e-13
            if bad.any():
                clip_count += int(np.count_nonzero(bad))
            np.clip(w, 0.0, None, out=w)
        if step % emit_stride == 0 or step == n_steps:
            sup = float(np.max(u + v))
            if sup > blowup_cap:
                raise BlowUp(
                    f"sup(u+v)={sup:.3g} exceeds cap {blowup_cap:.3g} at "
                    f"t={step * dt:.4g}; reduce dt")
            if guard_right and u[-1] + v[-1] > 1e-8:
                raise BoundaryContamination(
                    f"right-boundary value {u[-1] + v[-1]:.3g} at "
                    f"t={step * dt:.4g}; widen the domain")
            emit(step, step * dt, u, v,
                 wu if kappa > 0 else None, wv if kappa > 0 else None)
    return SimulationResult(states=states, x=x, h=h, dt=dt,
                            n_per_period=n_per_period, kappa=kappa,
                            field=field)


# --------------------------------------------------------------------------
# Front metrics
# --------------------------------------------------------------------------

def level_position(x, total, level):
    """Rightmost crossing of total >= level, sub-cell linear interpolation.
    Returns None if the level is never reached."""
    above = np.nonzero(total >= level)[0]
    if len(above) == 0:
        return None
    j = above[-1]
    if j == len(x) - 1:
        return float(x[j])
    frac = (total[j] - level) / (total[j] - total[j + 1])
    return float(x[j] + frac * (x[j + 1] - x[j]))


def level_trajectory(result: SimulationResult, level):
    return [(s.t, level_position(result.x, s.u + s.v, level))
            for s in result.states]


def front_speed(trajectory, transient_cut=0.3, min_samples=50,
                r2_min=0.99) -> FrontMetrics:
    """Least-squares speed of the level-set trajectory after the transient."""
    valid = [(t, pos) for t, pos in trajectory if pos is not None]
    if not valid:
        raise NoFront("level never reached; no front to fit")
    t_end = valid[-1][0]
    t_cut = valid[0][0] + transient_cut * (t_end - valid[0][0])
    tail = [(t, pos) for t, pos in valid if t >= t_cut]
    if len(tail) < min_samples:
        raise NoFront(
            f"only {len(tail)} post-transient samples (need {min_samples})")
    ts = np.array([t for t, _ in tail])
    xs = np.array([pos for _, pos in tail])
    (slope, intercept), cov = np.polyfit(ts, xs, 1, cov=True)
    pred = slope * ts + intercept
    ss_res = float(np.sum((xs - pred) ** 2))
    ss_tot = float(np.sum((xs - xs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if r2 < r2_min:
        raise FitRejected(f"front fit R^2={r2:.4f} < {r2_min}")
    level = None
    return FrontMetrics(level=level, trajectory=trajectory,
                        fitted_speed=float(slope),
                        speed_stderr=float(np.sqrt(cov[0, 0])),
                        r_squared=r2)


def _interp_state(states, t):
    ts = np.array([s.t for s in states])
    if t < ts[0] or t > ts[-1]:
        raise ProbeOutOfRange(
            f"time {t:.4g} outside stored range [{ts[0]:.4g}, {ts[-1]:.4g}]")
    k = int(np.searchsorted(ts, t))
    if k == 0:
        return states[0].u, states[0].v
    s0, s1 = states[k - 1], states[k]
    w = (t - s0.t) / (s1.t - s0.t) if s1.t > s0.t else 0.0
    return ((1 - w) * s0.u + w * s1.u, (1 - w) * s0.v + w * s1.v)


def pulsating_residual(result: SimulationResult, c, n_probes=8,
                       probe_window=(0.5, 1.0), edge_margin=10.0):
    """Relative sup-norm defect of u(t + L/c, x) vs u(t, x - L).

    The spatial shift by one period is an integer number of cells.  Probes
    are spread over probe_window (fractions of the horizon), each needing
    t + L/c inside the stored range.  Nodes within edge_margin (a length,
    covering several e-folds of the O(1) decay of the Dirichlet boundary
    layers) of either end are excluded so the pinned layers do not pollute
    the defect of the travelling profile.
    """
    if c <= 0:
        raise ValueError("need a positive speed")
    L = result.field.period_L
    T = L / c
    states = result.states
    t0, t1 = states[0].t, states[-1].t
    lo = t0 + probe_window[0] * (t1 - t0)
    hi = min(t0 + probe_window[1] * (t1 - t0), t1 - T)
    if hi <= lo:
        raise ProbeOutOfRange(
            f"horizon too short for time shift L/c = {T:.4g}")
    shift = result.n_per_period
    margin = int(np.ceil(edge_margin / result.h))
    n = len(result.x)
    if n - shift - 2 * margin < shift:
        raise ProbeOutOfRange("domain too narrow for the edge margins")
    worst = 0.0
    for t in np.linspace(lo, hi, n_probes):
        u_t, v_t = _interp_state(states, t)
        u_T, v_T = _interp_state(states, t + T)
        sup = max(float(np.max(u_t)), float(np.max(v_t)))
        for late, early in ((u_T, u_t), (v_T, v_t)):
            diff = late[shift + margin:n - margin] - early[margin:n - shift - margin]
            worst = max(worst, float(np.max(np.abs(diff))) / sup)
    return worst


def extinction_rate_fit(result: SimulationResult, sup_range=(1e-10, 1e-2),
                        min_samples=30):
    """Exponential decay exponent of sup(u+v) fitted in the linear-decay
    window; positive return value means decay."""
    samples = [(s.t, float(np.max(s.u + s.v))) for s in result.states]
    window = [(t, sup) for t, sup in samples
              if sup_range[0] <= sup <= sup_range[1]]
    if len(window) < min_samples:
        raise WindowTooShort(
            f"only {len(window)} samples with sup in {sup_range}; "
            "extend t_max or adjust emit_stride")
    ts = np.array([t for t, _ in window])
    logs = np.log([sup for _, sup in window])
    slope = np.polyfit(ts, logs, 1)[0]
    return -float(slope)


# --------------------------------------------------------------------------
# Lower envelope (persistence floor)
# --------------------------------------------------------------------------

def envelope_alpha0(lam1_b, component_ratio, field: CoefficientField):
    """Largest admissible envelope amplitude for the persistence floor."""
    b = field.bounds
    return min(1.0,
               -lam1_b / (2.0 * (1.0 + 2.0 * component_ratio) * b.gamma_inf),
               b.mu0 / (2.0 * b.gamma_inf))


def lower_envelope_check(result: SimulationResult, center, half_width,
                         alpha=None):
    """Once (u, v) dominates alpha * Phi_b on the window, it must keep
    dominating it at all later stored times.

    Phi_b is the Dirichlet principal eigenpair on (center - b, center + b),
    sampled on the simulation grid (center and b snapped to grid nodes).
    Returns a report dict with the minimal ratio over later times.
    """
    h = result.h
    field = result.field
    k_lo = int(round((center - half_width) / h))
    k_hi = int(round((center + half_width) / h))
    if k_lo < 1 or k_hi > len(result.x):
        raise ValueError("envelope window exceeds the simulation domain")
    igrid = IntervalGrid(a=k_lo * h, b=k_hi * h, n_points=k_hi - k_lo - 1)
    pair = dirichlet_principal_eig(field, igrid)
    if pair.lam >= 0:
        raise ValueError(
            f"window eigenvalue {pair.lam:.6g} >= 0; enlarge half_width")
    alpha0 = envelope_alpha0(pair.lam, pair.component_ratio, field)
    if alpha is None:
        alpha = alpha0
    if alpha > alpha0:
        return {"skipped": True, "alpha": alpha, "alpha0": alpha0,
                "reason": "alpha above the admissible envelope amplitude"}
    sl = slice(k_lo, k_hi - 1)  # simulation indices of interior window nodes
    phi = alpha * pair.phi
    psi = alpha * pair.psi
    crossing_index = None
    for idx, s in enumerate(result.states):
        if np.all(s.u[sl] >= phi) and np.all(s.v[sl] >= psi):
            crossing_index = idx
            break
    if crossing_index is None:
        raise NeverCrossed(
            f"(u, v) never dominated alpha*Phi_b (alpha={alpha:.4g})")
    min_ratio = np.inf
    for s in result.states[crossing_index:]:
        ratio = min(float(np.min(s.u[sl] / phi)),
                    float(np.min(s.v[sl] / psi)))
        min_ratio = min(min_ratio, ratio)
    return {"skipped": False, "alpha": alpha, "alpha0": alpha0,
            "lambda1_b": pair.lam,
            "crossing_time": result.states[crossing_index].t,
            "min_ratio": min_ratio}


# --------------------------------------------------------------------------
# kappa-uniform interior gradient bound
# --------------------------------------------------------------------------

def gradient_functional(result: SimulationResult, state: SimulationState):
    """|u_x|^2 + |v_x|^2 + kappa (|u_t|^2 + |v_t|^2) at interior nodes."""
    h = result.h
    ux = np.gradient(state.u, h)
    vx = np.gradient(state.v, h)
    return ux**2 + vx**2 + result.kappa * (state.ut**2 + state.vt**2)


def kappa_uniform_gradient_check(field: CoefficientField, kappa_list,
                                 probe_box=None, width_periods=16,
                                 n_per_period=32, dt=0.01, t_max=20.0,
                                 emit_stride=25, initial=None):
    """Interior gradient functional across a descending kappa sweep.

    At probes inside the space-time box, the quantity normalized by
    (1 + 1/d^2) (d = distance to the box boundary) must stay within 2x of
    its kappa = max value.  Probes closer than 2 grid cells to the box
    boundary are skipped (the 1/d^2 weight degenerates).
    """
    kappa_list = list(kappa_list)
    if any(b > a for a, b in zip(kappa_list, kappa_list[1:])):
        raise ValueError("kappa_list must be descending")
    values = {}
    for kappa in kappa_list:
        result = simulate(field, width_periods=width_periods,
                          n_per_period=n_per_period, dt=dt, t_max=t_max,
                          kappa=kappa, emit_stride=emit_stride,
                          initial=initial)
        if probe_box is None:
            x1 = result.x[-1]
            box = {"t": (0.3 * t_max, t_max), "x": (0.1 * x1, 0.7 * x1)}
        else:
            box = probe_box
        ts = np.linspace(box["t"][0], box["t"][1], 7)[1:-1]
        xs = np.linspace(box["x"][0], box["x"][1], 9)[1:-1]
        worst = 0.0
        n_used = 0
        for t in ts:
            state = min(result.states, key=lambda s: abs(s.t - t))
            g = gradient_functional(result, state)
            for xp in xs:
                d = min(t - box["t"][0], box["t"][1] - t,
                        xp - box["x"][0], box["x"][1] - xp)
                if d < 2.0 * result.h:
                    continue
                j = int(round(xp / result.h)) - 1
                worst = max(worst, float(g[j]) / (1.0 + 1.0 / d**2))
                n_used += 1
        if n_used == 0:
            raise SimulationUnconverged(
                "no usable probes inside the space-time box")
        values[kappa] = worst
    lo = min(values.values())
    spread = max(values.values()) / lo if lo > 0 else np.inf
    return {"values": values, "reference_kappa": kappa_list[0],
            "spread": spread, "uniform": bool(spread < 2.0)}
