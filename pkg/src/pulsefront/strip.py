"""Cooperative strip problem in the wave frame, solved by monotone iteration.

The unknown pair (u, v) lives on the rectangle (s, x) in (-a, a) x (0, L),
Dirichlet in s (boundary data (Kp, Kq) at s = -a, zero at s = a) and
periodic in x.  The elliptic operator is

    L_eps - c d_s = -d_xx - 2 d_xs - (1+eps) d_ss - c d_s,

and the reaction keeps only the cooperative couplings: the cross-competition
terms are frozen at the steady-state profile divided by K, so comparison
arguments (and the monotone iteration they justify) apply.  The speed c is
then pinned by bisection on the window normalization sup(u+v) = nu.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BracketFailure,
    IterationStalled,
    MonotonicityBroken,
    StencilNotMonotone,
)
from .fields import CoefficientField
from .steady import SteadyState

DEFAULT_MARGIN = 0.05


@dataclass(frozen=True)
class StripGrid:
    """Uniform rectangle grid: s in [-a, a] (n_s nodes, rows 0 and n_s-1
    are the Dirichlet rows), x over one period (n_x nodes, cyclic).
    a0 marks the normalization window (-a0, a0)."""

    a: float
    a0: float
    n_s: int
    n_x: int
    period_L: float

    def __post_init__(self):
        if not (0 < self.a0 <= self.a):
            raise ValueError("need 0 < a0 <= a")
        if self.n_s < 32 or self.n_x < 32:
            raise ValueError("need n_s >= 32 and n_x >= 32")

    @property
    def h_s(self):
        return 2.0 * self.a / (self.n_s - 1)

    @property
    def h_x(self):
        return self.period_L / self.n_x

    @property
    def s(self):
        return -self.a + self.h_s * np.arange(self.n_s)

    @property
    def x(self):
        return self.h_x * np.arange(self.n_x)

    @property
    def window_rows(self):
        return np.abs(self.s) < self.a0


@dataclass
class StripSolution:
    u: np.ndarray
    v: np.ndarray
    c: float
    epsilon: float
    K: float
    iterations: int
    norm_window: float
    grid: StripGrid
    certificates: dict
    nu: float | None = None
    probes: list = dc_field(default_factory=list)


def aspect_interval(epsilon, margin=DEFAULT_MARGIN):
    """Admissible h_s/h_x interval for a monotone (M-matrix) stencil."""
    lo = 1.0 / (1.0 - margin)
    hi = (1.0 + epsilon) * (1.0 - margin)
    return lo, hi


def choose_strip_grid(period_L, a, a0, epsilon, c_max,
                      margin=DEFAULT_MARGIN, n_x_min=32) -> StripGrid:
    """Pick grid resolutions satisfying the dominance condition at |c| <=
    c_max, with h_s/h_x in the middle of the admissible interval."""
    lo, hi = aspect_interval(epsilon, margin)
    if lo >= hi:
        raise StencilNotMonotone(
            f"no admissible aspect ratio: eps={epsilon:.3g} too small for "
            f"margin {margin:.3g}; need (1+eps)(1-margin)^2 > 1")
    rho = 0.5 * (lo + hi)
    h_x = period_L / n_x_min
    if c_max > 0:
        # transport entries must not flip the s-neighbor signs
        h_s_cap = 2.0 * ((1.0 + epsilon) - rho) / c_max
        h_x = min(h_x, h_s_cap / rho)
    n_x = max(n_x_min, int(np.ceil(period_L / h_x)))
    h_x = period_L / n_x
    h_s = rho * h_x
    n_s = max(32, int(np.ceil(2.0 * a / h_s)) + 1)
    return StripGrid(a=a, a0=a0, n_s=n_s, n_x=n_x, period_L=period_L)


def _shift(n, k):
    """Matrix picking the neighbor k rows away in s (no wraparound)."""
    return sp.eye(n, n, k=k, format="csr")


def _cyclic_shift(n, k):
    idx = (np.arange(n) + k) % n
    return sp.csr_matrix((np.ones(n), (np.arange(n), idx)), shape=(n, n))


def assemble_Leps(grid: StripGrid, epsilon, c=0.0, margin=DEFAULT_MARGIN):
    """Scalar discrete L_eps - c d_s with identity rows at s = +-a.

    The mixed derivative -2 d_xs uses the averaged corner stencil
    (forward-forward plus backward-backward cross differences), whose
    off-sign axial entries are dominated by the diffusion stencils exactly
    when 2/(h_s h_x) <= min(2/h_x^2, (1+eps) 2/h_s^2) (1 - margin); the
    assembler rejects grids violating this or the transport sign condition.
    """
    hs, hx = grid.h_s, grid.h_x
    cross = 2.0 / (hs * hx)
    if cross > min(2.0 / hx**2, (1.0 + epsilon) * 2.0 / hs**2) * (1.0 - margin):
        lo, hi = aspect_interval(epsilon, margin)
        raise StencilNotMonotone(
            f"aspect ratio h_s/h_x = {hs / hx:.4g} outside [{lo:.4g}, "
            f"{hi:.4g}] required for a monotone stencil at eps={epsilon:.3g}")
    s_entry = -(1.0 + epsilon) / hs**2 + 1.0 / (hs * hx)
    if s_entry + abs(c) / (2.0 * hs) > 0:
        c_cap = 2.0 * ((1.0 + epsilon) / hs - 1.0 / hx)
        raise StencilNotMonotone(
            f"transport speed |c|={abs(c):.4g} exceeds the monotone stencil "
            f"cap {c_cap:.4g}; refine h_s")

    ns, nx = grid.n_s, grid.n_x
    Ix = sp.identity(nx, format="csr")
    Is = sp.identity(ns, format="csr")
    Xp, Xm = _cyclic_shift(nx, 1), _cyclic_shift(nx, -1)
    Sp, Sm = _shift(ns, 1), _shift(ns, -1)

    d2x = (2.0 * Ix - Xp - Xm) / hx**2
    d2s = (2.0 * Is - Sp - Sm) / hs**2
    fwd_s, bwd_s = (Sp - Is) / hs, (Is - Sm) / hs
    fwd_x, bwd_x = (Xp - Ix) / hx, (Xm - Ix) / (-hx)
    op = (sp.kron(Is, d2x)
          + (1.0 + epsilon) * sp.kron(d2s, Ix)
          - sp.kron(fwd_s, fwd_x) - sp.kron(bwd_s, bwd_x)
          - c * sp.kron((Sp - Sm) / (2.0 * hs), Ix))

    interior = np.ones(ns)
    interior[0] = interior[-1] = 0.0
    D_int = sp.kron(sp.diags(interior), Ix)
    D_bnd = sp.kron(sp.diags(1.0 - interior), Ix)
    return (D_int @ op + D_bnd).tocsr()


def penalization_constant(field: CoefficientField, K, steady: SteadyState):
    """M making the frozen-competition reaction plus M*Id nondecreasing on
    the box [0, C]^2, with C the a priori sup bound."""
    b = field.bounds
    C = max(2.0 * b.r_inf / b.gamma0,
            K * float(np.max(steady.p + steady.q)))
    M = b.r_inf + b.mu_inf + 2.0 * b.gamma_inf * C
    return M, C


def strip_constants(field: CoefficientField, steady: SteadyState):
    """Window size floor a0*, normalization cap nu0 and amplification floor
    K0, computed from lambda_1 and the steady state."""
    from .spectral import PeriodicGrid, periodic_principal_eig
    grid = PeriodicGrid(len(steady.p), field.period_L)
    lam1 = periodic_principal_eig(field, grid).lam
    if lam1 >= 0:
        raise ValueError(f"strip setup requires lambda_1 < 0, got {lam1:.6g}")
    b = field.bounds
    p, q = steady.p, steady.q
    a0_star = 2.0 * np.sqrt(5.0 / -lam1)
    nu0 = min(1.0, -lam1 / (4.0 * b.gamma_inf),
              float(min(p.min(), q.min())))
    K0 = max(8.0 * b.gamma_inf * float(np.max(p + q)) / -lam1,
             1.0 + float(np.max(np.maximum(p / q, q / p))))
    return {"lambda1": lam1, "a0_star": a0_star, "nu0": nu0, "K0": K0}


def decay_margin(field: CoefficientField, steady: SteadyState, epsilon, nu, K,
                 grid_x=None):
    """Extra strip length a_bar ensuring the window norm falls below nu/2
    for c >= c_bar^eps, from the exponential supersolution rate lam0."""
    from .spectral import PeriodicGrid, min_speed
    if grid_x is None:
        grid_x = PeriodicGrid(len(steady.p), field.period_L)
    c_bar, lam0, pair = min_speed(field, grid_x, epsilon=epsilon)
    phi_min = float(min(pair.phi.min(), pair.psi.min()))
    pq_max = float(max(steady.p.max(), steady.q.max()))
    a_bar = max(-np.log(nu * phi_min / (4.0 * K * pq_max)) / lam0, 1.0)
    return {"a_bar": a_bar, "c_bar": c_bar, "lam0": lam0, "pair": pair}


def solve_cooperative(field: CoefficientField, grid: StripGrid, c, epsilon, K,
                      steady: SteadyState, M=None, tol=1e-10,
                      max_sweeps=20000, margin=DEFAULT_MARGIN,
                      max_M_doublings=3, initial=None) -> StripSolution:
    """Monotone iteration downward from the supersolution (Kp, Kq).

    Each sweep solves (L_eps - c d_s + M) w_new = f(x, w) + M w for the two
    components separately (the mutation coupling sits on the right-hand
    side), so iterates decrease pointwise from the supersolution.  Raises
    MonotonicityBroken only after doubling M max_M_doublings times.

    `initial` may supply an alternative starting supersolution, e.g. the
    solution at a smaller speed: since solutions decrease in both c and
    the sweep index, the solution at c' < c is a supersolution for c
    (its s-derivative is nonpositive), which makes warm starts admissible.
    """
    if len(steady.p) != grid.n_x:
        raise ValueError("steady-state resolution must match n_x")
    x = grid.x
    ru = field.sample("r_u", x)
    rv = field.sample("r_v", x)
    gu = field.sample("gamma_u", x)
    gv = field.sample("gamma_v", x)
    mu = field.sample("mu", x)
    p, q = steady.p, steady.q
    M_auto, C = penalization_constant(field, K, steady)
    M_val = M_auto if M is None else M

    op = assemble_Leps(grid, epsilon, c, margin)
    ns, nx = grid.n_s, grid.n_x
    interior = np.ones(ns)
    interior[0] = interior[-1] = 0.0
    int_flat = np.repeat(interior, nx)

    bc_u = np.zeros((ns, nx))
    bc_v = np.zeros((ns, nx))
    bc_u[0] = K * p
    bc_v[0] = K * q

    def reaction(u, v):
        fu = u * (ru - gu * (u + q / K)) + mu * v - mu * u
        fv = v * (rv - gv * (p / K + v)) + mu * u - mu * v
        return fu, fv

    # roundoff slack for the iterate-monotonicity certificate, scaled to
    # the supersolution magnitude (LU solves carry relative roundoff)
    mono_slack = 1e-12 * max(1.0, K * float(max(p.max(), q.max())))
    for attempt in range(max_M_doublings + 1):
        A = (op + sp.diags(int_flat * M_val)).tocsc()
        lu = spla.splu(A)
        if initial is None:
            u = np.tile(K * p, (ns, 1))
            v = np.tile(K * q, (ns, 1))
        else:
            u = np.array(initial[0], dtype=float)
            v = np.array(initial[1], dtype=float)
        u[0], v[0] = bc_u[0], bc_v[0]
        u[-1], v[-1] = 0.0, 0.0
        iterate_monotone = True
        stall = 0
        prev_step = np.inf
        broken = False
        for sweep in range(1, max_sweeps + 1):
            fu, fv = reaction(u, v)
            rhs_u = (fu + M_val * u) * interior[:, None] + bc_u
            rhs_v = (fv + M_val * v) * interior[:, None] + bc_v
            sol2 = lu.solve(np.column_stack([rhs_u.ravel(), rhs_v.ravel()]))
            u_new = sol2[:, 0].reshape(ns, nx)
            v_new = sol2[:, 1].reshape(ns, nx)
            # reimpose the Dirichlet rows exactly (identity rows pick up
            # solver roundoff otherwise)
            u_new[0], v_new[0] = bc_u[0], bc_v[0]
            u_new[-1], v_new[-1] = 0.0, 0.0
            step = max(float(np.max(np.abs(u_new - u))),
                       float(np.max(np.abs(v_new - v))))
            increase = max(float((u_new - u).max()),
                           float((v_new - v).max()))
            # genuine comparison-principle failures show up at the scale
            # of the sweep step; smaller upticks are LU roundoff
            if increase > max(mono_slack, 1e-2 * step):
                broken = True
                break
            u, v = u_new, v_new
            if step <= tol:
                break
            stall = stall + 1 if step >= prev_step else 0
            if stall >= 50:
                raise IterationStalled(
                    f"monotone sweep step stuck at {step:.3g} > {tol:.3g} "
                    f"for 50 sweeps (sweep {sweep})")
            prev_step = step
        if broken:
            M_val *= 2.0
            continue
        if step > tol:
            raise IterationStalled(
                f"monotone iteration did not reach {tol:.3g} in "
                f"{max_sweeps} sweeps (last step {step:.3g})")
        break
    else:
        raise MonotonicityBroken(
            f"iterates increased even with M={M_val:.4g} "
            f"(after {max_M_doublings} doublings)")

    ds_u = np.diff(u, axis=0).max()
    ds_v = np.diff(v, axis=0).max()
    inner_u, inner_v = u[1:-1], v[1:-1]
    certificates = {
        "iterate_monotone": iterate_monotone,
        "s_monotone": bool(max(ds_u, ds_v) <= 1e-10),
        "bounds_ok": bool(
            inner_u.min() > 0 and inner_v.min() > 0
            and (inner_u < K * p[None, :]).all()
            and (inner_v < K * q[None, :]).all()),
        "M": M_val,
        "C": C,
    }
    window = grid.window_rows
    norm_window = float(np.max(u[window] + v[window]))
    return StripSolution(u=u, v=v, c=float(c), epsilon=epsilon, K=K,
                         iterations=sweep, norm_window=norm_window,
                         grid=grid, certificates=certificates)


def solve_with_normalization(field: CoefficientField, grid: StripGrid,
                             epsilon, K, nu, steady: SteadyState, c_hi,
                             tol_norm=1e-6, max_bisect=60,
                             **solve_kwargs) -> StripSolution:
    """Bisect on c until the window norm sup(u+v) over (-a0, a0) equals nu.

    The norm decreases in c, so the bracket is checked first: the c = 0
    solve must sit above nu and the solve at c_hi (a speed beyond the
    dispersion bound) below nu/2.
    """
    # near the critical speed the contraction rate degrades, so the probes
    # get a larger sweep budget than a single fixed-c solve
    solve_kwargs.setdefault("max_sweeps", 100000)
    probes = []
    cache = {}  # c -> solution, for supersolution warm starts

    def norm_at(c):
        c = float(c)
        below = [cp for cp in cache if cp < c]
        initial = None
        if below:
            prev = cache[max(below)]
            initial = (prev.u, prev.v)
        sol = solve_cooperative(field, grid, c, epsilon, K, steady,
                                initial=initial, **solve_kwargs)
        cache[c] = sol
        probes.append((c, sol.norm_window))
        return sol

    lo_sol = norm_at(0.0)
    if lo_sol.norm_window <= nu:
        raise BracketFailure(
            f"window norm at c=0 is {lo_sol.norm_window:.6g} <= nu={nu:.6g}; "
            "normalization cannot bracket (nu too large or strip too short)")
    hi_sol = norm_at(c_hi)
    if hi_sol.norm_window >= 0.5 * nu:
        raise BracketFailure(
            f"window norm at c={c_hi:.6g} is {hi_sol.norm_window:.6g} "
            f">= nu/2 = {0.5 * nu:.6g}; increase the strip length a")
    # Illinois-damped regula falsi on norm(c) - nu, bracket-preserving
    c_lo, f_lo = 0.0, lo_sol.norm_window - nu
    c_up, f_up = float(c_hi), hi_sol.norm_window - nu
    best = None
    for _ in range(max_bisect):
        c_mid = (c_lo * f_up - c_up * f_lo) / (f_up - f_lo)
        if not (c_lo < c_mid < c_up):
            c_mid = 0.5 * (c_lo + c_up)
        sol = norm_at(c_mid)
        f_mid = sol.norm_window - nu
        if best is None or abs(f_mid) < abs(best.norm_window - nu):
            best = sol
        if abs(f_mid) <= tol_norm:
            break
        if f_mid > 0:
            c_lo, f_lo = c_mid, f_mid
            f_up *= 0.5
        else:
            c_up, f_up = c_mid, f_mid
            f_lo *= 0.5
    if best is None or abs(best.norm_window - nu) > tol_norm:
        raise BracketFailure(
            f"bisection did not pin the window norm to {nu:.6g} +- "
            f"{tol_norm:.1g} (closest {best.norm_window:.6g})")
    best.nu = nu
    best.probes = probes
    return best


def save_strip(path_base, sol: StripSolution):
    """Binary dump (n_s, n_x, h_s, h_x header then row-major u then v)
    plus a CSV summary."""
    g = sol.grid
    with open(str(path_base) + ".bin", "wb") as fh:
        fh.write(struct.pack("<qqdd", g.n_s, g.n_x, g.h_s, g.h_x))
        fh.write(np.ascontiguousarray(sol.u, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sol.v, dtype="<f8").tobytes())
    with open(str(path_base) + ".csv", "w", encoding="utf-8") as fh:
        fh.write("c,epsilon,K,nu,iterations,norm_window\n")
        nu = "" if sol.nu is None else format(sol.nu, ".12g")
        fh.write(f"{sol.c:.12g},{sol.epsilon:.12g},{sol.K:.12g},{nu},"
                 f"{sol.iterations},{sol.norm_window:.12g}\n")


def load_strip(path_base) -> StripSolution:
    """Inverse of save_strip.  Certificates, probes, and the window
    half-width a0 are not persisted; the reconstructed grid uses a0 = a and
    the saved window norm is carried in norm_window."""
    with open(str(path_base) + ".bin", "rb") as fh:
        n_s, n_x, h_s, h_x = struct.unpack("<qqdd", fh.read(32))
        data = np.frombuffer(fh.read(), dtype="<f8")
    u = data[:n_s * n_x].reshape(n_s, n_x).copy()
    v = data[n_s * n_x:].reshape(n_s, n_x).copy()
    a = 0.5 * h_s * (n_s - 1)
    grid = StripGrid(a=a, a0=a, n_s=n_s, n_x=n_x, period_L=h_x * n_x)
    with open(str(path_base) + ".csv", "r", encoding="utf-8") as fh:
        fh.readline()
        c, epsilon, K, nu, iterations, norm_window = \
            fh.readline().strip().split(",")
    return StripSolution(u=u, v=v, c=float(c), epsilon=float(epsilon),
                         K=float(K), iterations=int(iterations),
                         norm_window=float(norm_window), grid=grid,
                         certificates={},
                         nu=float(nu) if nu else None)
