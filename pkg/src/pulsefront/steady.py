"""Periodic steady states of the nonlinear two-type system.

Solves the stationary system

    0 = p_xx + p (r_u + beta - gamma_u (p + q)) + mu (q - p)
    0 = q_xx + q (r_v + beta - gamma_v (p + q)) + mu (p - q)

on one period (beta = 0 is the original system) by semi-implicit time
marching or damped Newton, and traces the bifurcation branch in the growth
shift beta starting just past the critical value beta = lambda_1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BranchLost,
    CollapsedToZero,
    Diverged,
    JacobianSingular,
    NotConverged,
)
from .fields import CoefficientField, PeriodicGrid
from .spectral import _periodic_d2, periodic_principal_eig

NONTRIVIAL_THRESHOLD = 1e-6
ZERO_THRESHOLD = 1e-12


@dataclass(frozen=True)
class SteadyState:
    p: np.ndarray
    q: np.ndarray
    residual: float
    beta: float
    method_tag: str
    clip_count: int = 0

    @property
    def sup_norm(self):
        return float(max(self.p.max(initial=0.0), self.q.max(initial=0.0)))

    @property
    def nontrivial(self):
        return float(np.max(self.p + self.q)) >= NONTRIVIAL_THRESHOLD


@dataclass(frozen=True)
class BranchPoint:
    beta: float
    norm: float
    steady: SteadyState


def box_bound(field: CoefficientField):
    """Upper bound on any nonnegative periodic steady state."""
    b = field.bounds
    return max(b.r_inf / b.gamma0, b.mu_inf / b.gamma0)


def _coefficients(field, grid, beta):
    x = grid.x
    return (field.sample("r_u", x) + beta, field.sample("r_v", x) + beta,
            field.sample("gamma_u", x), field.sample("gamma_v", x),
            field.sample("mu", x))


def stationary_residual(field, grid, p, q, beta=0.0):
    """Right-hand sides of the stationary system (diffusion included)."""
    ru, rv, gu, gv, mu = _coefficients(field, grid, beta)
    D2 = _periodic_d2(grid.n_cells, grid.h)
    Fp = -(D2 @ p) + p * (ru - gu * (p + q)) + mu * (q - p)
    Fq = -(D2 @ q) + q * (rv - gv * (p + q)) + mu * (p - q)
    return Fp, Fq


def steady_time_march(field: CoefficientField, grid: PeriodicGrid,
                      initial=None, dt=None, t_max=400.0, tol=1e-9,
                      beta=0.0, allow_extinction=False) -> SteadyState:
    """March the parabolic system to equilibrium.

    Diffusion is implicit (prefactored banded solve), reaction and mutation
    explicit.  Stops when the sup-norm time derivative estimate drops below
    tol; the returned residual is recomputed from the stationary system.
    """
    n = grid.n_cells
    ru, rv, gu, gv, mu = _coefficients(field, grid, beta)
    if dt is None:
        dt = 0.01 * min(1.0, 1.0 / max(field.bounds.r_inf + beta, 1e-3))
    if initial is None:
        p = np.full(n, 0.1)
        q = np.full(n, 0.1)
    else:
        p = np.array(initial[0], dtype=float)
        q = np.array(initial[1], dtype=float)
    if p.min() < 0 or q.min() < 0 or (p.max() == 0 and q.max() == 0):
        raise ValueError("initial state must be nonnegative and not identically zero")

    D2 = _periodic_d2(n, grid.h)
    stepper = spla.splu((sp.identity(n) + dt * D2).tocsc())
    clip_count = 0
    n_steps = int(np.ceil(t_max / dt))
    for _ in range(n_steps):
        fp = p * (ru - gu * (p + q)) + mu * (q - p)
        fq = q * (rv - gv * (p + q)) + mu * (p - q)
        p_new = stepper.solve(p + dt * fp)
        q_new = stepper.solve(q + dt * fq)
        for w in (p_new, q_new):
            undershoot = w < 0
            if undershoot.any():
                if w.min() < -1e-13:
                    clip_count += int(np.count_nonzero(w < -1e-13))
                np.clip(w, 0.0, None, out=w)
        delta = max(np.max(np.abs(p_new - p)), np.max(np.abs(q_new - q))) / dt
        p, q = p_new, q_new
        sup = float(np.max(p + q))
        if sup < ZERO_THRESHOLD or delta <= tol:
            Fp, Fq = stationary_residual(field, grid, p, q, beta)
            res = max(np.max(np.abs(Fp)), np.max(np.abs(Fq)))
            state = SteadyState(p=p, q=q, residual=float(res), beta=beta,
                                method_tag="time_march", clip_count=clip_count)
            if not state.nontrivial and not allow_extinction:
                raise CollapsedToZero(
                    f"state collapsed to zero (sup {sup:.3g}); "
                    "no nontrivial steady state reached")
            return state
    raise NotConverged(
        f"time march did not reach derivative tolerance {tol:.3g} "
        f"by t_max={t_max} (last estimate {delta:.3g})")


def _jacobian(field, grid, p, q, beta):
    ru, rv, gu, gv, mu = _coefficients(field, grid, beta)
    Lap = -_periodic_d2(grid.n_cells, grid.h)
    Jpp = Lap + sp.diags(ru - gu * (2 * p + q) - mu)
    Jpq = sp.diags(-gu * p + mu)
    Jqp = sp.diags(-gv * q + mu)
    Jqq = Lap + sp.diags(rv - gv * (p + 2 * q) - mu)
    return sp.bmat([[Jpp, Jpq], [Jqp, Jqq]], format="csc")


def steady_newton(field: CoefficientField, grid: PeriodicGrid, guess,
                  beta=0.0, tol=1e-12, max_iter=50, max_halvings=20) -> SteadyState:
    """Damped Newton on the stationary system from a positive guess."""
    p = np.array(guess[0], dtype=float)
    q = np.array(guess[1], dtype=float)
    if p.min() <= 0 or q.min() <= 0:
        raise ValueError("Newton guess must be strictly positive")

    def res_vec(p, q):
        Fp, Fq = stationary_residual(field, grid, p, q, beta)
        return np.concatenate([Fp, Fq])

    n = grid.n_cells
    F = res_vec(p, q)
    norm = np.max(np.abs(F))
    # the residual is dominated by second differences of size sup/h^2, so
    # roundoff caps how small it can get; don't demand less than that
    floor = 100.0 * np.finfo(float).eps \
        * max(1.0, float(max(p.max(), q.max())) / grid.h**2)
    tol = max(tol, floor)
    for _ in range(max_iter):
        if norm <= tol:
            break
        J = _jacobian(field, grid, p, q, beta)
        try:
            delta = spla.splu(J).solve(-F)
        except RuntimeError as exc:
            raise JacobianSingular(str(exc)) from None
        step = 1.0
        for _ in range(max_halvings):
            p_new = p + step * delta[:n]
            q_new = q + step * delta[n:]
            F_new = res_vec(p_new, q_new)
            norm_new = np.max(np.abs(F_new))
            if norm_new < norm:
                break
            step *= 0.5
        else:
            raise Diverged(
                f"Newton step failed to reduce residual {norm:.3g} "
                "after damping")
        p, q, F, norm = p_new, q_new, F_new, norm_new
    if norm > tol:
        raise Diverged(
            f"Newton did not reach residual {tol:.3g} in {max_iter} "
            f"iterations (residual {norm:.3g})")
    return SteadyState(p=p, q=q, residual=float(norm), beta=beta,
                       method_tag="newton")


def multi_start_states(field, grid, n_starts=20, seed=0, beta=0.0,
                       match_tol=1e-8):
    """Distinct steady states found by Newton from random positive starts.

    The scale of the starts spans the box bound.  States are deduplicated
    by sup-norm distance; returns the list of distinct nontrivial states.
    """
    rng = np.random.default_rng(seed)
    C = box_bound(field)
    states = []
    for _ in range(n_starts):
        amp = C * 10.0 ** rng.uniform(-2, 0.3)
        p0 = amp * (0.2 + rng.random(grid.n_cells))
        q0 = amp * (0.2 + rng.random(grid.n_cells))
        try:
            state = steady_newton(field, grid, (p0, q0), beta=beta)
        except (Diverged, JacobianSingular):
            continue
        if not state.nontrivial:
            continue
        if any(np.max(np.abs(state.p - s.p)) + np.max(np.abs(state.q - s.q))
               < match_tol for s in states):
            continue
        states.append(state)
    return states


def continuation_branch(field: CoefficientField, grid: PeriodicGrid,
                        beta_range=None, n_steps=20, delta=1e-3,
                        tol=1e-12) -> list[BranchPoint]:
    """Trace the branch of nontrivial states in beta past the bifurcation.

    The branch originates at beta = lambda_1 (where the shifted linearized
    eigenvalue lambda_1 - beta crosses zero).  Natural-parameter
    continuation: the previous solution seeds Newton at the next beta; the
    first guess is a small multiple of the periodic principal eigenvector.
    A failed step triggers up to 3 step halvings before BranchLost.
    """
    pair = periodic_principal_eig(field, grid)
    lam1 = pair.lam
    if beta_range is None:
        beta_range = (lam1 + delta, lam1 + 1.0)
    beta_lo, beta_hi = beta_range
    if beta_lo <= lam1:
        raise ValueError(
            f"branch starts past the bifurcation: need beta_lo > {lam1:.6g}")
    betas = np.linspace(beta_lo, beta_hi, n_steps)
    gamma_inf = field.bounds.gamma_inf
    points = []
    prev = None
    for beta in betas:
        target = beta
        guesses = []
        if prev is not None and prev.nontrivial:
            guesses.append((np.maximum(prev.p, 1e-14),
                            np.maximum(prev.q, 1e-14)))
        base_amp = max((beta - lam1) / gamma_inf, 1e-8)
        floor = 1e-14
        for factor in (1.0, 4.0, 0.25):
            amp = factor * base_amp
            guesses.append((np.maximum(amp * pair.phi, floor),
                            np.maximum(amp * pair.psi, floor)))
        state = _newton_with_halving(field, grid, guesses, target, lam1,
                                     prev, tol)
        points.append(BranchPoint(beta=float(beta), norm=state.sup_norm,
                                  steady=state))
        prev = state
    return points


def _newton_with_halving(field, grid, guesses, beta, lam1, prev, tol,
                         max_halvings=3):
    last_err = None
    for guess in guesses:
        try:
            state = steady_newton(field, grid, guess, beta=beta, tol=tol)
        except (Diverged, JacobianSingular) as exc:
            last_err = exc
            continue
        if state.nontrivial or beta - lam1 < 10 * NONTRIVIAL_THRESHOLD:
            return state
    if prev is not None and max_halvings > 0:
        # retry through an intermediate beta to shorten the step
        mid = 0.5 * (prev.beta + beta)
        mid_state = _newton_with_halving(
            field, grid, [(np.maximum(prev.p, 1e-14),
                           np.maximum(prev.q, 1e-14))],
            mid, lam1, prev, tol, max_halvings - 1)
        return _newton_with_halving(
            field, grid, [(np.maximum(mid_state.p, 1e-14),
                           np.maximum(mid_state.q, 1e-14))],
            beta, lam1, mid_state, tol, max_halvings - 1)
    raise BranchLost(
        f"continuation failed at beta={beta:.6g}: {last_err}")
