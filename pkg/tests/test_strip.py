import numpy as np
import pytest

from pulsefront import (
    PeriodicGrid,
    StripGrid,
    assemble_Leps,
    choose_strip_grid,
    solve_cooperative,
    steady_newton,
    steady_time_march,
    strip_constants,
)
from pulsefront.errors import StencilNotMonotone
from pulsefront.strip import (
    aspect_interval,
    decay_margin,
    load_strip,
    penalization_constant,
    save_strip,
)


@pytest.fixture(scope="module")
def steady32(homog_field):
    grid = PeriodicGrid(32, 1.0)
    marched = steady_time_march(homog_field, grid)
    return steady_newton(homog_field, grid, (marched.p, marched.q))


@pytest.fixture(scope="module")
def small_grid(homog_field):
    return choose_strip_grid(homog_field.period_L, a=3.0, a0=1.5,
                             epsilon=0.5, c_max=4.0)


def test_aspect_interval_shape():
    lo, hi = aspect_interval(0.5)
    assert 1.0 < lo < hi < 1.5
    # eps = 0 leaves no admissible window once the safety margin is applied
    lo0, hi0 = aspect_interval(0.0)
    assert lo0 >= hi0
    with pytest.raises(StencilNotMonotone):
        choose_strip_grid(1.0, a=3.0, a0=1.5, epsilon=0.0, c_max=1.0)


def test_choose_strip_grid_satisfies_dominance(small_grid):
    lo, hi = aspect_interval(0.5)
    ratio = small_grid.h_s / small_grid.h_x
    assert lo <= ratio <= hi
    assert small_grid.n_x >= 32 and small_grid.n_s >= 32


def test_assembled_operator_is_m_matrix(small_grid):
    op = assemble_Leps(small_grid, 0.5, c=1.0).tocsr()
    n_s, n_x = small_grid.n_s, small_grid.n_x
    interior = np.zeros(n_s * n_x, dtype=bool)
    interior.reshape(n_s, n_x)[1:-1, :] = True
    coo = op.tocoo()
    offdiag = coo.data[(coo.row != coo.col) & interior[coo.row]]
    assert offdiag.max() <= 1e-12
    diag = op.diagonal()
    assert diag[interior].min() > 0
    # boundary rows are plain identity
    boundary = ~interior
    row_start = op.indptr[:-1][boundary]
    assert np.all(np.diff(op.indptr)[boundary] == 1)
    assert np.allclose(op.data[row_start], 1.0)


def test_bad_aspect_ratio_rejected(homog_field):
    grid = StripGrid(a=3.0, a0=1.5, n_s=61, n_x=32,
                     period_L=homog_field.period_L)
    ratio = grid.h_s / grid.h_x  # 3.2, far above the admissible window
    assert ratio > aspect_interval(0.5)[1]
    with pytest.raises(StencilNotMonotone):
        assemble_Leps(grid, 0.5)


def test_transport_cap_rejected(small_grid):
    with pytest.raises(StencilNotMonotone, match="transport"):
        assemble_Leps(small_grid, 0.5, c=1e3)


def test_penalization_dominates(homog_field, steady32):
    M, C = penalization_constant(homog_field, 1.2, steady32)
    b = homog_field.bounds
    assert C >= 2.0 * b.r_inf / b.gamma0
    assert M >= b.r_inf + b.mu_inf


def test_strip_constants_closed_forms(homog_field, steady32):
    consts = strip_constants(homog_field, steady32)
    assert consts["lambda1"] == pytest.approx(-1.0, abs=1e-6)
    assert consts["a0_star"] == pytest.approx(2.0 * np.sqrt(5.0), rel=1e-6)
    assert consts["nu0"] == pytest.approx(0.25, abs=1e-6)
    assert consts["K0"] == pytest.approx(8.0, rel=1e-6)


def test_decay_margin_homogeneous(homog_field, steady32):
    consts = strip_constants(homog_field, steady32)
    info = decay_margin(homog_field, steady32, 0.5, 0.9 * consts["nu0"],
                        1.05 * consts["K0"], grid_x=PeriodicGrid(32, 1.0))
    assert info["c_bar"] == pytest.approx(2.0 * np.sqrt(1.5), abs=1e-6)
    # drifted eigenvalue at the minimal speed: lambda_0 = sqrt(r/(1+eps))
    assert info["lam0"] == pytest.approx(1.0 / np.sqrt(1.5), abs=1e-4)
    assert info["a_bar"] >= 1.0


def test_solve_certificates_and_bounds(homog_field, steady32, small_grid):
    consts = strip_constants(homog_field, steady32)
    K = 1.05 * consts["K0"]
    sol = solve_cooperative(homog_field, small_grid, 1.0, 0.5, K, steady32)
    certs = sol.certificates
    assert certs["iterate_monotone"]
    assert certs["s_monotone"]
    assert certs["bounds_ok"]
    U = sol.u.reshape(small_grid.n_s, small_grid.n_x)
    cap = K * steady32.p.max()
    assert U[1:-1].min() > 0
    assert U[1:-1].max() < cap
    # Dirichlet data: steady-state plateau at the inflow end, zero outflow
    np.testing.assert_allclose(U[0], K * steady32.p, atol=1e-12)
    np.testing.assert_allclose(U[-1], 0.0, atol=1e-12)


def test_c_monotone_window_norm(homog_field, steady32, small_grid):
    consts = strip_constants(homog_field, steady32)
    K = 1.05 * consts["K0"]
    norms = []
    for c in (0.5, 1.5, 2.5):
        sol = solve_cooperative(homog_field, small_grid, c, 0.5, K, steady32)
        norms.append(sol.norm_window)
    assert norms[0] > norms[1] > norms[2]


def test_save_load_round_trip(tmp_path, homog_field, steady32, small_grid):
    consts = strip_constants(homog_field, steady32)
    sol = solve_cooperative(homog_field, small_grid, 1.0, 0.5,
                            1.05 * consts["K0"], steady32)
    base = tmp_path / "strip"
    save_strip(base, sol)
    loaded = load_strip(base)
    np.testing.assert_array_equal(loaded.u, sol.u)
    np.testing.assert_array_equal(loaded.v, sol.v)
    assert loaded.c == sol.c
    assert loaded.epsilon == sol.epsilon
    assert loaded.grid.n_s == small_grid.n_s
    assert loaded.grid.n_x == small_grid.n_x
