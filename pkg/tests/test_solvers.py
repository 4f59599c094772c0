"""Linear solvers against dense factorizations and each other."""

import warnings

import numpy as np
import pytest

from gradflow.forms import (SparseSymOp, assemble_A, build_shifted_biharmonic)
from gradflow.mesh import build_rect_mesh
from gradflow.solvers import (KrylovConfig, SingularMatrixError, cg_solve,
                              dense_solve, minres_solve)

TWO_PI = 2.0 * np.pi


def _dense_op(mat):
    mat = np.asarray(mat, dtype=float)
    return SparseSymOp.matrix_free(mat.shape[0], lambda x: mat @ x)


def _random_spd(n, rng, cond=1e3):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.geomspace(1.0, cond, n)
    return (Q * eigs) @ Q.T


def test_cg_matches_dense_on_shifted_biharmonic():
    mesh = build_rect_mesh(((0.0, TWO_PI), (0.0, TWO_PI)), 4)
    A = assemble_A(mesh, 1, 2.0)
    tau = 0.01
    B = build_shifted_biharmonic(A, tau)
    Ad = A.to_dense()
    dense = np.eye(A.n) + tau * Ad @ Ad
    rng = np.random.default_rng(211)
    for _ in range(5):
        rhs = rng.standard_normal(A.n)
        x, rep = cg_solve(B, rhs, KrylovConfig(rel_tol=1e-12, abs_tol=1e-14))
        assert rep.converged
        assert np.allclose(x, dense_solve(dense, rhs), atol=1e-9)


def test_cg_on_random_spd_matrices():
    rng = np.random.default_rng(223)
    for n in (8, 50):
        mat = _random_spd(n, rng)
        rhs = rng.standard_normal(n)
        x, rep = cg_solve(_dense_op(mat), rhs,
                          KrylovConfig(rel_tol=1e-12, abs_tol=1e-14))
        assert rep.converged
        assert np.allclose(x, np.linalg.solve(mat, rhs), atol=1e-8)
        # the reported residual is the true one
        assert rep.residual == pytest.approx(np.linalg.norm(rhs - mat @ x),
                                             rel=1e-10, abs=1e-13)


def test_cg_identity_converges_in_one_iteration():
    n = 20
    rng = np.random.default_rng(227)
    rhs = rng.standard_normal(n)
    x, rep = cg_solve(_dense_op(np.eye(n)), rhs)
    assert np.allclose(x, rhs, atol=1e-14)
    assert rep.iterations <= 1


def test_cg_zero_rhs_short_circuits():
    x, rep = cg_solve(_dense_op(np.eye(5)), np.zeros(5))
    assert np.all(x == 0.0)
    assert rep.iterations == 0 and rep.converged and rep.residual == 0.0


def test_cg_warm_start_cuts_iterations():
    rng = np.random.default_rng(229)
    mat = _random_spd(40, rng, cond=1e4)
    rhs = rng.standard_normal(40)
    op = _dense_op(mat)
    x_cold, rep_cold = cg_solve(op, rhs)
    x_warm, rep_warm = cg_solve(op, rhs, x0=x_cold + 1e-10 * rng.standard_normal(40))
    assert rep_warm.iterations < rep_cold.iterations
    assert np.allclose(x_warm, x_cold, atol=1e-8)


def test_minres_solves_saddle_block_system():
    # Coupled system u + tau*A q = g1, A u - q = g2 with the second block
    # row scaled by tau so the matrix is symmetric indefinite.
    mesh = build_rect_mesh(((0.0, TWO_PI),), 6)
    A = assemble_A(mesh, 1, 1.0).to_dense()
    n = A.shape[0]
    tau = 0.05
    K = np.block([[np.eye(n), tau * A], [tau * A, -tau * np.eye(n)]])
    assert np.allclose(K, K.T)
    assert np.any(np.linalg.eigvalsh(K) < 0.0)  # genuinely indefinite
    rng = np.random.default_rng(233)
    rhs = rng.standard_normal(2 * n)
    x, rep = minres_solve(_dense_op(K), rhs,
                          KrylovConfig(rel_tol=1e-12, abs_tol=1e-14))
    assert rep.converged
    assert np.allclose(x, np.linalg.solve(K, rhs), atol=1e-8)


def test_minres_agrees_with_cg_on_spd():
    rng = np.random.default_rng(239)
    mat = _random_spd(30, rng)
    rhs = rng.standard_normal(30)
    cfg = KrylovConfig(rel_tol=1e-12, abs_tol=1e-14)
    x_cg, _ = cg_solve(_dense_op(mat), rhs, cfg)
    x_mr, rep = minres_solve(_dense_op(mat), rhs, cfg)
    assert rep.converged
    assert np.allclose(x_cg, x_mr, atol=1e-8)


def test_minres_zero_rhs_short_circuits():
    x, rep = minres_solve(_dense_op(np.eye(5)), np.zeros(5))
    assert np.all(x == 0.0)
    assert rep.iterations == 0 and rep.converged


def test_iteration_cap_reports_not_converged():
    rng = np.random.default_rng(241)
    mat = _random_spd(60, rng, cond=1e8)
    rhs = rng.standard_normal(60)
    x, rep = cg_solve(_dense_op(mat), rhs,
                      KrylovConfig(rel_tol=1e-14, abs_tol=1e-16, max_iter=3))
    assert not rep.converged
    assert rep.iterations <= 3
    assert rep.residual > 0.0


def test_dense_solve_and_singularity_guard():
    rng = np.random.default_rng(251)
    # Hilbert-like: ill conditioned but solvable at n=8
    n = 8
    H = 1.0 / (np.arange(n)[:, None] + np.arange(n)[None, :] + 1.0)
    x_true = rng.standard_normal(n)
    x = dense_solve(H, H @ x_true)
    assert np.allclose(x, x_true, atol=1e-4)

    sing = np.ones((3, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # scipy flags the zero pivot itself
        with pytest.raises(SingularMatrixError):
            dense_solve(sing, np.ones(3))
    with pytest.raises(ValueError):
        dense_solve(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        dense_solve(np.eye(3), np.ones(4))


def test_dense_solve_multiple_rhs():
    rng = np.random.default_rng(257)
    mat = _random_spd(10, rng)
    B = rng.standard_normal((10, 3))
    X = dense_solve(mat, B)
    assert np.allclose(mat @ X, B, atol=1e-9)


def test_krylov_config_validation():
    with pytest.raises(ValueError):
        KrylovConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        KrylovConfig(abs_tol=-1e-3)
    with pytest.raises(ValueError):
        KrylovConfig(max_iter=0)
    with pytest.raises(ValueError):
        KrylovConfig(saddle_solver="gmres")
    assert KrylovConfig(max_iter=None).resolve_max_iter(7) == 70
    assert KrylovConfig(max_iter=5).resolve_max_iter(7) == 5


def test_report_counts_operator_applications():
    rng = np.random.default_rng(263)
    mat = _random_spd(25, rng)
    calls = {"n": 0}

    def apply_fn(x):
        calls["n"] += 1
        return mat @ x

    op = SparseSymOp.matrix_free(25, apply_fn)
    _, rep = cg_solve(op, rng.standard_normal(25))
    assert rep.applications == calls["n"]
    assert rep.seconds >= 0.0
