"""Krylov and dense linear solvers with verified residuals.

Both iterative solvers stop on ||op x - rhs|| <= rel_tol * ||rhs|| + abs_tol.
The recurrence residual only triggers the check; the reported residual is
always recomputed from the returned iterate, and a solve restarts (up to
twice) if recurrence drift left the true residual above target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter

import numpy as np
import scipy.linalg

from . import backend


class SolveFailure(RuntimeError):
    """An iterative solve did not reach its residual target."""


class SingularMatrixError(ValueError):
    """Dense factorization hit a pivot below the singularity threshold."""


@dataclass
class KrylovConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int | None = None       # None -> 10 * n
    saddle_solver: str = "minres"     # solver for symmetric indefinite systems

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.saddle_solver not in ("minres", "cg"):
            raise ValueError("saddle_solver must be 'minres' or 'cg'")

    def resolve_max_iter(self, n: int) -> int:
        return self.max_iter if self.max_iter is not None else 10 * n


@dataclass
class SolveReport:
    iterations: int
    residual: float        # true residual norm, recomputed from the iterate
    seconds: float
    applications: int      # number of operator applications
    converged: bool


_MAX_RESTARTS = 2


def _finish(op, rhs, x, target, loop, max_iter, t0):
    """Run `loop` from x, verify the true residual, restart on drift."""
    total_iters = 0
    apps = 0
    for _ in range(_MAX_RESTARTS + 1):
        iters, loop_apps = loop(x, max_iter - total_iters)
        total_iters += iters
        apps += loop_apps
        r_true = rhs - op.dot(x)
        apps += 1
        res = float(np.linalg.norm(r_true))
        if res <= target or total_iters >= max_iter or iters == 0:
            break
    return x, SolveReport(total_iters, res, perf_counter() - t0, apps, res <= target)


def cg_solve(op, rhs, config: KrylovConfig | None = None, x0=None):
    """Conjugate gradients for a symmetric positive definite operator.

    Returns (solution, SolveReport).  A fused compiled loop is used when the
    operator advertises one (the shifted-biharmonic solve operator does).
    """
    cfg = config or KrylovConfig()
    n = rhs.shape[0]
    max_iter = cfg.resolve_max_iter(n)
    t0 = perf_counter()
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, perf_counter() - t0, 0, True)
    target = cfg.rel_tol * bnorm + cfg.abs_tol
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    meta = op.meta
    if meta.get("fused") and meta.get("kind") == "shifted_biharmonic":
        base = meta["base"]
        tau = meta["tau"]

        def loop(xv, budget):
            iters, _ = backend.cg_shifted(base.data, base.indices, base.indptr,
                                          tau, rhs, xv, cfg.rel_tol, cfg.abs_tol,
                                          max(budget, 0))
            return iters, iters + 1
    else:
        def loop(xv, budget):
            return _cg_python(op, rhs, xv, target, max(budget, 0))

    return _finish(op, rhs, x, target, loop, max_iter, t0)


def _cg_python(op, b, x, target, max_iter):
    """Plain CG; x is updated in place.  Mirrors the compiled kernel."""
    r = b - op.dot(x)
    apps = 1
    rs = float(r @ r)
    if np.sqrt(rs) <= target:
        return 0, apps
    p = r.copy()
    it = 0
    while it < max_iter:
        it += 1
        Ap = op.dot(p)
        apps += 1
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            break
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= target:
            break
        p *= rs_new / rs
        p += r
        rs = rs_new
    return it, apps


def minres_solve(op, rhs, config: KrylovConfig | None = None, x0=None):
    """MINRES for a symmetric (possibly indefinite) operator.

    Returns (solution, SolveReport) with the same residual contract as
    cg_solve.
    """
    cfg = config or KrylovConfig()
    n = rhs.shape[0]
    max_iter = cfg.resolve_max_iter(n)
    t0 = perf_counter()
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, perf_counter() - t0, 0, True)
    target = cfg.rel_tol * bnorm + cfg.abs_tol
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    def loop(xv, budget):
        return _minres_python(op, rhs, xv, target, max(budget, 0))

    return _finish(op, rhs, x, target, loop, max_iter, t0)


def _minres_python(op, b, x, target, max_iter):
    """Lanczos/Givens MINRES recurrence; x is updated in place."""
    n = b.shape[0]
    r1 = b - op.dot(x)
    apps = 1
    beta1 = float(np.linalg.norm(r1))
    if beta1 <= target:
        return 0, apps

    y = r1.copy()
    r2 = r1.copy()
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    eps = np.finfo(float).eps

    it = 0
    while it < max_iter:
        it += 1
        s = 1.0 / beta
        v = s * y
        y = op.dot(v)
        apps += 1
        if it >= 2:
            y -= (beta / oldb) * r1
        alfa = float(v @ y)
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y.copy()
        oldb = beta
        beta = float(np.linalg.norm(y))

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w

        if phibar <= target or beta <= eps * beta1:
            break
    return it, apps


def dense_solve(matrix, rhs, overwrite: bool = False):
    """LU-factorized dense solve with a pivot-based singularity check.

    Raises SingularMatrixError when the smallest pivot magnitude falls below
    1e-14 relative to the largest.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"matrix must be square, got shape {matrix.shape}")
    if matrix.shape[0] != np.asarray(rhs).shape[0]:
        raise ValueError("matrix and right-hand side sizes do not match")
    lu, piv = scipy.linalg.lu_factor(matrix, overwrite_a=overwrite, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-14 * max(diag.max(), 1.0):
        raise SingularMatrixError(
            f"pivot ratio {diag.min():.3e}/{diag.max():.3e} below the 1e-14 threshold")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
