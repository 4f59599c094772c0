"""Pure numpy/scipy implementations of the hot kernels.

Same call signatures as the compiled extension `gradflow._kernels`; used when
the extension is unavailable or when GRADFLOW_BACKEND=python is set.  The CG
loop mirrors the compiled one operation for operation so both backends follow
the same iterate path up to roundoff.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def _as_csr(data, indices, indptr):
    n = indptr.shape[0] - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def csr_matvec(data, indices, indptr, x, out):
    """out = A @ x for A in CSR form."""
    A = _as_csr(data, indices, indptr)
    np.copyto(out, A @ x)
    return out


def shifted_apply(data, indices, indptr, tau, x, tmp, out):
    """out = x + tau * A @ (A @ x); tmp is scratch of the same length."""
    A = _as_csr(data, indices, indptr)
    np.copyto(tmp, A @ x)
    np.copyto(out, x)
    out += tau * (A @ tmp)
    return out


def cg_shifted(data, indices, indptr, tau, b, x, rel_tol, abs_tol, max_iter):
    """Conjugate gradients on (I + tau*A^2) x = b.

    `x` holds the warm start and is updated in place.  Returns
    (iterations, recursive residual norm at exit).
    """
    A = _as_csr(data, indices, indptr)

    def op(v):
        return v + tau * (A @ (A @ v))

    bnorm = float(np.sqrt(b @ b))
    target = rel_tol * bnorm + abs_tol
    r = b - op(x)
    rs = float(r @ r)
    if np.sqrt(rs) <= target:
        return 0, float(np.sqrt(rs))
    p = r.copy()
    it = 0
    while it < max_iter:
        it += 1
        Ap = op(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            # loss of positive definiteness is a hard error upstream; bail out
            break
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= target:
            return it, float(np.sqrt(rs_new))
        p *= rs_new / rs
        p += r
        rs = rs_new
    return it, float(np.sqrt(rs))
