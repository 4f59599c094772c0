# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled hot kernels: CSR matvec, the shifted fourth-order apply, and the
fused conjugate gradient loop on (I + tau*A^2).

Call signatures match `gradflow._kernels_py` exactly; the CG loop performs
the same vector operations in the same order, so the two backends produce
the same iterate path up to floating-point association differences.
"""

import numpy as np

from libc.math cimport sqrt
from libc.stdint cimport int32_t


cdef void _matvec(const double[::1] data, const int32_t[::1] indices,
                  const int32_t[::1] indptr, const double[::1] x,
                  double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, n = indptr.shape[0] - 1
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            acc += data[j] * x[indices[j]]
        out[i] = acc


cdef void _shifted(const double[::1] data, const int32_t[::1] indices,
                   const int32_t[::1] indptr, double tau, const double[::1] x,
                   double[::1] tmp, double[::1] out) noexcept nogil:
    # out = x + tau * A (A x); out must not alias x
    cdef Py_ssize_t i, n = indptr.shape[0] - 1
    _matvec(data, indices, indptr, x, tmp)
    _matvec(data, indices, indptr, tmp, out)
    for i in range(n):
        out[i] = x[i] + tau * out[i]


cdef double _dot(const double[::1] a, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def csr_matvec(data, indices, indptr, x, out):
    """out = A @ x for A in CSR form."""
    cdef const double[::1] d = data
    cdef const int32_t[::1] ind = indices
    cdef const int32_t[::1] ptr = indptr
    cdef const double[::1] xv = x
    cdef double[::1] ov = out
    with nogil:
        _matvec(d, ind, ptr, xv, ov)
    return out


def shifted_apply(data, indices, indptr, double tau, x, tmp, out):
    """out = x + tau * A @ (A @ x); tmp is scratch of the same length."""
    cdef const double[::1] d = data
    cdef const int32_t[::1] ind = indices
    cdef const int32_t[::1] ptr = indptr
    cdef const double[::1] xv = x
    cdef double[::1] tv = tmp
    cdef double[::1] ov = out
    with nogil:
        _shifted(d, ind, ptr, tau, xv, tv, ov)
    return out


cdef (long, double) _cg_loop(const double[::1] d, const int32_t[::1] ind,
                             const int32_t[::1] ptr, double tau,
                             const double[::1] b, double[::1] x,
                             double[::1] r, double[::1] p, double[::1] ap,
                             double[::1] t1, double target,
                             long max_iter) noexcept nogil:
    cdef Py_ssize_t i, n = ptr.shape[0] - 1
    cdef long it = 0
    cdef double rs, rs_new, alpha, beta, pap

    _shifted(d, ind, ptr, tau, x, t1, ap)
    for i in range(n):
        r[i] = b[i] - ap[i]
    rs = _dot(r, r)
    if sqrt(rs) <= target:
        return 0, sqrt(rs)
    for i in range(n):
        p[i] = r[i]

    while it < max_iter:
        it += 1
        _shifted(d, ind, ptr, tau, p, t1, ap)
        pap = _dot(p, ap)
        if pap <= 0.0:
            # loss of positive definiteness is a hard error upstream; bail out
            break
        alpha = rs / pap
        for i in range(n):
            x[i] += alpha * p[i]
        for i in range(n):
            r[i] -= alpha * ap[i]
        rs_new = _dot(r, r)
        if sqrt(rs_new) <= target:
            return it, sqrt(rs_new)
        beta = rs_new / rs
        for i in range(n):
            p[i] = r[i] + beta * p[i]
        rs = rs_new
    return it, sqrt(rs)


def cg_shifted(data, indices, indptr, double tau, b, x,
               double rel_tol, double abs_tol, long max_iter):
    """Conjugate gradients on (I + tau*A^2) x = b.

    `x` holds the warm start and is updated in place.  Returns
    (iterations, recursive residual norm at exit).
    """
    cdef const double[::1] d = data
    cdef const int32_t[::1] ind = indices
    cdef const int32_t[::1] ptr = indptr
    cdef const double[::1] bv = b
    cdef double[::1] xv = x
    cdef Py_ssize_t n = ptr.shape[0] - 1
    cdef double[::1] r = np.empty(n)
    cdef double[::1] p = np.empty(n)
    cdef double[::1] ap = np.empty(n)
    cdef double[::1] t1 = np.empty(n)
    cdef double target, res
    cdef long it
    with nogil:
        target = rel_tol * sqrt(_dot(bv, bv)) + abs_tol
        it, res = _cg_loop(d, ind, ptr, tau, bv, xv, r, p, ap, t1,
                           target, max_iter)
    return it, res
