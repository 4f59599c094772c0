"""Assembly of the shifted-Laplacian DG operator in mixed form.

The operator realized here is the symmetric bilinear form of L = -Delta - a/2:

    A(w, v) = sum_K int_K (grad w . grad v - (a/2) w v)
            + sum_faces int_e ( {d_n w} [v] + [w] {d_n v} )

with arithmetic-mean fluxes and no penalty term; jumps are taken along the
+axis normal (value on the higher cell minus value on the lower cell).  Under
periodic boundaries the wrap-around interface enters once at full weight,
which equals the two half-weight boundary contributions of the two-sided
convention.  Free (natural) boundaries contribute nothing.

On the tensor-product orthonormal basis the 2D operator is the Kronecker sum
A = Sx (x) Iy + Ix (x) Sy - (a/2) I of 1D factors, which is how it is built.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import backend
from .mesh import BcKind, RectMesh
from .space import (SUPPORTED_DEGREES, DgField, gauss_rule,
                    legendre_derivatives, legendre_values)


class SparseSymOp:
    """A symmetric linear operator, assembled in CSR or matrix-free.

    Assembled operators keep int32 index arrays so both kernel backends can
    consume them directly; `alt_apply`, when present, is an independent way to
    apply the same operator (used for cross-checks).
    """

    def __init__(self, n, *, csr=None, apply_fn=None, alt_apply=None, meta=None):
        if (csr is None) == (apply_fn is None):
            if csr is None:
                raise ValueError("need a CSR matrix or an apply callable")
        self.n = int(n)
        self.csr = csr
        self._apply_fn = apply_fn
        self.alt_apply = alt_apply
        self.meta = dict(meta or {})
        if csr is not None:
            csr.sort_indices()
            self.data = csr.data
            self.indices = csr.indices.astype(np.int32, copy=False)
            self.indptr = csr.indptr.astype(np.int32, copy=False)

    @classmethod
    def from_csr(cls, mat, alt_apply=None, meta=None):
        mat = mat.tocsr()
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("operator must be square")
        return cls(mat.shape[0], csr=mat, alt_apply=alt_apply, meta=meta)

    @classmethod
    def matrix_free(cls, n, apply_fn, meta=None):
        return cls(n, apply_fn=apply_fn, meta=meta)

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self):
        return self.csr.nnz if self.csr is not None else None

    def dot(self, x, out=None):
        if self.csr is not None:
            if backend.NAME == "python":
                # scipy's own matvec avoids re-wrapping overhead on the fallback
                y = self.csr @ x
                if out is None:
                    return y
                np.copyto(out, y)
                return out
            if out is None:
                out = np.empty(self.n)
            backend.csr_matvec(self.data, self.indices, self.indptr, x, out)
            return out
        y = self._apply_fn(x)
        if out is None:
            return y
        np.copyto(out, y)
        return out

    def __matmul__(self, x):
        return self.dot(x)

    def to_dense(self):
        if self.csr is not None:
            return self.csr.toarray()
        cols = [self.dot(col) for col in np.eye(self.n)]
        return np.array(cols).T

    def dump_matrix_market(self, path):
        """Write the assembled matrix in Matrix Market coordinate format."""
        if self.csr is None:
            raise ValueError("matrix-free operator has no assembled matrix to dump")
        scipy.io.mmwrite(str(path), self.csr.tocoo())


def reference_blocks(degree: int, h: float):
    """1D per-cell ingredients on a cell of width h.

    Returns (volume, t_minus, t_plus, d_minus, d_plus): the stiffness block
    int phi'_m phi'_n dx and the basis/derivative traces at the cell's low and
    high endpoints, all in the cell-scaled orthonormal basis.
    """
    nodes, weights = gauss_rule(degree + 1)
    Dref = legendre_derivatives(nodes, degree)
    # int_K phi'_m phi'_n dx = (4/h^2) * int_ref p'_m p'_n dxi
    G = Dref.T @ (weights[:, None] * Dref)
    volume = (4.0 / h**2) * G
    ends = np.array([-1.0, 1.0])
    tv = legendre_values(ends, degree) * np.sqrt(2.0 / h)
    td = legendre_derivatives(ends, degree) * np.sqrt(2.0 / h) * (2.0 / h)
    return volume, tv[0], tv[1], td[0], td[1]


def assemble_axis_matrix(n_cells: int, h: float, degree: int, periodic: bool) -> sp.csr_matrix:
    """1D factor: gradient volume term plus central-flux face terms (no mass shift)."""
    M = degree + 1
    volume, t_lo, t_hi, d_lo, d_hi = reference_blocks(degree, h)
    S = np.zeros((n_cells * M, n_cells * M))
    for i in range(n_cells):
        sl = slice(i * M, (i + 1) * M)
        S[sl, sl] += volume

    def add_face(left, right):
        L = slice(left * M, (left + 1) * M)
        R = slice(right * M, (right + 1) * M)
        # left cell sees the face at its high end, right cell at its low end
        S[L, L] += -0.5 * (np.outer(t_hi, d_hi) + np.outer(d_hi, t_hi))
        S[R, R] += +0.5 * (np.outer(t_lo, d_lo) + np.outer(d_lo, t_lo))
        S[R, L] += 0.5 * np.outer(t_lo, d_hi) - 0.5 * np.outer(d_lo, t_hi)
        S[L, R] += 0.5 * np.outer(d_hi, t_lo) - 0.5 * np.outer(t_hi, d_lo)

    for i in range(n_cells - 1):
        add_face(i, i + 1)
    if periodic and n_cells > 1:
        add_face(n_cells - 1, 0)
    elif periodic and n_cells == 1:
        # a single periodic cell couples to itself through the wrap face
        add_face(0, 0)
    return sp.csr_matrix(S)


def assemble_A(mesh: RectMesh, degree: int, a: float) -> SparseSymOp:
    """Assemble the operator of the form A(., .) on the modal tensor basis.

    The result represents L = -Delta - a/2 weakly; with the orthonormal basis
    the coefficient representation of L_h u is simply the matrix acting on the
    coefficients of u.
    """
    if degree not in SUPPORTED_DEGREES:
        raise ValueError(f"degree must be one of {SUPPORTED_DEGREES}, got {degree}")
    periodic = mesh.bc_kind is BcKind.PERIODIC
    M = degree + 1
    factors = [assemble_axis_matrix(mesh.counts[ax], mesh.widths[ax], degree, periodic)
               for ax in range(mesh.dim)]

    if mesh.dim == 1:
        A = factors[0] - (a / 2.0) * sp.identity(factors[0].shape[0], format="csr")
        A = A.tocsr()
        Sx = factors[0]

        def alt(x):
            return Sx @ x - (a / 2.0) * x
    else:
        Sx, Sy = factors
        nx_dof = mesh.counts[0] * M
        ny_dof = mesh.counts[1] * M
        A = (sp.kron(Sx, sp.identity(ny_dof), format="csr")
             + sp.kron(sp.identity(nx_dof), Sy, format="csr")
             - (a / 2.0) * sp.identity(nx_dof * ny_dof, format="csr")).tocsr()

        def alt(x):
            X = x.reshape(nx_dof, ny_dof)
            return (Sx @ X + (Sy @ X.T).T - (a / 2.0) * X).ravel()

    A.sum_duplicates()
    return SparseSymOp.from_csr(A, alt_apply=alt,
                                meta={"kind": "shifted_laplacian", "a": a,
                                      "mesh": mesh, "degree": degree})


def apply_Lh(A_op: SparseSymOp, u: DgField) -> DgField:
    """Apply the discrete operator: the coefficients of L_h u are A @ coeffs(u)."""
    if A_op.n != u.coeffs.shape[0]:
        raise ValueError("operator and field sizes do not match")
    return u.like(A_op.dot(u.coeffs))


def build_shifted_biharmonic(A_op: SparseSymOp, tau: float) -> SparseSymOp:
    """The SPD solve operator I + tau * A^2, applied matrix-free.

    When A is assembled the apply is fused in the active kernel backend, and
    the returned operator carries enough metadata for the fused CG fast path.
    """
    if not tau > 0.0:
        raise ValueError(f"shift tau must be positive, got {tau}")
    n = A_op.n
    if A_op.csr is not None:
        data, indices, indptr = A_op.data, A_op.indices, A_op.indptr
        tmp = np.empty(n)

        def apply_fn(x, _tmp=tmp):
            out = np.empty(n)
            backend.shifted_apply(data, indices, indptr, tau, x, _tmp, out)
            return out

        meta = {"kind": "shifted_biharmonic", "tau": tau, "base": A_op, "fused": True}
    else:
        def apply_fn(x):
            return x + tau * A_op.dot(A_op.dot(x))

        meta = {"kind": "shifted_biharmonic", "tau": tau, "base": A_op, "fused": False}
    return SparseSymOp.matrix_free(n, apply_fn, meta=meta)
