"""Tensor-product modal Legendre DG spaces on rectangular meshes.

The per-cell basis is L2-orthonormal: on reference coordinate xi in [-1, 1]
the 1D modes are sqrt(m + 1/2) * P_m(xi) and on a cell of width h they carry
an extra sqrt(2/h), so the global mass matrix is the identity and L2 inner
products reduce to dot products of coefficient vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import RectMesh

SUPPORTED_DEGREES = (1, 2, 3)


def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights on [-1, 1]."""
    if n < 1:
        raise ValueError("quadrature rule needs at least one point")
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class QuadRule:
    """Per-axis reference quadrature; `weights` sum to the interval length 2."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")


def legendre_values(points, degree: int) -> np.ndarray:
    """Orthonormal Legendre values, shape (npoints, degree+1)."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    V = np.polynomial.legendre.legvander(pts, degree)
    return V * np.sqrt(np.arange(degree + 1) + 0.5)


def legendre_derivatives(points, degree: int) -> np.ndarray:
    """Orthonormal Legendre first derivatives, shape (npoints, degree+1).

    Uses P'_{m+1} = (2m+1) P_m + P'_{m-1}, which is exact at the endpoints.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    P = np.polynomial.legendre.legvander(pts, degree)
    D = np.zeros_like(P)
    if degree >= 1:
        D[:, 1] = 1.0
    for m in range(1, degree):
        D[:, m + 1] = (2 * m + 1) * P[:, m] + D[:, m - 1]
    return D * np.sqrt(np.arange(degree + 1) + 0.5)


@dataclass
class DgField:
    """Modal coefficients of one scalar DG function.

    The flat layout is Kronecker-ordered, x-block major:
    index = (ix*(k+1) + mx) * Ny*(k+1) + iy*(k+1) + my in 2D, which makes
    tensor-product operators apply as Kronecker factors without reshuffling.
    """

    mesh: RectMesh
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        expected = self.mesh.n_cells * (self.degree + 1) ** self.mesh.dim
        if self.coeffs.shape != (expected,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, expected ({expected},)")

    @property
    def n_modes(self) -> int:
        return (self.degree + 1) ** self.mesh.dim

    @property
    def cell_blocks(self) -> np.ndarray:
        """View-like array of shape (n_cells, n_modes); 2D modes are (mx, my) C-ordered."""
        M = self.degree + 1
        if self.mesh.dim == 1:
            return self.coeffs.reshape(self.mesh.counts[0], M)
        nx, ny = self.mesh.counts
        return (self.coeffs.reshape(nx, M, ny, M)
                .transpose(0, 2, 1, 3)
                .reshape(nx * ny, M * M))

    def like(self, coeffs: np.ndarray) -> "DgField":
        return DgField(self.mesh, self.degree, coeffs)

    def copy(self) -> "DgField":
        return DgField(self.mesh, self.degree, self.coeffs.copy())

    def __add__(self, other):
        self._check_compatible(other)
        return self.like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return self.like(self.coeffs - other.coeffs)

    def __rmul__(self, scalar):
        return self.like(float(scalar) * self.coeffs)

    def _check_compatible(self, other):
        if not isinstance(other, DgField):
            raise TypeError("expected a DgField")
        if other.mesh is not self.mesh or other.degree != self.degree:
            raise ValueError("fields live on different spaces")


class DgSpace:
    """Evaluation and projection engine for one (mesh, degree) pair.

    Caches the per-axis Vandermonde and projection-weight matrices; meshes are
    treated as immutable, so instances are memoized on the mesh object.
    """

    def __init__(self, mesh: RectMesh, degree: int):
        if degree not in SUPPORTED_DEGREES:
            raise ValueError(f"degree must be one of {SUPPORTED_DEGREES}, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.M = degree + 1

        nodes, weights = gauss_rule(self.M)
        self.quad = QuadRule(nodes, weights)

        self.V = []        # basis values at quad nodes, scaled to the cell
        self.PW = []       # projection weights: c = PW^T . f(values at nodes)
        self.D = []        # basis x-derivative values at quad nodes
        self.points = []   # physical quad coordinates, shape (N_ax, M)
        for ax in range(mesh.dim):
            h = mesh.widths[ax]
            Vref = legendre_values(nodes, degree)
            Dref = legendre_derivatives(nodes, degree)
            scale = np.sqrt(2.0 / h)
            self.V.append(Vref * scale)
            self.D.append(Dref * scale * (2.0 / h))
            self.PW.append((h / 2.0) * weights[:, None] * (Vref * scale))
            lows = mesh.axis_points(ax)[:-1]
            self.points.append(lows[:, None] + (nodes[None, :] + 1.0) * (h / 2.0))

    @classmethod
    def get(cls, mesh: RectMesh, degree: int) -> "DgSpace":
        cache = mesh.__dict__.setdefault("_space_cache", {})
        if degree not in cache:
            cache[degree] = cls(mesh, degree)
        return cache[degree]

    @property
    def n_dof(self) -> int:
        return self.mesh.n_cells * self.M ** self.mesh.dim

    def zero_field(self) -> DgField:
        return DgField(self.mesh, self.degree, np.zeros(self.n_dof))

    # ---- coefficient <-> point-value transforms at the quadrature nodes ----

    def quad_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Field values at all tensor quadrature nodes.

        Returns shape (Nx, M) in 1D and (Nx, M, Ny, M) in 2D, matching the
        layout of `quad_points`.
        """
        if self.mesh.dim == 1:
            C = coeffs.reshape(self.mesh.counts[0], self.M)
            return C @ self.V[0].T
        nx, ny = self.mesh.counts
        C = coeffs.reshape(nx, self.M, ny, self.M)
        return np.einsum("iajb,qa,rb->iqjr", C, self.V[0], self.V[1], optimize=True)

    def project_values(self, values: np.ndarray) -> np.ndarray:
        """L2-project point values given at the tensor quadrature nodes."""
        if self.mesh.dim == 1:
            return (values @ self.PW[0]).ravel()
        return np.einsum("iqjr,qa,rb->iajb", values, self.PW[0], self.PW[1],
                         optimize=True).ravel()

    def quad_points(self):
        """Physical quadrature coordinates, broadcastable to the value layout."""
        if self.mesh.dim == 1:
            return (self.points[0],)
        X = self.points[0][:, :, None, None]
        Y = self.points[1][None, None, :, :]
        return X, Y

    def integrate(self, values: np.ndarray) -> float:
        """Integrate point values given at the tensor quadrature nodes."""
        w = self.quad.weights
        jac = np.prod([h / 2.0 for h in self.mesh.widths])
        if self.mesh.dim == 1:
            return float(jac * np.einsum("iq,q->", values, w))
        return float(jac * np.einsum("iqjr,q,r->", values, w, w))

    def project(self, fn) -> DgField:
        """L2 projection of a vectorized callable fn(x[, y])."""
        if self.mesh.dim == 1:
            values = fn(self.points[0])
        else:
            X, Y = self.quad_points()
            values = fn(X, Y)
        values = np.broadcast_to(values, self._value_shape())
        return DgField(self.mesh, self.degree, self.project_values(np.asarray(values, dtype=float)))

    def _value_shape(self):
        if self.mesh.dim == 1:
            return (self.mesh.counts[0], self.M)
        nx, ny = self.mesh.counts
        return (nx, self.M, ny, self.M)

    # ---- evaluation on arbitrary per-axis reference lattices ----

    def lattice_values(self, coeffs: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
        """Evaluate on the tensor lattice built from one set of reference points."""
        Vs = [legendre_values(ref_points, self.degree) * np.sqrt(2.0 / h)
              for h in self.mesh.widths]
        if self.mesh.dim == 1:
            C = coeffs.reshape(self.mesh.counts[0], self.M)
            return C @ Vs[0].T
        nx, ny = self.mesh.counts
        C = coeffs.reshape(nx, self.M, ny, self.M)
        return np.einsum("iajb,qa,rb->iqjr", C, Vs[0], Vs[1], optimize=True)

    def lattice_points(self, ref_points: np.ndarray):
        """Physical coordinates of the tensor lattice used by `lattice_values`."""
        out = []
        for ax in range(self.mesh.dim):
            h = self.mesh.widths[ax]
            lows = self.mesh.axis_points(ax)[:-1]
            out.append(lows[:, None] + (np.asarray(ref_points) + 1.0) * (h / 2.0))
        if self.mesh.dim == 1:
            return (out[0],)
        return out[0][:, :, None, None], out[1][None, None, :, :]


def project_l2(fn, mesh: RectMesh, degree: int) -> DgField:
    """L2-project a vectorized callable onto the modal DG space."""
    return DgSpace.get(mesh, degree).project(fn)


def eval_at(field: DgField, cell: int, local_point) -> float:
    """Evaluate a DG field inside one cell at reference coordinates.

    Args:
        field: the DG function.
        cell: flat cell index.
        local_point: coordinates in the reference cell [-1, 1]^dim (a scalar
            in 1D, a pair in 2D).

    Returns:
        The polynomial value at the mapped physical point.
    """
    mesh = field.mesh
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell index {cell} out of range [0, {mesh.n_cells})")
    xi = np.atleast_1d(np.asarray(local_point, dtype=float))
    if xi.shape != (mesh.dim,):
        raise ValueError(f"local_point must have {mesh.dim} coordinate(s)")
    M = field.degree + 1
    if mesh.dim == 1:
        V = legendre_values(xi[:1], field.degree)[0] * np.sqrt(2.0 / mesh.widths[0])
        block = field.coeffs.reshape(mesh.counts[0], M)[cell]
        return float(block @ V)
    ix, iy = mesh.cell_multi_index(cell)
    Vx = legendre_values(xi[:1], field.degree)[0] * np.sqrt(2.0 / mesh.widths[0])
    Vy = legendre_values(xi[1:], field.degree)[0] * np.sqrt(2.0 / mesh.widths[1])
    block = field.coeffs.reshape(mesh.counts[0], M, mesh.counts[1], M)[ix, :, iy, :]
    return float(Vx @ block @ Vy)


def eval_at_points(field: DgField, points: np.ndarray) -> np.ndarray:
    """Evaluate a DG field at arbitrary physical points.

    Args:
        field: the DG function.
        points: array of shape (npts,) in 1D or (npts, 2) in 2D.  Points are
            clamped into the domain; on interior cell interfaces the cell with
            the larger index wins.
    """
    mesh = field.mesh
    pts = np.asarray(points, dtype=float)
    if mesh.dim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2 or pts.shape[1] != mesh.dim:
        raise ValueError(f"points must have shape (n, {mesh.dim})")

    idx = []
    ref = []
    for ax in range(mesh.dim):
        lo, hi = mesh.domain[ax]
        h = mesh.widths[ax]
        i = np.clip(((pts[:, ax] - lo) // h).astype(int), 0, mesh.counts[ax] - 1)
        xi = 2.0 * (pts[:, ax] - (lo + i * h)) / h - 1.0
        idx.append(i)
        ref.append(np.clip(xi, -1.0, 1.0))

    out = np.empty(pts.shape[0])
    M = field.degree + 1
    if mesh.dim == 1:
        C = field.coeffs.reshape(mesh.counts[0], M)
        V = legendre_values(ref[0], field.degree) * np.sqrt(2.0 / mesh.widths[0])
        out = np.einsum("pm,pm->p", C[idx[0]], V)
    else:
        nx, ny = mesh.counts
        C = field.coeffs.reshape(nx, M, ny, M)
        Vx = legendre_values(ref[0], field.degree) * np.sqrt(2.0 / mesh.widths[0])
        Vy = legendre_values(ref[1], field.degree) * np.sqrt(2.0 / mesh.widths[1])
        out = np.einsum("pab,pa,pb->p", C[idx[0], :, idx[1], :], Vx, Vy)
    return out


def l2_inner(f: DgField, g: DgField) -> float:
    """L2 inner product; exact for members of the space (orthonormal basis)."""
    f._check_compatible(g)
    return float(np.dot(f.coeffs, g.coeffs))


def l2_norm(f: DgField) -> float:
    return float(np.linalg.norm(f.coeffs))
