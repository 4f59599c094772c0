"""Uniform rectangular meshes with explicit, oriented face connectivity."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class BcKind(Enum):
    """Boundary treatment: periodic wrap-around or free (natural) boundaries."""

    PERIODIC = "periodic"
    NEUMANN_FREE = "neumann-free"


class FaceKind(Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class Face:
    """A codimension-1 face.

    Interior faces carry the two adjacent cells as (lower, upper) along `axis`
    and are oriented by the +axis normal from cells[0] to cells[1].  Boundary
    faces carry the single owning cell; under periodic boundaries each one
    stores the index of its opposite-side partner.
    """

    kind: FaceKind
    axis: int
    cells: tuple[int, ...]
    position: float
    span: tuple[float, float] | None
    partner: int | None = None


class RectMesh:
    """Tensor-product mesh of equal cells on a 1D interval or 2D rectangle.

    Cells are indexed x-major: cell (ix, iy) has id ix*counts[1] + iy in 2D,
    and id ix in 1D.
    """

    def __init__(self, domain, counts, bc_kind, cell_sizes, faces):
        self.dim = len(counts)
        self.domain = domain
        self.counts = counts
        self.bc_kind = bc_kind
        self.cell_sizes = cell_sizes
        self.faces = faces

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.domain]))

    @property
    def widths(self) -> tuple[float, ...]:
        """Uniform cell width per axis."""
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.domain, self.counts))

    def axis_points(self, axis: int) -> np.ndarray:
        """Cell interface coordinates along one axis, length counts[axis] + 1."""
        lo, hi = self.domain[axis]
        return np.linspace(lo, hi, self.counts[axis] + 1)

    def cell_id(self, *multi_index: int) -> int:
        if len(multi_index) != self.dim:
            raise ValueError(f"expected {self.dim} indices, got {len(multi_index)}")
        if self.dim == 1:
            return multi_index[0]
        ix, iy = multi_index
        return ix * self.counts[1] + iy

    def cell_multi_index(self, cell: int) -> tuple[int, ...]:
        if self.dim == 1:
            return (cell,)
        return divmod(cell, self.counts[1])

    def cell_bounds(self, cell: int) -> tuple[tuple[float, float], ...]:
        """Per-axis (low, high) extents of one cell."""
        idx = self.cell_multi_index(cell)
        out = []
        for ax, i in enumerate(idx):
            pts = self.axis_points(ax)
            out.append((float(pts[i]), float(pts[i + 1])))
        return tuple(out)

    def interior_faces(self):
        return [f for f in self.faces if f.kind is FaceKind.INTERIOR]

    def boundary_faces(self):
        return [f for f in self.faces if f.kind is FaceKind.BOUNDARY]

    def __repr__(self):
        shape = "x".join(str(n) for n in self.counts)
        return f"RectMesh({shape}, {self.bc_kind.value}, domain={self.domain})"


def _axis_faces_1d(mesh_pts, counts, bc_kind, axis, cell_of, transverse_spans):
    """Faces whose normal points along `axis`.

    `cell_of(i, j)` maps (index along axis, index across) to a cell id;
    `transverse_spans` lists the (low, high) extent of each across-slot
    (a single None entry in 1D).
    """
    n = counts
    faces = []
    for j, span in enumerate(transverse_spans):
        for i in range(1, n):
            faces.append(Face(FaceKind.INTERIOR, axis, (cell_of(i - 1, j), cell_of(i, j)),
                              float(mesh_pts[i]), span))
        low = Face(FaceKind.BOUNDARY, axis, (cell_of(0, j),), float(mesh_pts[0]), span)
        high = Face(FaceKind.BOUNDARY, axis, (cell_of(n - 1, j),), float(mesh_pts[n]), span)
        faces.append(low)
        faces.append(high)
    return faces


def build_rect_mesh(domain, counts, bc_kind: BcKind = BcKind.PERIODIC) -> RectMesh:
    """Build a uniform mesh of a 1D interval or 2D axis-aligned rectangle.

    Args:
        domain: per-axis extents, ((xlo, xhi),) or ((xlo, xhi), (ylo, yhi)).
        counts: cells per axis, an int (applied to every axis) or a tuple.
        bc_kind: boundary treatment; periodic meshes pair opposite boundary
            faces with an involutive partner map.
    """
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    dim = len(domain)
    if dim not in (1, 2):
        raise ValueError(f"only 1D and 2D meshes are supported, got dim={dim}")
    if isinstance(counts, (int, np.integer)):
        counts = (int(counts),) * dim
    else:
        counts = tuple(int(n) for n in counts)
    if len(counts) != dim:
        raise ValueError("counts must match the number of axes")
    if any(n < 1 for n in counts):
        raise ValueError(f"cell counts must be positive, got {counts}")
    for lo, hi in domain:
        if not hi > lo:
            raise ValueError(f"empty axis extent ({lo}, {hi})")
    if not isinstance(bc_kind, BcKind):
        bc_kind = BcKind(bc_kind)

    widths = tuple((hi - lo) / n for (lo, hi), n in zip(domain, counts))
    cell_sizes = tuple(np.full(n, w) for n, w in zip(counts, widths))

    if dim == 1:
        x = np.linspace(domain[0][0], domain[0][1], counts[0] + 1)
        faces = _axis_faces_1d(x, counts[0], bc_kind, 0, lambda i, j: i, [None])
    else:
        nx, ny = counts
        x = np.linspace(domain[0][0], domain[0][1], nx + 1)
        y = np.linspace(domain[1][0], domain[1][1], ny + 1)
        spans_y = [(float(y[j]), float(y[j + 1])) for j in range(ny)]
        spans_x = [(float(x[i]), float(x[i + 1])) for i in range(nx)]
        faces = _axis_faces_1d(x, nx, bc_kind, 0, lambda i, j: i * ny + j, spans_y)
        faces += _axis_faces_1d(y, ny, bc_kind, 1, lambda j, i: i * ny + j, spans_x)

    if bc_kind is BcKind.PERIODIC:
        faces = _pair_periodic(faces, domain)

    return RectMesh(domain, counts, bc_kind, cell_sizes, faces)


def _pair_periodic(faces, domain):
    """Replace boundary faces with partner-linked copies (an involution)."""
    lows = {}
    highs = {}
    for idx, f in enumerate(faces):
        if f.kind is not FaceKind.BOUNDARY:
            continue
        lo, hi = domain[f.axis]
        key = (f.axis, f.span)
        if f.position == lo:
            lows[key] = idx
        elif f.position == hi:
            highs[key] = idx
        else:
            raise AssertionError("boundary face off the domain boundary")
    if set(lows) != set(highs):
        raise AssertionError("unmatched periodic boundary faces")
    paired = list(faces)
    for key, i_lo in lows.items():
        i_hi = highs[key]
        f_lo, f_hi = faces[i_lo], faces[i_hi]
        paired[i_lo] = Face(f_lo.kind, f_lo.axis, f_lo.cells, f_lo.position, f_lo.span, i_hi)
        paired[i_hi] = Face(f_hi.kind, f_hi.axis, f_hi.cells, f_hi.position, f_hi.span, i_lo)
    return paired
