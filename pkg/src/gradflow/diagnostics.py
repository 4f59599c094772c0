"""Error norms, convergence orders, sweep drivers, and the timing harness.

Everything here is measurement: nothing in this module changes how a run is
computed.  The CSV writers pin the column layouts that the command-line
front end and the test suite both rely on.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .forms import assemble_A
from .problems import ManufacturedCase, get_case
from .solvers import KrylovConfig
from .space import DgField, DgSpace, gauss_rule
from .steppers import (STRATEGIES, StepPlan, TraceRecord, attach_source,
                       initial_state, make_stepper)

# Step sizes small enough that the time error stays below the spatial error
# for the mesh sweeps, one per polynomial degree.
SPACE_SWEEP_DT = {1: 1e-3, 2: 1e-4, 3: 1e-5}


@dataclass
class ErrorRecord:
    """One sweep point: discretization sizes plus both error norms.

    The EOC slots stay None on the coarsest level (nothing to compare with)
    and on single-point runs.  scheme_order tags rows of time-accuracy
    sweeps, which interleave the first- and second-order schemes.
    """

    k: int
    N: int
    dt: float
    T: float
    l2: float
    linf: float
    eoc_l2: float | None = None
    eoc_linf: float | None = None
    scheme_order: int | None = None


@dataclass
class TimingRecord:
    """Wall-clock total for one (strategy, mesh) stepping loop."""

    strategy: str
    N: int
    unknowns: int
    seconds: float
    order: float | None = None


def unknown_count(n: int) -> int:
    """Coupled-unknown bookkeeping for the piecewise-linear first-order runs
    on an n x n mesh: bilinear modes for two fields plus the scalar."""
    return 6 * n * n + 1


# ---------------------------------------------------------------------------
# error norms


def _sampled_difference(space: DgSpace, field: DgField, exact, t: float,
                        ref_points: np.ndarray) -> np.ndarray:
    ref = np.asarray(ref_points, dtype=float)
    vals = space.lattice_values(field.coeffs, ref)
    pts = space.lattice_points(ref)
    if space.mesh.dim == 1:
        target = exact(pts[0], t)
    else:
        target = exact(pts[0], pts[1], t)
    return vals - np.broadcast_to(target, vals.shape)


def compute_errors(u_field: DgField, exact, T: float,
                   quad: int | None = None) -> tuple[float, float]:
    """Distance between a DG field and a reference profile at time T.

    The L2 norm integrates with a tensor Gauss rule of `quad` points per
    axis, default degree+3.  The default deliberately over-integrates: the
    degree+1 assembly rule samples exactly where the leading interpolation
    error component vanishes, which understates the error by an order of h
    and produces erratic observed rates.  The max norm samples each cell on
    a uniform lattice with degree+2 points per axis, endpoints included, so
    interface values are checked from both sides.

    Args:
        u_field: the discrete solution.
        exact: vectorized callable, (x, t) in 1D or (x, y, t) in 2D.
        T: evaluation time passed through to `exact`.
        quad: optional Gauss point count per axis for the L2 norm.

    Returns:
        (l2_error, linf_error).
    """
    mesh = u_field.mesh
    space = DgSpace.get(mesh, u_field.degree)
    npts = quad if quad is not None else u_field.degree + 3
    if npts < 1:
        raise ValueError("quad must be a positive point count")
    nodes, weights = gauss_rule(npts)

    diff = _sampled_difference(space, u_field, exact, T, nodes)
    jac = float(np.prod([h / 2.0 for h in mesh.widths]))
    if mesh.dim == 1:
        l2sq = jac * float(np.einsum("iq,q->", diff ** 2, weights))
    else:
        l2sq = jac * float(np.einsum("iqjr,q,r->", diff ** 2, weights, weights))

    ref = np.linspace(-1.0, 1.0, u_field.degree + 2)
    linf = float(np.max(np.abs(_sampled_difference(space, u_field, exact, T, ref))))
    return math.sqrt(max(l2sq, 0.0)), linf


# ---------------------------------------------------------------------------
# convergence orders


def eoc(errors, mode: str, steps=None) -> list[float]:
    """Observed orders, log2 of successive error ratios under halving.

    Args:
        errors: error values ordered coarse to fine.
        mode: "spatial" (per-axis cell counts double between entries) or
            "temporal" (the step size halves between entries).
        steps: optional matching list of cell counts or step sizes; when
            given, any pair that does not halve/double is rejected.
    """
    if mode not in ("spatial", "temporal"):
        raise ValueError(f"mode must be 'spatial' or 'temporal', got {mode!r}")
    errs = [float(e) for e in errors]
    if len(errs) < 2:
        raise ValueError("need at least two errors to form an order")
    if any(e <= 0.0 for e in errs):
        raise ValueError("errors must be positive")
    if steps is not None:
        vals = [float(s) for s in steps]
        if len(vals) != len(errs):
            raise ValueError("steps must match errors in length")
        for a, b in zip(vals, vals[1:]):
            ratio = b / a if mode == "spatial" else a / b
            if not math.isclose(ratio, 2.0, rel_tol=1e-9):
                raise ValueError(
                    f"refinement sequence must halve: got consecutive {a} and {b}")
    return [math.log2(a / b) for a, b in zip(errs, errs[1:])]


# ---------------------------------------------------------------------------
# sweep drivers


def march_case(case: ManufacturedCase, degree: int, n: int, dt: float, T: float,
               order: int = 1, strategy: str = "hybrid",
               krylov: KrylovConfig | None = None):
    """Project the initial data and step a manufactured case to time T.

    T must be an integer multiple of dt.  Returns the final SavState.
    """
    n_steps = int(round(T / dt))
    if not math.isclose(n_steps * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    mesh = case.build_mesh(n)
    A_op = assemble_A(mesh, degree, case.model.a)
    space = DgSpace.get(mesh, degree)
    state = initial_state(space.project(case.initial), case.model, A_op)
    plan = StepPlan(dt=dt, order=order, strategy=strategy,
                    krylov=krylov if krylov is not None else KrylovConfig())
    plan = attach_source(plan, case.source)
    stepper = make_stepper(plan, case.model, A_op)
    for _ in range(n_steps):
        state, _ = stepper.step(state)
    return state


def run_space_sweep(case: ManufacturedCase, degree: int, n_list, dt: float,
                    T: float, order: int = 1,
                    krylov: KrylovConfig | None = None) -> list[ErrorRecord]:
    """Mesh-refinement accuracy sweep at a fixed small step size."""
    records = []
    for n in n_list:
        state = march_case(case, degree, n, dt, T, order=order, krylov=krylov)
        l2, linf = compute_errors(state.u, case.exact, state.t)
        records.append(ErrorRecord(degree, n, dt, T, l2, linf))
    if len(records) > 1:
        o2 = eoc([r.l2 for r in records], "spatial", steps=list(n_list))
        oi = eoc([r.linf for r in records], "spatial", steps=list(n_list))
        for rec, a, b in zip(records[1:], o2, oi):
            rec.eoc_l2, rec.eoc_linf = a, b
    return records


def run_time_sweep(case: ManufacturedCase, degree: int, n: int, dt_list,
                   T: float, orders=(1, 2),
                   krylov: KrylovConfig | None = None) -> list[ErrorRecord]:
    """Step-size accuracy sweep on a fixed mesh, one block per scheme order."""
    records = []
    for order in orders:
        block = []
        for dt in dt_list:
            state = march_case(case, degree, n, dt, T, order=order, krylov=krylov)
            l2, linf = compute_errors(state.u, case.exact, state.t)
            block.append(ErrorRecord(degree, n, dt, T, l2, linf,
                                     scheme_order=order))
        if len(block) > 1:
            o2 = eoc([r.l2 for r in block], "temporal", steps=list(dt_list))
            oi = eoc([r.linf for r in block], "temporal", steps=list(dt_list))
            for rec, a, b in zip(block[1:], o2, oi):
                rec.eoc_l2, rec.eoc_linf = a, b
        records.extend(block)
    return records


# ---------------------------------------------------------------------------
# timing harness


def _time_one(case: ManufacturedCase, strategy: str, n: int, dt: float,
              T: float, degree: int, krylov: KrylovConfig | None,
              repeats: int) -> TimingRecord:
    n_steps = int(round(T / dt))
    mesh = case.build_mesh(n)
    A_op = assemble_A(mesh, degree, case.model.a)
    space = DgSpace.get(mesh, degree)
    u0 = space.project(case.initial)
    plan = StepPlan(dt=dt, order=1, strategy=strategy,
                    krylov=krylov if krylov is not None else KrylovConfig())
    plan = attach_source(plan, case.source)
    best = math.inf
    for _ in range(repeats):
        state = initial_state(u0, case.model, A_op)
        stepper = make_stepper(plan, case.model, A_op)
        t0 = time.perf_counter()
        for _ in range(n_steps):
            state, _ = stepper.step(state)
        best = min(best, time.perf_counter() - t0)
    return TimingRecord(strategy, n, unknown_count(n), best)


def run_complexity_suite(strategies=STRATEGIES, n_list=(8, 16, 32, 64),
                         dt: float = 1e-2, T: float = 0.1, degree: int = 1,
                         case_name: str = "ex5.2",
                         krylov: KrylovConfig | None = None,
                         case: ManufacturedCase | None = None,
                         repeats: int = 1) -> list[TimingRecord]:
    """Wall-clock cost of each first-order strategy over a mesh sweep.

    Only the stepping loop is timed; mesh construction, assembly, and the
    initial projection are excluded.  Runs are strictly sequential so the
    clock stays meaningful.  Orders are log time ratios over log unknown
    ratios between consecutive mesh levels.  With repeats > 1 each cell
    reports its fastest run, which damps scheduler noise on small meshes.
    A failure inside one strategy drops its remaining rows and leaves the
    other strategies untouched.
    """
    if case is None:
        case = get_case(case_name)
    records: list[TimingRecord] = []
    for strategy in strategies:
        prev = None
        for n in n_list:
            try:
                rec = _time_one(case, strategy, n, dt, T, degree, krylov,
                                repeats)
            except Exception as exc:
                warnings.warn(f"strategy {strategy!r} failed at N={n}: {exc}")
                break
            if prev is not None:
                rec.order = (math.log(rec.seconds / prev.seconds)
                             / math.log(rec.unknowns / prev.unknowns))
            records.append(rec)
            prev = rec
    return records


# ---------------------------------------------------------------------------
# CSV output


def _fmt(x: float) -> str:
    return format(float(x), ".8e")


def write_errors_csv(path, records: list[ErrorRecord]) -> None:
    """Accuracy table.  EOC columns appear only when some row has a coarser
    companion; the trailing scheme-order column only on time sweeps."""
    with_eoc = any(r.eoc_l2 is not None for r in records)
    with_order = any(r.scheme_order is not None for r in records)
    header = ["k", "N", "dt", "T", "l2", "linf"]
    if with_eoc:
        header += ["eoc_l2", "eoc_linf"]
    if with_order:
        header.append("order")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for r in records:
            row = [r.k, r.N, _fmt(r.dt), _fmt(r.T), _fmt(r.l2), _fmt(r.linf)]
            if with_eoc:
                row += ["" if r.eoc_l2 is None else _fmt(r.eoc_l2),
                        "" if r.eoc_linf is None else _fmt(r.eoc_linf)]
            if with_order:
                row.append("" if r.scheme_order is None else str(r.scheme_order))
            out.writerow(row)


def write_timing_csv(path, records: list[TimingRecord]) -> None:
    """Complexity table; the order column is dropped on single-mesh runs."""
    with_order = any(r.order is not None for r in records)
    header = ["strategy", "N", "unknowns", "seconds"]
    if with_order:
        header.append("order")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for r in records:
            row = [r.strategy, r.N, r.unknowns, _fmt(r.seconds)]
            if with_order:
                row.append("" if r.order is None else _fmt(r.order))
            out.writerow(row)


def write_energy_csv(path, trace: list[TraceRecord], append: bool = False) -> None:
    """Energy time series; append=True continues an existing file."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        out = csv.writer(fh)
        if not append or fh.tell() == 0:
            out.writerow(["n", "t", "E_original", "E_modified", "r",
                          "identity_residual", "krylov_iters"])
        for row in trace:
            out.writerow([row.n, _fmt(row.t), _fmt(row.e_original),
                          _fmt(row.e_modified), _fmt(row.r),
                          _fmt(row.identity_residual), row.krylov_iters])
