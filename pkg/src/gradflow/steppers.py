"""Time integration of the gradient flow.

First-order stepping comes in three algebraically equivalent strategies:

  hybrid     two CG solves with the resolvent (I + dt L_h^2)^{-1}; the scalar
             is pre-evaluated in closed form, so the step is linear and cheap.
  augmented  one symmetric indefinite solve of the full (u, q, r) block system.
  reduced    one dense LU solve of the (u, q) system after eliminating r;
             deliberately dense, kept as the expensive baseline.

Second-order stepping is the midpoint variant of the hybrid route: the same
half-step kernel with dt/2 and the extrapolated nonlinearity state, followed
by endpoint extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .forms import SparseSymOp
from .sav import SavState, b_of, energies, init_r, pre_evaluate
from .solvers import (KrylovConfig, SolveFailure, cg_solve, dense_solve,
                      minres_solve)
from .space import DgField, DgSpace

STRATEGIES = ("hybrid", "augmented", "reduced")


@dataclass
class StepPlan:
    """Everything one step needs besides the state: sizes, solver knobs, source."""

    dt: float
    order: int = 1
    strategy: str = "hybrid"
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    source: Callable | None = None    # (x, t) in 1D, (x, y, t) in 2D; vectorized

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.order == 2 and self.strategy != "hybrid":
            raise ValueError("the second-order scheme is only available as 'hybrid'")


def attach_source(plan: StepPlan, source: Callable) -> StepPlan:
    """A copy of the plan with the given source term attached."""
    return replace(plan, source=source)


@dataclass
class StepInfo:
    reports: tuple
    iterations: int


class _SessionBase:
    """Per-run stepping context: caches warm starts and assembled systems."""

    def __init__(self, plan: StepPlan, model, A_op):
        self.plan = plan
        self.model = model
        self.A_op = A_op
        self.cfg = plan.krylov

    def _space(self, state: SavState) -> DgSpace:
        return DgSpace.get(state.u.mesh, state.u.degree)

    def _source_coeffs(self, space: DgSpace, t: float):
        f = self.plan.source
        if f is None:
            return None
        if space.mesh.dim == 1:
            return space.project(lambda x: f(x, t)).coeffs
        return space.project(lambda x, y: f(x, y, t)).coeffs

    def _check(self, *reports):
        for rep in reports:
            if not rep.converged:
                raise SolveFailure(
                    f"linear solve stalled: residual {rep.residual:.3e} after "
                    f"{rep.iterations} iterations")


class FirstOrderHybrid(_SessionBase):
    def __init__(self, plan, model, A_op):
        super().__init__(plan, model, A_op)
        self._warm_g = None
        self._warm_b = None

    def step(self, state: SavState):
        dt = self.plan.dt
        space = self._space(state)
        b = b_of(state.u, self.model)
        pb = b.projected.coeffs
        f_next = self._source_coeffs(space, state.t + dt)
        pre = pre_evaluate(state.u.coeffs, state.r, pb, dt, self.A_op, f_next,
                           self.cfg, warm_g=self._warm_g, warm_b=self._warm_b)
        self._check(*pre.reports)
        u1 = pre.Yg - dt * pre.r_next * pre.Yb
        q1 = self.A_op.dot(u1)
        self._warm_g = pre.Yg
        self._warm_b = pre.Yb
        new = SavState(state.u.like(u1), state.u.like(q1), pre.r_next, state.t + dt)
        return new, StepInfo(pre.reports, sum(r.iterations for r in pre.reports))


class FirstOrderAugmented(_SessionBase):
    """One solve of the symmetric block system in (u, q, r).

    The sparsity pattern is assembled once; per step only the data of the
    coupling column/row (the projected b) and the 1/dt diagonal are current.
    """

    def __init__(self, plan, model, A_op):
        super().__init__(plan, model, A_op)
        self._K = None
        self._warm = None

    def _ensure_system(self, m: int):
        if self._K is not None:
            return
        dt = self.plan.dt
        if self.A_op.csr is None:
            raise ValueError("the augmented strategy needs an assembled operator")
        A = self.A_op.csr
        I = sp.identity(m, format="csr")
        ones_col = sp.csr_matrix(np.ones((m, 1)))
        ones_row = sp.csr_matrix(np.ones((1, m)))
        corner = sp.csr_matrix(np.array([[-2.0]]))
        K = sp.bmat([[I * (1.0 / dt), A, ones_col],
                     [A, -I, None],
                     [ones_row, None, corner]], format="csr")
        K.sort_indices()
        # locate the coupling slots so per-step updates touch data only
        col_pos = K.indptr[1:m + 1] - 1
        if not np.all(K.indices[col_pos] == 2 * m):
            raise AssertionError("unexpected sparsity layout in the block system")
        row_start = K.indptr[2 * m]
        if not np.array_equal(K.indices[row_start:row_start + m], np.arange(m)):
            raise AssertionError("unexpected sparsity layout in the block system")
        self._K = K
        self._col_pos = col_pos
        self._row_start = row_start
        self._K_op = SparseSymOp.from_csr(K)

    def step(self, state: SavState):
        dt = self.plan.dt
        space = self._space(state)
        m = state.u.coeffs.shape[0]
        self._ensure_system(m)
        b = b_of(state.u, self.model)
        pb = b.projected.coeffs
        self._K.data[self._col_pos] = pb
        self._K.data[self._row_start:self._row_start + m] = pb

        f_next = self._source_coeffs(space, state.t + dt)
        top = state.u.coeffs / dt
        if f_next is not None:
            top = top + f_next
        rhs = np.concatenate([top, np.zeros(m),
                              [float(pb @ state.u.coeffs) - 2.0 * state.r]])
        solver = cg_solve if self.cfg.saddle_solver == "cg" else minres_solve
        z, rep = solver(self._K_op, rhs, self.cfg, x0=self._warm)
        self._check(rep)
        self._warm = z
        new = SavState(state.u.like(z[:m].copy()), state.u.like(z[m:2 * m].copy()),
                       float(z[2 * m]), state.t + dt)
        return new, StepInfo((rep,), rep.iterations)


class FirstOrderReduced(_SessionBase):
    """Dense elimination of the scalar: rank-one-coupled (u, q) system per step.

    The constant part [[I, dt A], [dt A, -dt I]] is kept factored-ready in
    Fortran order; each step memcpys it, adds the rank-one block, and runs a
    dense LU.  Scales like a dense O(n^3) solve by design.
    """

    def __init__(self, plan, model, A_op):
        super().__init__(plan, model, A_op)
        self._D0 = None
        self._work = None

    def _ensure_system(self, m: int):
        if self._D0 is not None:
            return
        dt = self.plan.dt
        Ad = self.A_op.to_dense()
        D0 = np.zeros((2 * m, 2 * m), order="F")
        D0[:m, :m] = np.eye(m)
        D0[:m, m:] = dt * Ad
        D0[m:, :m] = dt * Ad
        D0[m:, m:] = -dt * np.eye(m)
        self._D0 = D0
        self._work = np.empty_like(D0)

    def step(self, state: SavState):
        dt = self.plan.dt
        space = self._space(state)
        m = state.u.coeffs.shape[0]
        self._ensure_system(m)
        b = b_of(state.u, self.model)
        pb = b.projected.coeffs

        M = self._work
        np.copyto(M, self._D0)
        M[:m, :m] += (0.5 * dt) * np.outer(pb, pb)

        u = state.u.coeffs
        top = u - dt * state.r * pb + (0.5 * dt) * float(pb @ u) * pb
        f_next = self._source_coeffs(space, state.t + dt)
        if f_next is not None:
            top = top + dt * f_next
        rhs = np.concatenate([top, np.zeros(m)])
        z = dense_solve(M, rhs, overwrite=True)
        u1 = z[:m].copy()
        q1 = z[m:].copy()
        r1 = state.r + 0.5 * float(pb @ (u1 - u))
        new = SavState(state.u.like(u1), state.u.like(q1), r1, state.t + dt)
        return new, StepInfo((), 0)


class SecondOrderHybrid(_SessionBase):
    """Midpoint scheme: half-step pre-evaluation on the extrapolated state,
    then endpoint extrapolation of (u, q, r)."""

    def __init__(self, plan, model, A_op):
        super().__init__(plan, model, A_op)
        self.prev_u = None
        self._warm_g = None
        self._warm_b = None

    def step(self, state: SavState):
        dt = self.plan.dt
        space = self._space(state)
        prev = self.prev_u if self.prev_u is not None else state.u
        u_star = state.u.like(1.5 * state.u.coeffs - 0.5 * prev.coeffs)
        b = b_of(u_star, self.model)
        pb = b.projected.coeffs

        f_mid = None
        if self.plan.source is not None:
            f0 = self._source_coeffs(space, state.t)
            f1 = self._source_coeffs(space, state.t + dt)
            f_mid = 0.5 * (f0 + f1)

        pre = pre_evaluate(state.u.coeffs, state.r, pb, 0.5 * dt, self.A_op,
                           f_mid, self.cfg, warm_g=self._warm_g, warm_b=self._warm_b)
        self._check(*pre.reports)
        u_half = pre.Yg - 0.5 * dt * pre.r_next * pre.Yb
        q_half = self.A_op.dot(u_half)

        u1 = 2.0 * u_half - state.u.coeffs
        q1 = 2.0 * q_half - state.q.coeffs
        r1 = 2.0 * pre.r_next - state.r
        self.prev_u = state.u
        self._warm_g = pre.Yg
        self._warm_b = pre.Yb
        new = SavState(state.u.like(u1), state.u.like(q1), r1, state.t + dt)
        return new, StepInfo(pre.reports, sum(r.iterations for r in pre.reports))


@dataclass
class History:
    """Second-order lag state: u^{n-1} (equal to u^0 before the first step)."""

    prev_u: DgField


def make_stepper(plan: StepPlan, model, A_op):
    if plan.order == 2:
        return SecondOrderHybrid(plan, model, A_op)
    cls = {"hybrid": FirstOrderHybrid,
           "augmented": FirstOrderAugmented,
           "reduced": FirstOrderReduced}[plan.strategy]
    return cls(plan, model, A_op)


def step_first_hybrid(state: SavState, plan: StepPlan, model, A_op) -> SavState:
    """One first-order step via the resolvent route (two CG solves)."""
    return FirstOrderHybrid(plan, model, A_op).step(state)[0]


def step_first_augmented(state: SavState, plan: StepPlan, model, A_op) -> SavState:
    """One first-order step via the symmetric indefinite block system."""
    return FirstOrderAugmented(plan, model, A_op).step(state)[0]


def step_first_reduced(state: SavState, plan: StepPlan, model, A_op) -> SavState:
    """One first-order step via dense elimination of the scalar."""
    return FirstOrderReduced(plan, model, A_op).step(state)[0]


def step_second_hybrid(state: SavState, plan: StepPlan, model, A_op,
                       history: History | None = None):
    """One second-order step; returns (new_state, new_history)."""
    session = SecondOrderHybrid(plan, model, A_op)
    session.prev_u = history.prev_u if history is not None else None
    new, _ = session.step(state)
    return new, History(prev_u=state.u)


@dataclass
class TraceRecord:
    """One energy-trace row: energies, scalar, and the per-step dissipation
    identity residual (zero through solver tolerance on source-free runs)."""

    n: int
    t: float
    e_original: float
    e_modified: float
    r: float
    identity_residual: float
    krylov_iters: int


def identity_residual(before: SavState, after: SavState, order: int, dt: float) -> float:
    """Defect in the per-step dissipation identity of the modified energy.

    First order:  E+ - E + ||du||^2/dt + (1/2)||dq||^2 + (dr)^2 = 0
    Second order: E+ - E + ||du||^2/dt = 0
    """
    du = after.u.coeffs - before.u.coeffs
    e0 = 0.5 * float(before.q.coeffs @ before.q.coeffs) + before.r ** 2
    e1 = 0.5 * float(after.q.coeffs @ after.q.coeffs) + after.r ** 2
    res = e1 - e0 + float(du @ du) / dt
    if order == 1:
        dq = after.q.coeffs - before.q.coeffs
        dr = after.r - before.r
        res += 0.5 * float(dq @ dq) + dr ** 2
    return res


def run_flow(state: SavState, plan: StepPlan, model, A_op, n_steps: int,
             stepper=None):
    """Advance n_steps and collect the energy trace (row 0 is the initial state)."""
    if stepper is None:
        stepper = make_stepper(plan, model, A_op)
    e = energies(state, model)
    trace = [TraceRecord(0, state.t, e.original, e.modified, state.r, 0.0, 0)]
    for n in range(1, n_steps + 1):
        new, info = stepper.step(state)
        e = energies(new, model)
        res = identity_residual(state, new, plan.order, plan.dt)
        trace.append(TraceRecord(n, new.t, e.original, e.modified, new.r,
                                 res, info.iterations))
        state = new
    return state, trace


def initial_state(u0: DgField, model, A_op) -> SavState:
    """Assemble the full starting state (u, q = L_h u, r) from the initial field."""
    q0 = u0.like(A_op.dot(u0.coeffs))
    return SavState(u0, q0, init_r(u0, model), 0.0)
