"""Scalar auxiliary variable machinery for the gradient flow.

The flow u_t = -L^2 u - Phi'(u) with L = -Delta - a/2 is integrated through
the augmented energy E = (1/2)||q||^2 + r^2 where q = L_h u and
r = sqrt(int Phi(u) + B).  Everything here works on modal coefficient vectors
(orthonormal basis), so L2 inner products are dot products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import SparseSymOp, build_shifted_biharmonic
from .solvers import KrylovConfig, SolveFailure, SolveReport, cg_solve
from .space import DgField, DgSpace, eval_at_points


@dataclass
class SavState:
    """Solver state after a step: the solution, its mixed variable, and the scalar."""

    u: DgField
    q: DgField
    r: float
    t: float = 0.0


@dataclass
class EnergyPair:
    original: float   # (1/2)||q_h||^2 + int Phi(u_h)
    modified: float   # (1/2)||q_h||^2 + r^2


@dataclass
class BField:
    """The normalized nonlinearity b(w) = Phi'(w) / sqrt(int Phi(w) + B)."""

    denominator: float
    pointwise: callable
    projected: DgField
    phi_integral: float


def phi_integral(w: DgField, model) -> float:
    """int Phi(w) over the domain, by the space's own quadrature."""
    space = DgSpace.get(w.mesh, w.degree)
    return space.integrate(model.phi(space.quad_values(w.coeffs)))


def _radicand(w: DgField, model) -> tuple[float, float]:
    integral = phi_integral(w, model)
    b_const = model.b_constant(w.mesh)
    rad = integral + b_const
    if not rad > 0.0:
        raise ValueError(
            f"int Phi(u) + B = {rad:.6e} is not positive; "
            "increase the stabilization constant B")
    return integral, rad


def b_of(w: DgField, model) -> BField:
    """Evaluate b(w): scalar denominator, pointwise closure, and projection."""
    space = DgSpace.get(w.mesh, w.degree)
    integral, rad = _radicand(w, model)
    denom = float(np.sqrt(rad))
    values = model.dphi(space.quad_values(w.coeffs)) / denom
    projected = DgField(w.mesh, w.degree, space.project_values(values))

    def pointwise(points):
        return model.dphi(eval_at_points(w, points)) / denom

    return BField(denom, pointwise, projected, integral)


def init_r(u0: DgField, model) -> float:
    """Initial scalar r^0 = sqrt(int Phi(u_h^0) + B)."""
    if model.phi_min is not None:
        b_const = model.b_constant(u0.mesh)
        if b_const + model.phi_min * u0.mesh.volume <= 0.0:
            raise ValueError(
                f"B = {b_const:.6e} cannot keep int Phi + B positive for all states; "
                f"need B > {-model.phi_min * u0.mesh.volume:.6e}")
    _, rad = _radicand(u0, model)
    return float(np.sqrt(rad))


def energies(state: SavState, model) -> EnergyPair:
    half_q2 = 0.5 * float(state.q.coeffs @ state.q.coeffs)
    return EnergyPair(original=half_q2 + phi_integral(state.u, model),
                      modified=half_q2 + state.r ** 2)


def apply_Bh(tau: float, f: DgField, A_op: SparseSymOp,
             config: KrylovConfig | None = None, x0=None):
    """Apply the resolvent B_h(tau) = (I + tau L_h^2)^{-1}.

    Returns (v, w) with v = B_h f and w = L_h v.  Raises SolveFailure if the
    conjugate gradient iteration does not converge.
    """
    op = build_shifted_biharmonic(A_op, tau)
    v, report = cg_solve(op, f.coeffs, config, x0=x0)
    if not report.converged:
        raise SolveFailure(
            f"resolvent solve stalled at residual {report.residual:.3e} "
            f"after {report.iterations} iterations")
    w = A_op.dot(v)
    return f.like(v), f.like(w)


@dataclass
class PreEvaluation:
    """Everything the scalar pre-evaluation produced, so the step can finish
    with no further solves: r_next and the two resolvent applications."""

    r_next: float
    Yg: np.ndarray          # B_h (u + tau*Pi f)
    Yb: np.ndarray          # B_h (Pi b)
    reports: tuple[SolveReport, ...]


def pre_evaluate(u_coeffs: np.ndarray, r: float, pb: np.ndarray, tau: float,
                 A_op: SparseSymOp, source_coeffs: np.ndarray | None,
                 config: KrylovConfig | None = None,
                 warm_g: np.ndarray | None = None,
                 warm_b: np.ndarray | None = None) -> PreEvaluation:
    """Advance the scalar by one (sub)step of size tau before the field solve.

    Solves the two SPD systems B_h g and B_h (Pi b), forms
        xi    = g - (tau*r - (tau/2) (Pi b, u)) * Pi b,
        R     = (Pi b, B_h xi) / (1 + (tau/2) (Pi b, B_h Pi b)),
        r_next = r - (1/2) (Pi b, u) + (1/2) R,
    with g = u + tau * Pi f.  The returned resolvent images make the field
    update u_next = Yg - tau * r_next * Yb exact, so each step costs exactly
    two CG solves.
    """
    op = build_shifted_biharmonic(A_op, tau)
    g = u_coeffs if source_coeffs is None else u_coeffs + tau * source_coeffs
    x0_g = warm_g if warm_g is not None else g
    x0_b = warm_b if warm_b is not None else pb
    Yg, rep_g = cg_solve(op, g, config, x0=x0_g)
    Yb, rep_b = cg_solve(op, pb, config, x0=x0_b)

    bu = float(pb @ u_coeffs)
    c1 = tau * r - 0.5 * tau * bu
    b_Bxi = float(pb @ Yg) - c1 * float(pb @ Yb)
    denom = 1.0 + 0.5 * tau * float(pb @ Yb)
    R = b_Bxi / denom
    r_next = r - 0.5 * bu + 0.5 * R
    return PreEvaluation(r_next, Yg, Yb, (rep_g, rep_b))


def pre_evaluate_r_first(state: SavState, dt: float, model, A_op: SparseSymOp,
                         config: KrylovConfig | None = None) -> float:
    """Closed-form r^{n+1} of the first-order scheme, before any field solve."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    b = b_of(state.u, model)
    pre = pre_evaluate(state.u.coeffs, state.r, b.projected.coeffs, dt,
                       A_op, None, config)
    return pre.r_next


def pre_evaluate_r_half_second(state: SavState, u_star: DgField, dt: float,
                               model, A_op: SparseSymOp,
                               config: KrylovConfig | None = None) -> float:
    """Closed-form r^{n+1/2} of the second-order scheme.

    Identical to the first-order pre-evaluation with the half step dt/2 and
    the extrapolated nonlinearity state u_star = (3/2) u^n - (1/2) u^{n-1}.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    b = b_of(u_star, model)
    pre = pre_evaluate(state.u.coeffs, state.r, b.projected.coeffs, dt / 2.0,
                       A_op, None, config)
    return pre.r_next
