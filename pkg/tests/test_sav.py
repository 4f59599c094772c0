"""Scalar-variable machinery: resolvent, pre-evaluation, energies.

The pre-evaluation oracle solves the full coupled linear system

    (I + tau A^2) u1 + tau * r1 * pb = u + tau f
    r1 - (1/2) pb . u1               = r - (1/2) pb . u

densely in the (u1, r1) unknowns and compares against the two-solve
closed form, which never sees the coupled matrix.
"""

import numpy as np
import pytest

from gradflow.forms import assemble_A
from gradflow.mesh import build_rect_mesh
from gradflow.problems import get_case, random_field, swift_hohenberg
from gradflow.sav import (SavState, apply_Bh, b_of, energies, init_r,
                          phi_integral, pre_evaluate, pre_evaluate_r_first,
                          pre_evaluate_r_half_second)
from gradflow.solvers import KrylovConfig, SolveFailure
from gradflow.space import DgField, DgSpace, gauss_rule

TIGHT = KrylovConfig(rel_tol=1e-13, abs_tol=1e-15)


def _setup(case_name="ex5.1-periodic", n=8, degree=1):
    case = get_case(case_name)
    mesh = case.build_mesh(n)
    space = DgSpace.get(mesh, degree)
    A = assemble_A(mesh, degree, case.model.a)
    u0 = space.project(case.initial)
    return case, mesh, space, A, u0


def _overintegrated_phi(w, model, factor=4):
    """int Phi(w) on a quadrature rule `factor` times finer than assembly."""
    space = DgSpace.get(w.mesh, w.degree)
    nodes, weights = gauss_rule(factor * (w.degree + 1))
    vals = model.phi(space.lattice_values(w.coeffs, nodes))
    jac = np.prod([h / 2.0 for h in w.mesh.widths])
    return float(jac * np.einsum("iqjr,q,r->", vals, weights, weights))


def test_phi_integral_close_to_overintegration():
    case, mesh, space, A, u0 = _setup(n=32, degree=3)
    coarse = phi_integral(u0, case.model)
    fine = _overintegrated_phi(u0, case.model)
    assert coarse == pytest.approx(fine, rel=1e-8, abs=1e-10)


def test_b_of_scaling_with_stabilization_constant():
    case, mesh, space, A, u0 = _setup()
    eps, g = case.model.epsilon, case.model.g
    m1 = swift_hohenberg(eps, g, B=4.0)
    m2 = swift_hohenberg(eps, g, B=8.0)
    b1 = b_of(u0, m1)
    b2 = b_of(u0, m2)
    # same Phi integral, denominators follow sqrt(integral + B)
    assert b1.phi_integral == pytest.approx(b2.phi_integral, rel=1e-13)
    assert b1.denominator == pytest.approx(np.sqrt(b1.phi_integral + 4.0), rel=1e-13)
    assert b2.denominator == pytest.approx(np.sqrt(b1.phi_integral + 8.0), rel=1e-13)
    ratio = b1.denominator / b2.denominator
    assert np.allclose(b2.projected.coeffs, b1.projected.coeffs * ratio,
                       atol=1e-14)


def test_b_of_pointwise_matches_projection_route():
    case, mesh, space, A, u0 = _setup(degree=2)
    b = b_of(u0, case.model)
    X, Y = space.quad_points()
    shape = space._value_shape()
    pts = np.column_stack([np.broadcast_to(X, shape).ravel(),
                           np.broadcast_to(Y, shape).ravel()])
    direct = b.pointwise(pts).reshape(shape)
    reproj = space.project_values(direct)
    assert np.allclose(reproj, b.projected.coeffs, atol=1e-12)


def test_init_r_matches_direct_quadrature():
    case, mesh, space, A, u0 = _setup(degree=2)
    model = case.model
    vals = model.phi(space.quad_values(u0.coeffs))
    ref = np.sqrt(space.integrate(vals) + model.b_constant(mesh))
    assert init_r(u0, model) == pytest.approx(ref, rel=1e-12)


def test_init_r_rejects_insufficient_stabilization():
    # deep wells plus a tiny explicit B cannot keep the radicand positive
    model = swift_hohenberg(0.3, 0.0, B=1e-4)
    mesh = build_rect_mesh(((0.0, 2 * np.pi), (0.0, 2 * np.pi)), 4)
    u0 = DgSpace.get(mesh, 1).project(lambda x, y: np.zeros_like(x))
    with pytest.raises(ValueError):
        init_r(u0, model)


def test_b_of_rejects_nonpositive_radicand():
    model = swift_hohenberg(0.3, 0.0, B=1e-4)
    mesh = build_rect_mesh(((0.0, 2 * np.pi), (0.0, 2 * np.pi)), 4)
    well = np.sqrt(0.3)  # bottom of the double well, Phi = -eps^2/4 < 0
    u = DgSpace.get(mesh, 1).project(lambda x, y: np.full_like(x, well))
    with pytest.raises(ValueError):
        b_of(u, model)


def test_energies_closed_form_and_offset():
    # u = sin(x/2) sin(y/2) on [-2pi, 2pi]^2 with a = 2, eps = 0.025, g = 0:
    # q = -u/2, so E_orig = pi^2/2 + (-0.0125 * 4pi^2 + 0.25 * 9pi^2/4)
    #                     = 1.0125 pi^2, and E_mod - E_orig = B at t = 0.
    case, mesh, space, A, u0 = _setup(n=64, degree=3)
    state = SavState(u0, u0.like(A.dot(u0.coeffs)), init_r(u0, case.model))
    e = energies(state, case.model)
    assert e.original == pytest.approx(1.0125 * np.pi ** 2, rel=1e-8)
    assert e.modified - e.original == pytest.approx(
        case.model.b_constant(mesh), rel=1e-10)


def test_resolvent_matches_dense_inverse():
    case, mesh, space, A, u0 = _setup(n=4)
    tau = 0.01
    Ad = A.to_dense()
    dense = np.linalg.inv(np.eye(A.n) + tau * Ad @ Ad)
    rng = np.random.default_rng(311)
    for _ in range(5):
        f = DgField(mesh, 1, rng.standard_normal(A.n))
        v, w = apply_Bh(tau, f, A, TIGHT)
        ref = dense @ f.coeffs
        assert np.allclose(v.coeffs, ref, atol=1e-9)
        assert np.allclose(w.coeffs, Ad @ ref, atol=1e-8)


def test_resolvent_inverts_its_kernel():
    case, mesh, space, A, u0 = _setup(n=8)
    tau = 0.05
    Ad = A.to_dense()
    rng = np.random.default_rng(313)
    x = rng.standard_normal(A.n)
    f = DgField(mesh, 1, x + tau * Ad @ (Ad @ x))
    v, _ = apply_Bh(tau, f, A, TIGHT)
    assert np.allclose(v.coeffs, x, atol=1e-8)


def test_resolvent_contracts_and_stays_nonnegative():
    # ||B_h f|| <= ||f|| and (f, B_h f) >= 0 for the SPD resolvent
    case, mesh, space, A, u0 = _setup(n=8)
    rng = np.random.default_rng(317)
    for tau in (1e-3, 1e-2, 1e-1):
        for _ in range(20):
            f = DgField(mesh, 1, rng.standard_normal(A.n))
            v, _ = apply_Bh(tau, f, A, TIGHT)
            nf = np.linalg.norm(f.coeffs)
            assert np.linalg.norm(v.coeffs) <= nf * (1.0 + 1e-9)
            assert float(f.coeffs @ v.coeffs) >= -1e-10 * nf ** 2


def test_resolvent_is_symmetric():
    case, mesh, space, A, u0 = _setup(n=8)
    rng = np.random.default_rng(331)
    tau = 0.02
    for _ in range(10):
        f = DgField(mesh, 1, rng.standard_normal(A.n))
        g = DgField(mesh, 1, rng.standard_normal(A.n))
        vf, _ = apply_Bh(tau, f, A, TIGHT)
        vg, _ = apply_Bh(tau, g, A, TIGHT)
        lhs = float(g.coeffs @ vf.coeffs)
        rhs = float(f.coeffs @ vg.coeffs)
        assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, abs(lhs)))


def test_resolvent_propagates_solver_failure():
    case, mesh, space, A, u0 = _setup(n=8)
    cfg = KrylovConfig(rel_tol=1e-14, abs_tol=1e-16, max_iter=1)
    f = DgField(mesh, 1, np.ones(A.n))
    with pytest.raises(SolveFailure):
        apply_Bh(10.0, f, A, cfg)


def _dense_coupled_oracle(u, r, pb, tau, A, f=None):
    """Solve the (m+1)-dimensional coupled system directly."""
    m = u.shape[0]
    Ad = A.to_dense()
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = np.eye(m) + tau * Ad @ Ad
    K[:m, m] = tau * pb
    K[m, :m] = -0.5 * pb
    K[m, m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[:m] = u if f is None else u + tau * f
    rhs[m] = r - 0.5 * float(pb @ u)
    z = np.linalg.solve(K, rhs)
    return z[:m], float(z[m])


def test_pre_evaluation_matches_dense_coupled_solve():
    case, mesh, space, A, u0 = _setup(n=8)
    model = case.model
    r0 = init_r(u0, model)
    b = b_of(u0, model)
    pb = b.projected.coeffs
    f = space.project(lambda x, y: case.source(x, y, 1e-3)).coeffs
    tau = 1e-3
    pre = pre_evaluate(u0.coeffs, r0, pb, tau, A, f, TIGHT)
    u1 = pre.Yg - tau * pre.r_next * pre.Yb
    u_ref, r_ref = _dense_coupled_oracle(u0.coeffs, r0, pb, tau, A, f)
    assert pre.r_next == pytest.approx(r_ref, abs=1e-10 * (1 + abs(r_ref)))
    assert np.allclose(u1, u_ref, atol=1e-8)


def test_pre_evaluation_matches_dense_on_larger_mesh():
    case, mesh, space, A, u0 = _setup(n=16)
    model = case.model
    r0 = init_r(u0, model)
    rng = np.random.default_rng(337)
    u = random_field(mesh, 1, seed=5).coeffs
    r = r0 + rng.uniform(-0.1, 0.1)
    b = b_of(u0.like(u), model)
    pb = b.projected.coeffs
    for tau in (1e-3, 1e-2, 1e-1):
        pre = pre_evaluate(u, r, pb, tau, A, None, TIGHT)
        u1 = pre.Yg - tau * pre.r_next * pre.Yb
        u_ref, r_ref = _dense_coupled_oracle(u, r, pb, tau, A)
        assert abs(pre.r_next - r_ref) <= 1e-7 * (1.0 + abs(r_ref))
        assert np.linalg.norm(u1 - u_ref) <= 1e-7 * (1.0 + np.linalg.norm(u_ref))


def test_pre_evaluation_agrees_with_fixed_point_iteration():
    # r1 solves r1 = r - (1/2) pb.u + (1/2) pb . B_h(g - tau r1 pb);
    # iterate that map directly and compare.
    case, mesh, space, A, u0 = _setup(n=8)
    model = case.model
    r = init_r(u0, model)
    pb = b_of(u0, model).projected.coeffs
    tau = 1e-2
    pre = pre_evaluate(u0.coeffs, r, pb, tau, A, None, TIGHT)

    g = u0.coeffs
    r_fp = r
    for _ in range(200):
        v, _ = apply_Bh(tau, u0.like(g - tau * r_fp * pb), A, TIGHT)
        r_fp = r - 0.5 * float(pb @ u0.coeffs) + 0.5 * float(pb @ v.coeffs)
    assert pre.r_next == pytest.approx(r_fp, abs=1e-10 * (1 + abs(r_fp)))


def test_pre_evaluation_denominator_stays_above_one():
    # 1 + (tau/2)(pb, B_h pb) >= 1 because the resolvent is positive definite.
    case, mesh, space, A, u0 = _setup(n=8)
    model = case.model
    for seed in range(50):
        u = random_field(mesh, 1, seed=seed, low=-1.0, high=1.0)
        pb = b_of(u, model).projected.coeffs
        for tau in (1e-3, 1e-1):
            v, _ = apply_Bh(tau, u.like(pb), A, TIGHT)
            denom = 1.0 + 0.5 * tau * float(pb @ v.coeffs)
            assert denom >= 1.0 - 1e-12


def test_scalar_helpers_delegate_to_the_kernel():
    case, mesh, space, A, u0 = _setup(n=8)
    model = case.model
    state = SavState(u0, u0.like(A.dot(u0.coeffs)), init_r(u0, model))
    dt = 1e-2

    pb1 = b_of(state.u, model).projected.coeffs
    ref1 = pre_evaluate(state.u.coeffs, state.r, pb1, dt, A, None, TIGHT).r_next
    got1 = pre_evaluate_r_first(state, dt, model, A, TIGHT)
    assert got1 == pytest.approx(ref1, abs=1e-13)

    u_star = u0.like(1.5 * u0.coeffs - 0.5 * u0.coeffs * 0.9)
    pb2 = b_of(u_star, model).projected.coeffs
    ref2 = pre_evaluate(state.u.coeffs, state.r, pb2, dt / 2.0, A, None,
                        TIGHT).r_next
    got2 = pre_evaluate_r_half_second(state, u_star, dt, model, A, TIGHT)
    assert got2 == pytest.approx(ref2, abs=1e-13)

    with pytest.raises(ValueError):
        pre_evaluate_r_first(state, -1.0, model, A)
    with pytest.raises(ValueError):
        pre_evaluate_r_half_second(state, u_star, 0.0, model, A)
