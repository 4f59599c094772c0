"""Model potentials and manufactured cases.

The manufactured solutions are verified against the PDE itself: finite
differences confirm the exact field is an eigenfunction of the Laplacian,
the decay rate matches the quartic dispersion relation, and the source is
the nonlinearity on the exact solution.  Together these make the residual
of u_t = -(Delta + a/2)^2 u - Phi'(u) + f vanish identically.
"""

import numpy as np
import pytest

from gradflow.mesh import BcKind, build_rect_mesh
from gradflow.problems import (ManufacturedCase, ModelSpec, example_5_1,
                               example_5_2, get_case, random_field,
                               swift_hohenberg)
from gradflow.space import DgSpace

CASE_RATES = {
    # name -> (wavenumber, decay rate); rate must equal (1 - 2 w^2)^2
    "ex5.1-periodic": (0.5, 0.25),
    "ex5.1-neumann": (0.5, 0.25),
    "ex5.2": (0.25, 49.0 / 64.0),
}


def test_dphi_is_the_derivative_of_phi():
    rng = np.random.default_rng(401)
    h = 1e-5
    for eps, g in ((0.025, 0.0), (0.3, 0.0), (0.025, 0.05), (0.2, -0.3)):
        model = swift_hohenberg(eps, g)
        u = rng.uniform(-2.0, 2.0, size=200)
        fd = (model.phi(u + h) - model.phi(u - h)) / (2 * h)
        assert np.allclose(model.dphi(u), fd, rtol=1e-6, atol=1e-8)


def test_well_depth_closed_form():
    # At the stationary points u^2 = g u + eps, the potential reduces to
    # Phi = -(1/12) (g u (g^2 + 4 eps) + eps (g^2 + 3 eps)).
    for eps, g in ((0.025, 0.0), (0.3, 0.0), (0.025, 0.05), (0.4, 0.3)):
        model = swift_hohenberg(eps, g)
        disc = np.sqrt(g * g + 4.0 * eps)
        for root in ((g + disc) / 2.0, (g - disc) / 2.0):
            want = -(g * root * (g**2 + 4 * eps) + eps * (g**2 + 3 * eps)) / 12.0
            assert model.phi(root) == pytest.approx(want, abs=1e-14)
            assert model.dphi(root) == pytest.approx(0.0, abs=1e-14)
        if g == 0.0:
            assert model.phi(np.sqrt(eps)) == pytest.approx(-eps**2 / 4.0,
                                                            abs=1e-15)


def test_model_basics():
    model = swift_hohenberg(0.025, 0.05)
    assert model.a == 2.0
    assert model.epsilon == 0.025 and model.g == 0.05
    assert model.phi_min is not None and model.phi_min <= 0.0
    assert model.phi(0.0) == 0.0 and model.dphi(0.0) == 0.0


def test_default_stabilization_guard():
    # wells deeper than -1 cannot use B = |domain|
    with pytest.raises(ValueError):
        swift_hohenberg(3.0)
    model = swift_hohenberg(3.0, B=100.0)
    assert model.B == 100.0
    mesh = build_rect_mesh(((0.0, 1.0),), 2)
    assert model.b_constant(mesh) == 100.0
    assert swift_hohenberg(0.3).b_constant(mesh) == pytest.approx(mesh.volume)


def test_decay_rate_matches_dispersion_relation():
    for name, (w, rate) in CASE_RATES.items():
        assert rate == pytest.approx((1.0 - 2.0 * w * w) ** 2, abs=1e-15), name
        case = get_case(name)
        # amplitude at (x, y) fixed decays like e^{-rate t}
        x, y = 1.3, 0.7
        v0 = case.exact(x, y, 0.0)
        v1 = case.exact(x, y, 1.0)
        assert v1 == pytest.approx(v0 * np.exp(-rate), rel=1e-12), name


def test_exact_solution_is_a_laplacian_eigenfunction():
    rng = np.random.default_rng(409)
    h = 1e-4
    for name, (w, _rate) in CASE_RATES.items():
        case = get_case(name)
        pts = rng.uniform(-2.0, 2.0, size=(50, 2))
        t = 0.37
        x, y = pts[:, 0], pts[:, 1]
        lap = (case.exact(x + h, y, t) + case.exact(x - h, y, t)
               + case.exact(x, y + h, t) + case.exact(x, y - h, t)
               - 4.0 * case.exact(x, y, t)) / h**2
        assert np.allclose(lap, -2.0 * w * w * case.exact(x, y, t),
                           atol=1e-6), name


def test_time_derivative_matches_rate():
    rng = np.random.default_rng(419)
    h = 1e-6
    for name, (_w, rate) in CASE_RATES.items():
        case = get_case(name)
        pts = rng.uniform(-3.0, 3.0, size=(30, 2))
        t = 0.21
        x, y = pts[:, 0], pts[:, 1]
        dudt = (case.exact(x, y, t + h) - case.exact(x, y, t - h)) / (2 * h)
        assert np.allclose(dudt, -rate * case.exact(x, y, t), atol=1e-7), name


def test_source_is_nonlinearity_on_exact_solution():
    rng = np.random.default_rng(421)
    for name in CASE_RATES:
        case = get_case(name)
        pts = rng.uniform(-4.0, 4.0, size=(100, 2))
        for t in (0.0, 0.5, 2.0):
            v = case.exact(pts[:, 0], pts[:, 1], t)
            assert np.allclose(case.source(pts[:, 0], pts[:, 1], t),
                               case.model.dphi(v), atol=1e-14), name


def test_initial_condition_is_exact_at_time_zero():
    rng = np.random.default_rng(431)
    for name in CASE_RATES:
        case = get_case(name)
        pts = rng.uniform(-4.0, 4.0, size=(50, 2))
        assert np.allclose(case.initial(pts[:, 0], pts[:, 1]),
                           case.exact(pts[:, 0], pts[:, 1], 0.0), atol=1e-15)


def test_case_registry_and_domains():
    per = get_case("ex5.1-periodic")
    assert per.model.bc_kind is BcKind.PERIODIC
    assert per.domain == ((-2 * np.pi, 2 * np.pi), (-2 * np.pi, 2 * np.pi))
    assert per.model.epsilon == 0.025 and per.model.g == 0.0

    neu = get_case("ex5.1-neumann")
    assert neu.model.bc_kind is BcKind.NEUMANN_FREE
    assert neu.domain == ((-np.pi, 3 * np.pi), (-np.pi, 3 * np.pi))
    assert neu.model.g == 0.05

    big = get_case("ex5.2")
    assert big.domain == ((-4 * np.pi, 4 * np.pi), (-4 * np.pi, 4 * np.pi))

    mesh = neu.build_mesh(8)
    assert mesh.bc_kind is BcKind.NEUMANN_FREE
    assert mesh.counts == (8, 8)

    with pytest.raises(ValueError):
        get_case("ex9.9")
    with pytest.raises(ValueError):
        example_5_1("mixed")
    assert isinstance(example_5_2(), ManufacturedCase)


def test_random_field_determinism_and_range():
    mesh = build_rect_mesh(((0.0, 2 * np.pi), (0.0, 2 * np.pi)), 8)
    f1 = random_field(mesh, 1, seed=3)
    f2 = random_field(mesh, 1, seed=3)
    f3 = random_field(mesh, 1, seed=4)
    assert np.array_equal(f1.coeffs, f2.coeffs)
    assert not np.array_equal(f1.coeffs, f3.coeffs)

    # projection of quad-point values round-trips, so the values at the
    # quadrature nodes respect the requested bounds
    space = DgSpace.get(mesh, 1)
    vals = space.quad_values(random_field(mesh, 1, seed=5, low=-0.25,
                                          high=0.25).coeffs)
    assert vals.min() >= -0.25 - 1e-12 and vals.max() <= 0.25 + 1e-12


def test_model_spec_is_plain_data():
    model = ModelSpec(a=2.0, phi=lambda u: u**2, dphi=lambda u: 2 * u, B=5.0)
    mesh = build_rect_mesh(((0.0, 1.0),), 2)
    assert model.b_constant(mesh) == 5.0
    assert ModelSpec(a=1.0, phi=model.phi, dphi=model.dphi).b_constant(mesh) \
        == pytest.approx(1.0)
