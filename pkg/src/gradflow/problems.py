"""Model definitions: the Swift-Hohenberg family and manufactured test cases.

A model is the pair (a, Phi) of the flow u_t = -(Delta + a/2)^2 u - Phi'(u),
plus the stabilization constant B that keeps int Phi + B positive.  The
manufactured cases pin an exact solution by adding a source term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import BcKind, RectMesh, build_rect_mesh
from .space import DgField, DgSpace


@dataclass
class ModelSpec:
    """One gradient-flow model.

    B = None means "volume of the domain", resolved against the mesh at run
    time.  phi_min, when known, enables an a-priori check that B keeps the
    square root in r well defined for every possible state.
    """

    a: float
    phi: Callable
    dphi: Callable
    B: float | None = None
    bc_kind: BcKind = BcKind.PERIODIC
    epsilon: float | None = None
    g: float | None = None
    phi_min: float | None = None

    def b_constant(self, mesh: RectMesh) -> float:
        return self.B if self.B is not None else mesh.volume


def swift_hohenberg(epsilon: float, g: float = 0.0,
                    bc_kind: BcKind = BcKind.PERIODIC,
                    B: float | None = None) -> ModelSpec:
    """Swift-Hohenberg model: a = 2, Phi(u) = -(eps/2)u^2 - (g/3)u^3 + u^4/4.

    The double-well minima sit at u = (g +- sqrt(g^2 + 4 eps))/2; the default
    B = |Omega| is accepted only when min Phi >= -1, which makes
    int Phi + B > 0 for every state.
    """
    eps = float(epsilon)
    g = float(g)

    def phi(u):
        return -0.5 * eps * u**2 - (g / 3.0) * u**3 + 0.25 * u**4

    def dphi(u):
        return -eps * u - g * u**2 + u**3

    disc = g * g + 4.0 * eps
    if disc >= 0.0:
        roots = [(g + np.sqrt(disc)) / 2.0, (g - np.sqrt(disc)) / 2.0]
        phi_min = float(min(0.0, *[phi(v) for v in roots]))
    else:
        phi_min = 0.0
    if B is None and phi_min < -1.0:
        raise ValueError(
            f"min Phi = {phi_min:.6e} < -1: the default B = |Omega| cannot keep "
            "int Phi + B positive; pass an explicit B")
    return ModelSpec(a=2.0, phi=phi, dphi=dphi, B=B, bc_kind=bc_kind,
                     epsilon=eps, g=g, phi_min=phi_min)


@dataclass
class ManufacturedCase:
    """An exact-solution benchmark: model + domain + exact/initial/source."""

    name: str
    domain: tuple
    model: ModelSpec
    exact: Callable      # (x, y, t) -> u
    initial: Callable    # (x, y) -> u at t = 0
    source: Callable     # (x, y, t) -> f

    def build_mesh(self, n_cells) -> RectMesh:
        return build_rect_mesh(self.domain, n_cells, self.model.bc_kind)


def _decaying_product_case(name, domain, bc_kind, epsilon, g, rate, wavenumber):
    """Exact solution e^{-rate t} sin(wx) sin(wy) for the SH flow.

    With a = 2 the linear part -(Delta + 1)^2 maps this mode to -rate times
    itself when rate = (1 - 2 w^2)^2, so the matching source is exactly the
    nonlinearity evaluated on the exact solution.
    """
    model = swift_hohenberg(epsilon, g, bc_kind=bc_kind)
    w = wavenumber

    def exact(x, y, t):
        return np.exp(-rate * t) * np.sin(w * x) * np.sin(w * y)

    def initial(x, y):
        return np.sin(w * x) * np.sin(w * y)

    def source(x, y, t):
        v = exact(x, y, t)
        return model.dphi(v)

    return ManufacturedCase(name, domain, model, exact, initial, source)


def example_5_1(variant: str = "periodic") -> ManufacturedCase:
    """Decaying sin(x/2) sin(y/2) benchmark, periodic or free-boundary flavor."""
    if variant == "periodic":
        return _decaying_product_case(
            "ex5.1-periodic", ((-2 * np.pi, 2 * np.pi), (-2 * np.pi, 2 * np.pi)),
            BcKind.PERIODIC, epsilon=0.025, g=0.0, rate=0.25, wavenumber=0.5)
    if variant == "neumann":
        return _decaying_product_case(
            "ex5.1-neumann", ((-np.pi, 3 * np.pi), (-np.pi, 3 * np.pi)),
            BcKind.NEUMANN_FREE, epsilon=0.025, g=0.05, rate=0.25, wavenumber=0.5)
    raise ValueError(f"unknown variant {variant!r}; expected 'periodic' or 'neumann'")


def example_5_2() -> ManufacturedCase:
    """Slowly decaying sin(x/4) sin(y/4) benchmark on the large periodic box."""
    return _decaying_product_case(
        "ex5.2", ((-4 * np.pi, 4 * np.pi), (-4 * np.pi, 4 * np.pi)),
        BcKind.PERIODIC, epsilon=0.025, g=0.0, rate=49.0 / 64.0, wavenumber=0.25)


CASES = {
    "ex5.1-periodic": lambda: example_5_1("periodic"),
    "ex5.1-neumann": lambda: example_5_1("neumann"),
    "ex5.2": example_5_2,
}


def get_case(name: str) -> ManufacturedCase:
    try:
        factory = CASES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; available: {sorted(CASES)}") from None
    return factory()


def random_field(mesh: RectMesh, degree: int, seed: int,
                 low: float = -0.5, high: float = 0.5) -> DgField:
    """Projection of seeded uniform-random point values; deterministic per seed."""
    space = DgSpace.get(mesh, degree)
    rng = np.random.default_rng(seed)
    values = rng.uniform(low, high, size=space._value_shape())
    return DgField(mesh, degree, space.project_values(values))
