"""Energy-stable solvers for fourth-order gradient flows.

Discontinuous Galerkin discretization of u_t = -(Laplacian + a/2)^2 u - Phi'(u)
in mixed form, with auxiliary-scalar time stepping that dissipates a modified
energy for every step size.  Three interchangeable linear-solve strategies are
provided; the hybrid one advances the scalar in closed form first so each step
costs two conjugate-gradient solves on a fixed symmetric positive system.
"""

from .backend import NAME as backend_name
from .diagnostics import (ErrorRecord, TimingRecord, compute_errors, eoc,
                          run_complexity_suite, run_space_sweep, run_time_sweep)
from .forms import SparseSymOp, apply_Lh, assemble_A, build_shifted_biharmonic
from .mesh import BcKind, RectMesh, build_rect_mesh
from .problems import (ManufacturedCase, ModelSpec, example_5_1, example_5_2,
                       get_case, random_field, swift_hohenberg)
from .sav import (BField, EnergyPair, SavState, apply_Bh, b_of, energies,
                  init_r, phi_integral, pre_evaluate, pre_evaluate_r_first,
                  pre_evaluate_r_half_second)
from .solvers import (KrylovConfig, SingularMatrixError, SolveFailure,
                      SolveReport, cg_solve, dense_solve, minres_solve)
from .space import (DgField, DgSpace, eval_at, eval_at_points, l2_inner,
                    l2_norm, project_l2)
from .steppers import (StepPlan, TraceRecord, attach_source, identity_residual,
                       initial_state, make_stepper, run_flow,
                       step_first_augmented, step_first_hybrid,
                       step_first_reduced, step_second_hybrid)

__version__ = "0.1.0"

__all__ = [
    "BcKind", "RectMesh", "build_rect_mesh",
    "DgField", "DgSpace", "project_l2", "eval_at", "eval_at_points",
    "l2_inner", "l2_norm",
    "SparseSymOp", "assemble_A", "apply_Lh", "build_shifted_biharmonic",
    "KrylovConfig", "SolveReport", "SolveFailure", "SingularMatrixError",
    "cg_solve", "minres_solve", "dense_solve",
    "SavState", "EnergyPair", "BField", "phi_integral", "b_of", "init_r",
    "energies", "apply_Bh", "pre_evaluate", "pre_evaluate_r_first",
    "pre_evaluate_r_half_second",
    "ModelSpec", "ManufacturedCase", "swift_hohenberg", "example_5_1",
    "example_5_2", "get_case", "random_field",
    "StepPlan", "TraceRecord", "attach_source", "identity_residual",
    "initial_state", "make_stepper", "run_flow", "step_first_hybrid",
    "step_first_augmented", "step_first_reduced", "step_second_hybrid",
    "ErrorRecord", "TimingRecord", "compute_errors", "eoc",
    "run_space_sweep", "run_time_sweep", "run_complexity_suite",
    "backend_name", "__version__",
]
