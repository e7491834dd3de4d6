"""Coupled 3D-1D (and 2D-1D) tissue/vessel diffusion with Lagrange-multiplier
coupling, a parameter-robust block-diagonal preconditioner built on spectral
fractional powers of the curve operator, and the associated condition-number,
iteration-count, and perfusion experiments."""

__version__ = "0.1.0"

from .coupling import CouplingOperator, apply_adjoint, assemble_averaging, assemble_trace
from .eigenproblems import ConditionResult, PencilSpec, condition_number, exponent_sweep
from .fem import FemVector, FunctionSpace, assemble_mass, assemble_stiffness, interpolate
from .linalg import (
    SolverReport,
    SpectralDecomposition,
    conjugate_gradient,
    extreme_eigenvalues,
    generalized_symmetric_eig,
    minres,
    spmv,
)
from .meshing import (
    CurveMesh,
    Mesh,
    embedded_curve,
    synthetic_vascular_tree,
    unit_cube_mesh,
    unit_square_mesh,
)
from .preconditioning import (
    BlockPreconditioner,
    FractionalOperator,
    ProblemParameters,
    SchurApprox,
    apply_preconditioner,
    build_fractional,
    build_preconditioner,
    build_schur,
    scalar_model_condition,
    schur_apply,
)
from .timestepping import (
    BlockSystem,
    State,
    TimeStepProblem,
    assemble_system,
    run_transient,
    step,
    step_rhs,
)
