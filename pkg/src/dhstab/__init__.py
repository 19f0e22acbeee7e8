"""Stability radii of dissipative Hamiltonian systems.

Systems x' = (J - R) Q x with skew-Hermitian J, positive semidefinite
Hermitian R, and positive definite Hermitian Q.  The package computes

* unstructured restricted stability radii for perturbations of J (equal to
  those of R) and of Q, through the H-infinity norm of an associated
  transfer function — directly for small problems, and through a
  structure-preserving interpolatory subspace framework at large scale;
* the structured restricted radius for Hermitian perturbations of R, through
  global optimization of an eigenvalue-based backward error, again with a
  subspace variant;

plus seeded problem generators, Matrix Market I/O, a-posteriori perturbation
verification, and a command-line interface (``dhstab``).
"""

__version__ = "0.1.0"

from .core import (
    DegenerateProblemError,
    DHStructureError,
    DHSystem,
    FrameworkOptions,
    IterationRecord,
    ObliqueBreakdownError,
    RadiusResult,
    ReducedDH,
    RestrictionPair,
    SingularShiftError,
    UnstableSystemError,
    ValidationReport,
    dh_system,
    oblique_basis,
    orthonormal_extend,
    realify_block,
    reduce_dh,
    reduce_structured,
    validate_dh,
)
from .solvers import (
    BrakeOperator,
    SecondOrderDH,
    ShiftedSolver,
    assemble_brake_dh,
    make_solver,
    solve_secondorder,
    solve_shifted,
    validate_secondorder,
)
from .hinf import (
    HinfResult,
    StateSpace,
    eval_transfer,
    hinf_norm_bb,
    sigma_max_at,
    sigma_max_with_derivative,
    transfer_statespace,
)
from .eigopt import (
    OptimizerOutcome,
    bracket_maximum,
    maximize_pq,
    minimize_pq,
)
from .unstructured import (
    InitialSelection,
    radius_q,
    radius_rj,
    select_initial_points,
)
from .structured import (
    EtaEvaluation,
    StructuredPieces,
    assemble_h0_h1,
    eta_structured,
    radius_structured_sf,
    radius_structured_small,
)
from .generators import GenSpec, gen_brake_toy, gen_dense, gen_sparse, generate
from .mmio import (
    read_dh_dir,
    read_matrix_market,
    secondorder_from_components,
    write_dh_dir,
    write_matrix_market,
)
from .verification import (
    SampleSummary,
    sample_structured_spectra,
    verify_unstructured,
)

__all__ = [
    "__version__",
    # core
    "DHSystem", "RestrictionPair", "FrameworkOptions", "RadiusResult",
    "IterationRecord", "ReducedDH", "ValidationReport", "dh_system",
    "validate_dh", "reduce_dh", "reduce_structured", "oblique_basis",
    "orthonormal_extend", "realify_block",
    "DHStructureError", "ObliqueBreakdownError", "SingularShiftError",
    "UnstableSystemError", "DegenerateProblemError",
    # solvers
    "ShiftedSolver", "SecondOrderDH", "BrakeOperator", "assemble_brake_dh",
    "solve_secondorder", "solve_shifted", "validate_secondorder",
    "make_solver",
    # hinf
    "StateSpace", "HinfResult", "hinf_norm_bb", "transfer_statespace",
    "eval_transfer", "sigma_max_at", "sigma_max_with_derivative",
    # eigopt
    "OptimizerOutcome", "minimize_pq", "maximize_pq", "bracket_maximum",
    # unstructured
    "radius_rj", "radius_q", "select_initial_points", "InitialSelection",
    # structured
    "StructuredPieces", "EtaEvaluation", "assemble_h0_h1", "eta_structured",
    "radius_structured_small", "radius_structured_sf",
    # generators
    "GenSpec", "gen_dense", "gen_sparse", "gen_brake_toy", "generate",
    # mmio
    "read_matrix_market", "write_matrix_market", "read_dh_dir",
    "write_dh_dir", "secondorder_from_components",
    # verification
    "verify_unstructured", "sample_structured_spectra", "SampleSummary",
]
