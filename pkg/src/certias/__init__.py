"""Worst-case certification of a dual active-set QP solver over parameter sets."""

from certias.analysis import (
    SlackProfile,
    SweepTable,
    iteration_cdf,
    slack_profile,
    sweep,
)
from certias.certifier import (
    BudgetExceededError,
    CertificationResult,
    CertifiedRegion,
    certify,
)
from certias.examples import double_integrator_problem, toy_problem
from certias.geometry import (
    GeometryError,
    LpResult,
    Polyhedron,
    RowExplosionError,
    bounding_box,
    contains,
    interior_point,
    is_empty,
    project_fm,
    remove_redundant,
    solve_lp,
)
from certias.lpp import (
    ErrorModel,
    hypercube_inflate,
    lift_partition_project,
    rel_to_abs,
)
from certias.mpqp import AffineMap, MpQP, load_problem, subproblem_maps
from certias.solver import (
    ErrorInjector,
    RunResult,
    SolverState,
    Tolerances,
    run,
)
from certias.validation import (
    InfeasibleProblemError,
    ValidationReport,
    brute_force_solve,
    search_realization,
    validate_conformance,
)

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "BudgetExceededError",
    "CertificationResult",
    "CertifiedRegion",
    "ErrorInjector",
    "ErrorModel",
    "GeometryError",
    "InfeasibleProblemError",
    "LpResult",
    "MpQP",
    "Polyhedron",
    "RowExplosionError",
    "RunResult",
    "SlackProfile",
    "SolverState",
    "SweepTable",
    "Tolerances",
    "ValidationReport",
    "bounding_box",
    "brute_force_solve",
    "certify",
    "contains",
    "double_integrator_problem",
    "hypercube_inflate",
    "interior_point",
    "is_empty",
    "iteration_cdf",
    "lift_partition_project",
    "load_problem",
    "project_fm",
    "rel_to_abs",
    "remove_redundant",
    "run",
    "search_realization",
    "slack_profile",
    "solve_lp",
    "subproblem_maps",
    "sweep",
    "toy_problem",
    "validate_conformance",
]
