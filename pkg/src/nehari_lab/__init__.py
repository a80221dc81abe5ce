"""Least-energy solutions of coupled cubic Schrodinger systems on Nehari sets.

Typical use::

    from nehari_lab import Grid, CouplingSpec, Decomposition, Problem, minimize

    grid = Grid.disk(n=65)
    spec = CouplingSpec([[1, -1], [-1, 1]], [1, 1])
    res = minimize(Problem(grid, spec, Decomposition((0, 1, 2))))
"""

__version__ = "0.1.0"

from .coupling import (ConstantsReport, CouplingSpec, Decomposition, RegimeVerdict, classify_pairs,
                       constants_report, sobolev_constant, upper_bound_cbar, validate_regime)
from .energy import GroupStats, Membership, Problem
from .errors import (ConfigError, ConvergenceError, FieldShapeError, GeometryError, NehariLabError,
                     NonConvergenceError, NormNotEquivalentError, PreconditionError, ProjectionError,
                     TruncationError)
from .grid import Grid, first_eigenvalue, inner_product, integrate, laplacian, lp_norm
from .nehari import (ScalingResult, natural_constraint_residual, project_to_n, scaling_energy,
                     solve_scaling)
from .radial import decay_audit, splitting_experiment, subsystem_level
from .solver import SolveResult, SolverConfig, minimize, multistart, positivity_audit, sweep
from .symmetry import (HalfSpace, antipodal_audit, foliated_schwarz_test, polarization_invariants,
                       polarize)

__all__ = [
    "ConfigError", "ConstantsReport", "ConvergenceError", "CouplingSpec", "Decomposition",
    "FieldShapeError", "GeometryError", "Grid", "GroupStats", "HalfSpace", "Membership",
    "NehariLabError", "NonConvergenceError", "NormNotEquivalentError", "PreconditionError",
    "Problem", "ProjectionError", "RegimeVerdict", "ScalingResult", "SolveResult", "SolverConfig",
    "TruncationError", "antipodal_audit", "classify_pairs", "constants_report", "decay_audit",
    "first_eigenvalue", "foliated_schwarz_test", "inner_product", "integrate", "laplacian",
    "lp_norm", "minimize", "multistart", "natural_constraint_residual", "polarization_invariants",
    "polarize", "positivity_audit", "project_to_n", "scaling_energy", "sobolev_constant",
    "solve_scaling", "splitting_experiment", "subsystem_level", "sweep", "upper_bound_cbar",
    "validate_regime",
]
