"""Group scaling: the quadratic function Psi, the linear system for t and projection onto N.

Scaling group ``h`` by ``sqrt(t_h)`` gives

    Psi(t) = 1/2 sum_h t_h ||u_h||^2 - 1/4 t . M_B(u) t,

whose critical point solves ``M_B t = (||u_h||^2)_h``.  When ``M_B`` is
strictly diagonally dominant it is positive definite, Psi is strictly concave
and the critical point is its unique maximizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .energy import GroupStats, dominance_margin
from .errors import PreconditionError, ProjectionError

SINGULAR_PIVOT = 1e-14


@dataclass(frozen=True)
class ScalingResult:
    t: np.ndarray
    solvable: bool
    all_positive: bool
    conditioning: float


def scaling_energy(problem, u, t, stats: GroupStats | None = None):
    """``J`` of the group-scaled field, evaluated from the closed form in ``t``."""
    t = np.asarray(t, dtype=float)
    if t.shape != (problem.m,):
        raise ValueError(f"t must have length m={problem.m}")
    if np.any(t < 0):
        raise ValueError("scaling factors must be nonnegative")
    stats = problem.group_stats(u) if stats is None else stats
    return psi(stats, t)


def psi(stats: GroupStats, t):
    t = np.asarray(t, dtype=float)
    return 0.5 * float(stats.group_norms @ t) - 0.25 * float(t @ stats.MB @ t)


def scale_groups(problem, u, t):
    """Multiply every component of group ``h`` by ``sqrt(t_h)``."""
    factors = np.sqrt(np.asarray(t, dtype=float))[problem.dec.group_of]
    return u * factors.reshape((-1,) + (1,) * (u.ndim - 1))


def solve_stats(stats: GroupStats, tol=1e-14):
    n = stats.group_norms
    if np.any(n <= 0):
        raise PreconditionError("every group must be nonzero before scaling")
    MB = stats.MB
    m = n.size
    lu, piv = sla.lu_factor(MB, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = max(np.linalg.norm(MB, np.inf), np.finfo(float).tiny)
    margin = dominance_margin(MB)
    if pivots.min() < SINGULAR_PIVOT * scale:
        return ScalingResult(np.full(m, np.nan), False, False, margin)
    t = sla.lu_solve((lu, piv), n)
    return ScalingResult(t, True, bool(np.all(t > 0)), margin)


def solve_scaling(problem, u) -> ScalingResult:
    """Solve ``M_B(u) t = (||u_h||_h^2)_h`` by dense LU with partial pivoting.

    Raises
    ------
    PreconditionError
        If some group vanishes identically.
    """
    return solve_stats(problem.group_stats(u))


def project_to_n(problem, u, return_t=False):
    """Rescale the groups of ``u`` onto the Nehari set.

    Raises
    ------
    ProjectionError
        If the scaling system is singular or some ``t_h <= 0``; the projection
        would leave the positive orthant.
    """
    res = solve_scaling(problem, u)
    if not (res.solvable and res.all_positive):
        raise ProjectionError(
            f"projection leaves positive orthant: t={np.array2string(res.t, precision=4)}",
            t=res.t)
    v = scale_groups(problem, u, res.t)
    return (v, res.t) if return_t else v


def natural_constraint_residual(problem, u, normalized=False):
    """Quadrature L2 norm of ``grad J(u)``; vanishes iff ``u`` is a free critical point."""
    return problem.residual(u, normalized=normalized)
