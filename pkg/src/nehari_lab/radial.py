"""Whole-space experiments on truncated radial lines.

Group levels ``l_h`` are computed by running the solver on a single group
of radial profiles.  The splitting experiment embeds the group profiles at
separated centers ``R e_h`` in a planar box, rescales the groups onto the
Nehari set and tracks how ``J`` approaches ``sum_h l_h`` as ``R`` grows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .coupling import CouplingSpec, Decomposition, constants_report, validate_regime
from .energy import Problem
from .errors import GeometryError, PreconditionError, TruncationError
from .grid import Grid
from .nehari import psi, scale_groups, solve_stats
from .solver import SolverConfig, minimize

FLOOR = 1e-14


def default_radial_grid(lam_min, dim=2, h=0.05, factor=12.0):
    """Radial line of length ``factor / sqrt(lam_min)`` with spacing close to ``h``."""
    r_max = factor / np.sqrt(lam_min)
    n = int(round(r_max / h)) + 1
    return Grid.radial(r_max=r_max, n=n, dim=dim)


@dataclass
class SubsystemLevel:
    h: int
    level: float
    profile: np.ndarray
    grid: Grid
    decay_rate: float
    components: tuple
    lam: np.ndarray
    result: object = None


def group_problem(spec, dec, h, grid):
    """Single-group problem for group ``h`` (0-based) on a radial grid."""
    if not grid.is_radial:
        raise GeometryError("group levels are computed on radial grids")
    if not 0 <= h < dec.m:
        raise ValueError(f"group index {h} outside 0..{dec.m - 1}")
    idx = dec.groups[h]
    sub = spec.restricted(idx)
    if np.any(sub.beta <= 0):
        raise PreconditionError(f"group {h + 1} needs beta_ij > 0 for all i, j in the group")
    if np.any(sub.lam <= 0):
        raise PreconditionError(f"group {h + 1} needs lambda_i > 0")
    return Problem(grid, sub, Decomposition((0, len(idx)))), idx


def subsystem_level(spec: CouplingSpec, dec: Decomposition, h: int, grid: Grid | None = None,
                    cfg: SolverConfig = SolverConfig()):
    """Least energy ``l_h`` of the cooperative group-``h`` system on a radial line.

    Raises
    ------
    PreconditionError
        If some coupling inside the group is not positive or some ``lambda_i <= 0``.
    """
    if grid is None:
        grid = default_radial_grid(float(np.min(spec.lam[list(dec.groups[h])])))
    problem, idx = group_problem(spec, dec, h, grid)
    report = constants_report(grid, problem.dec, problem.spec)
    res = minimize(problem, replace(cfg, init="bumps"), report=report)
    fit = fit_decay(grid.coords[0], res.field[0])
    return SubsystemLevel(h, res.energy, res.field, grid, -fit.slope, idx, problem.spec.lam, res)


# ----------------------------------------------------------------------
# decay


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    window: tuple
    points: int


def fit_decay(r, values, window=(0.5, 0.9), r_max=None):
    """Least-squares fit of ``log u`` against ``r`` on ``[a R, b R]``.

    Nodes where ``u < 1e-14`` are dropped; the window shrinks accordingly.

    Raises
    ------
    TruncationError
        If fewer than three usable nodes remain.
    """
    r = np.asarray(r, dtype=float)
    values = np.asarray(values, dtype=float)
    r_max = r.max() if r_max is None else r_max
    sel = (r >= window[0] * r_max) & (r <= window[1] * r_max)
    sel &= values > FLOOR
    if sel.sum() < 3:
        raise TruncationError("profile is below the floor over the whole decay window")
    slope, intercept = np.polyfit(r[sel], np.log(values[sel]), 1)
    rs = r[sel]
    return DecayFit(float(slope), float(intercept), (float(rs.min()), float(rs.max())), int(sel.sum()))


@dataclass(frozen=True)
class DecayReport:
    slopes: np.ndarray
    required: float
    passed: bool
    fits: tuple


def decay_audit(level: SubsystemLevel, beta_fraction: float, window=(0.5, 0.9)):
    """Check that every profile decays at least like ``exp(-sqrt(beta) r)``.

    ``beta = beta_fraction * min lambda`` over the group; a component passes
    if its fitted log slope is ``<= -0.95 sqrt(beta)``.
    """
    if not 0 < beta_fraction < 1:
        raise ValueError("beta_fraction must lie in (0, 1)")
    beta = beta_fraction * float(np.min(level.lam))
    r = level.grid.coords[0]
    fits = tuple(fit_decay(r, comp, window) for comp in level.profile)
    slopes = np.array([f.slope for f in fits])
    required = -np.sqrt(beta) * (1 - 0.05)
    return DecayReport(slopes, required, bool(np.all(slopes <= required)), fits)


# ----------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitRow:
    R: float
    J: float
    sum_lh: float
    off_diag_mass: float
    t: np.ndarray
    in_N: bool


def embed_profile(planar: Grid, radial: Grid, profile, center):
    """Evaluate a radial profile at ``|x - center|`` on the planar grid (linear interpolation)."""
    X, Y = planar.coords
    rho = np.hypot(X - center[0], Y - center[1])
    r = radial.coords[0]
    if rho[planar.mask].min() > r.max():
        raise TruncationError("profile center lies outside the planar box")
    # the profile support must fit inside the free part of the box
    half = min(np.abs(X[planar.mask]).max(), np.abs(Y[planar.mask]).max())
    if np.hypot(*center) + r.max() > half + 1e-9:
        raise TruncationError(
            f"profile of radius {r.max():.4g} at |c|={np.hypot(*center):.4g} reaches the box edge {half:.4g}")
    return np.interp(rho, r, profile, right=0.0) * planar.mask


def planar_box(radii, r_support, h, margin=None):
    """Centered square containing every translated profile support."""
    margin = 2 * h if margin is None else margin
    half = max(radii) + r_support + margin
    n_half = int(np.ceil(half / h))
    return Grid.rectangle(lx=2 * n_half * h, n=2 * n_half + 1, centered=True)


def splitting_experiment(spec: CouplingSpec, dec: Decomposition, radii, planar: Grid | None = None,
                         cfg: SolverConfig = SolverConfig(), levels=None, radial_grid=None, h=0.1):
    """Energy of Nehari-rescaled separated translates as a function of ``R``.

    Group ``h`` (1-based) is centered at ``R (cos 2 pi h/m, sin 2 pi h/m)``.

    Returns
    -------
    rows : list of SplitRow
    levels : list of SubsystemLevel

    Raises
    ------
    PreconditionError
        If ``m < 2`` or the non-existence hypotheses fail.
    TruncationError
        If a translated profile reaches the box boundary.
    """
    if dec.m < 2:
        raise PreconditionError("the splitting experiment needs m >= 2 groups")
    verdict = validate_regime(dec, spec, None, "nonexistence_rn")
    if not verdict.ok:
        raise PreconditionError(f"non-existence hypotheses fail: {', '.join(verdict.failing)}")
    if levels is None:
        lam_min = float(np.min(spec.lam))
        rgrid = radial_grid or default_radial_grid(lam_min)
        levels = [subsystem_level(spec, dec, k, rgrid, cfg) for k in range(dec.m)]
    rgrid = levels[0].grid
    if rgrid.dim != 2:
        raise GeometryError("the splitting experiment is planar (N = 2)")
    radii = [float(R) for R in radii]
    if planar is None:
        planar = planar_box(radii, rgrid.coords[0].max(), h)
    problem = Problem(planar, spec, dec)
    sum_lh = float(sum(lv.level for lv in levels))
    rows = []
    for R in radii:
        u = problem.zeros()
        for k, lv in enumerate(levels):
            ang = 2 * np.pi * (k + 1) / dec.m
            c = (R * np.cos(ang), R * np.sin(ang))
            for comp, i in enumerate(lv.components):
                u[i] = embed_profile(planar, rgrid, lv.profile[comp], c)
        stats = problem.group_stats(u)
        res = solve_stats(stats)
        if not (res.solvable and res.all_positive):
            rows.append(SplitRow(R, np.nan, sum_lh, np.nan, res.t, False))
            continue
        off = float(np.abs(stats.MB).sum() - np.abs(np.diag(stats.MB)).sum())
        in_N = problem.membership(scale_groups(problem, u, res.t)).in_N
        rows.append(SplitRow(R, psi(stats, res.t), sum_lh, off, res.t, in_N))
    return rows, levels
