"""Minimization of J on the Nehari set by projected descent in the nonnegative cone."""

from __future__ import annotations

import itertools
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .coupling import ConstantsReport, constants_report, validate_regime
from .energy import Membership, Problem, membership_from_stats
from .errors import NehariLabError, NonConvergenceError, ProjectionError
from .nehari import solve_stats

log = logging.getLogger(__name__)

INIT_KINDS = ("bumps", "separated")
METHODS = ("cg", "gradient")
MIN_STEP = 1e-12
MAX_RESTARTS = 20


@dataclass(frozen=True)
class SolverConfig:
    """Descent settings.

    ``step="auto"`` starts from 0.5 with the preconditioner and from
    ``1 / (max|lam| + 8/h^2)`` without it.  ``method`` is ``"cg"``
    (Polak-Ribiere directions) or ``"gradient"``.  ``init`` is ``"bumps"``,
    ``"separated"`` or ``"file:PATH"`` (a grid dump).
    """

    max_iter: int = 5000
    tol_grad: float = 1e-6
    tol_energy: float = 1e-10
    step: float | str = "auto"
    precondition: bool = True
    seed: int = 0
    init: str = "bumps"
    directions: tuple | None = None
    method: str = "cg"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol_grad <= 0 or self.tol_energy <= 0:
            raise ValueError("tolerances must be positive")
        if self.step != "auto" and not (isinstance(self.step, (int, float)) and self.step > 0):
            raise ValueError(f"step must be 'auto' or a positive number, got {self.step!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.init not in INIT_KINDS and not str(self.init).startswith("file:"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class SolveResult:
    field: np.ndarray
    energy: float
    grad_residual: float
    nehari_residual: np.ndarray
    iterations: int
    energy_trace: list
    component_l4: np.ndarray
    semi_trivial: bool
    constants: ConstantsReport | None
    membership: Membership | None = None
    restarts: int = 0
    converged: bool = True
    regime_ok: bool | None = None
    trivial_components: np.ndarray = field(default=None, repr=False)

    def summary(self):
        """Flat key/value view used by reports and CSV rows."""
        out = {
            "energy": self.energy,
            "gradResidual": self.grad_residual,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "converged": self.converged,
            "semiTrivial": self.semi_trivial,
        }
        for h, g in enumerate(self.nehari_residual, start=1):
            out[f"G_{h}"] = float(g)
        for i, v in enumerate(self.component_l4, start=1):
            out[f"L4_{i}"] = float(v)
        return out


# ----------------------------------------------------------------------
# initial data


def gaussian(grid, center, width):
    if grid.is_radial:
        r = grid.coords[0]
        return np.exp(-(r / width) ** 2) * grid.mask
    X, Y = grid.coords
    return np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / width**2) * grid.mask


def _ring_radius(grid):
    if grid.kind == "annulus2d":
        return 0.5 * (grid.extents["r_in"] + grid.extents["r_out"])
    return 0.5 * grid.domain_radius


def random_bump(grid, rng, spread=0.3):
    """Positive bump at a random point near the center of the domain."""
    R = grid.domain_radius
    width = R * rng.uniform(0.3, 0.5)
    if grid.is_radial:
        return gaussian(grid, None, 0.25 * width)
    cx, cy = grid.center
    if grid.kind == "annulus2d":
        ang = rng.uniform(0, 2 * np.pi)
        rad = _ring_radius(grid)
        return gaussian(grid, (cx + rad * np.cos(ang), cy + rad * np.sin(ang)), width)
    rho = spread * R * np.sqrt(rng.uniform())
    ang = rng.uniform(0, 2 * np.pi)
    return gaussian(grid, (cx + rho * np.cos(ang), cy + rho * np.sin(ang)), width)


def initial_field(problem, cfg: SolverConfig, rng):
    grid = problem.grid
    if str(cfg.init).startswith("file:"):
        from .dump import read_grid_dump

        return read_grid_dump(cfg.init[5:], grid, problem.d)
    u = problem.zeros()
    if cfg.init == "bumps":
        for i in range(problem.d):
            u[i] = random_bump(grid, rng)
        return u
    # group h (1-based) sits at angle 2 pi h / m on a ring
    m = problem.m
    angles = cfg.directions or [2 * np.pi * h / m for h in range(1, m + 1)]
    if len(angles) != m:
        raise ValueError(f"need {m} directions, got {len(angles)}")
    rad = _ring_radius(grid)
    if grid.kind == "annulus2d":
        width = 0.5 * (grid.extents["r_out"] - grid.extents["r_in"])
    else:
        width = 0.5 * grid.domain_radius
    cx, cy = grid.center if not grid.is_radial else (0.0, 0.0)
    for h, grp in enumerate(problem.dec.groups):
        c = (cx + rad * np.cos(angles[h]), cy + rad * np.sin(angles[h]))
        for i in grp:
            u[i] = rng.uniform(0.9, 1.1) * gaussian(grid, c, width * rng.uniform(0.9, 1.1))
    return u


# ----------------------------------------------------------------------
# descent


def _auto_step(grid, spec, precondition):
    if precondition:
        return 0.5
    return 1.0 / (np.max(np.abs(spec.lam)) + 8.0 / grid.h**2)


def semi_trivial_flags(problem, l4, report):
    """Component ``i`` is trivial if ``|u_i|_4 < 1e-4 delta / max beta`` over its group."""
    B = problem.spec.beta
    thresh = np.empty(problem.d)
    for grp in problem.dec.groups:
        bmax = max(B[i, j] for i in grp for j in grp)
        thresh[list(grp)] = 1e-4 * report.delta / bmax
    return l4 < thresh


class _Descent:
    """State of one projected-descent run on interior values."""

    def __init__(self, problem: Problem, cfg: SolverConfig, rng):
        self.p = problem
        self.cfg = cfg
        self.rng = rng
        self.q = problem.grid.interior_weights
        lam = problem.spec.lam
        self.solves = [problem.grid.shifted_solve(l_) for l_ in lam] if cfg.precondition else None
        self.restarts = 0

    def gradient(self, U):
        """Dual gradient, preconditioned direction and quadrature residual."""
        Gd = self.p.dual_gradient(U)
        res = float(np.sqrt(np.sum(Gd * Gd / self.q)))
        if self.solves is None:
            return Gd, Gd / self.q, res
        return Gd, np.stack([s(g) for s, g in zip(self.solves, Gd)]), res

    def project(self, U):
        """Project interior values onto N or raise :class:`ProjectionError`."""
        stats = self.p._group_stats(U)
        res = solve_stats(stats)
        if not (res.solvable and res.all_positive):
            raise ProjectionError("projection leaves positive orthant", t=res.t)
        f = np.sqrt(res.t)[self.p.dec.group_of]
        return U * f[:, None]

    def energy(self, U):
        return 0.5 * float(self.p._norms(U).sum()) - 0.25 * float(np.sum(self.p.spec.beta * self.p._quartic(U)))

    def trial(self, U, d, t):
        return self.project(np.maximum(U + t * d, 0.0))

    def line_search(self, U, J, d, slope, tau, secant):
        """Return ``(J_new, t, U_new)`` with ``J_new <= J + slack``, or ``None``.

        With ``secant`` the first trial is refined by a secant step on the
        directional derivative, which stays accurate when energy differences
        are at round-off level.
        """
        slack = 1e-12 * max(1.0, abs(J))
        t = tau
        last_exc = None
        while True:
            try:
                U1 = self.trial(U, d, t)
                break
            except ProjectionError as exc:
                last_exc = exc
                t *= 0.5
                if t < MIN_STEP:
                    raise last_exc
        cands = [(self.energy(U1), t, U1)]
        if secant:
            s1 = float(np.sum(self.p.dual_gradient(U1) * d))
            ts = min(t * slope / (slope - s1), 4 * t) if s1 > slope else 2 * t
            try:
                U2 = self.trial(U, d, ts)
                cands.append((self.energy(U2), ts, U2))
            except ProjectionError:
                pass
        best = min(cands, key=lambda c: c[0])
        while best[0] > J + slack:
            t = 0.5 * best[1]
            if t < MIN_STEP:
                return None
            try:
                U1 = self.trial(U, d, t)
            except ProjectionError:
                best = (np.inf, t, None)
                continue
            best = (self.energy(U1), t, U1)
        return best

    def restart_groups(self, U, t):
        """Replace every group with ``t_h <= 0`` (or a vanished group) by a fresh bump."""
        self.restarts += 1
        if self.restarts > MAX_RESTARTS:
            raise NonConvergenceError(f"gave up after {MAX_RESTARTS} group restarts")
        U = U.copy()
        norms = self.p._norms(U) @ self.p._E
        bad = np.ones(self.p.m, bool) if t is None or not np.all(np.isfinite(t)) else (t <= 0)
        bad |= norms <= 0
        for h in np.flatnonzero(bad):
            for i in self.p.dec.groups[h]:
                U[i] = self.p.grid.to_interior(random_bump(self.p.grid, self.rng, spread=0.8))
        log.debug("restarted groups %s", np.flatnonzero(bad).tolist())
        return U

    def start(self, U):
        while True:
            try:
                return self.project(np.maximum(U, 0.0))
            except (ProjectionError, NehariLabError) as exc:
                U = self.restart_groups(U, getattr(exc, "t", None))


def minimize(problem: Problem, cfg: SolverConfig = SolverConfig(), report: ConstantsReport | None = None,
             u0=None):
    """Least-energy point of ``J`` on the Nehari set by projected descent.

    Each iteration moves along a descent direction built from the
    (optionally ``(-Lap + lam_i)^{-1}`` preconditioned) gradient, clamps
    negative values to zero and rescales the groups back onto N.  With
    ``method="gradient"`` the direction is the preconditioned gradient and the
    step is halved unless the energy strictly decreases and grown by 1.1
    otherwise; the default
    ``method="cg"`` adds Polak-Ribiere momentum and a secant step length.
    Accepted iterates never raise the energy by more than ``1e-12 max(1, |J|)``.

    Parameters
    ----------
    problem : Problem
    cfg : SolverConfig
    report : ConstantsReport, optional
        Computed when omitted; supplies ``delta`` for the semi-trivial test.
    u0 : ndarray, optional
        Initial field overriding ``cfg.init``.

    Raises
    ------
    NonConvergenceError
        After ``cfg.max_iter`` iterations or on stagnation; ``exc.result``
        holds the last (lowest-energy) iterate.
    """
    grid = problem.grid
    if report is None:
        report = constants_report(grid, problem.dec, problem.spec)
    regime_ok = None
    if report.K is not None:
        regime_ok = validate_regime(problem.dec, problem.spec, report, "existence").ok
        if not regime_ok:
            warnings.warn("existence hypotheses fail; running in exploration mode", RuntimeWarning,
                          stacklevel=2)
    rng = np.random.default_rng(cfg.seed)
    run = _Descent(problem, cfg, rng)
    U = problem.interior(initial_field(problem, cfg, rng) if u0 is None else u0)
    U = run.start(U)
    J = run.energy(U)
    trace = [J]
    tau0 = _auto_step(grid, problem.spec, cfg.precondition) if cfg.step == "auto" else float(cfg.step)
    tau = tau0
    cg = cfg.method == "cg"
    dJ = np.inf
    converged = False
    it = 0
    Gd, PG, res = run.gradient(U)
    gpg = float(np.sum(Gd * PG))
    d = -PG
    while it < cfg.max_iter:
        if res < cfg.tol_grad and abs(dJ) < cfg.tol_energy * max(1.0, abs(J)):
            converged = True
            break
        it += 1
        slope = float(np.sum(Gd * d))
        if not cg or slope >= 0:
            d, slope = -PG, -gpg
        try:
            step = run.line_search(U, J, d, slope, tau, cg)
            if step is None and cg and d is not PG:
                d, slope = -PG, -gpg
                step = run.line_search(U, J, d, slope, tau0, cg)
        except ProjectionError as exc:
            U = run.start(run.restart_groups(U, exc.t))
            J = run.energy(U)
            trace.append(J)
            tau, dJ = tau0, np.inf
            Gd, PG, res = run.gradient(U)
            gpg = float(np.sum(Gd * PG))
            d = -PG
            continue
        if step is None:
            # no descent left above round-off
            break
        J_new, t, U = step
        dJ, J = J_new - J, J_new
        trace.append(J)
        # steps accepted only within round-off slack must not grow tau
        tau = t if cg else (1.1 * t if dJ < 0 else 0.5 * t)
        Gn, PGn, res = run.gradient(U)
        gpgn = float(np.sum(Gn * PGn))
        beta = max(0.0, (gpgn - float(np.sum(Gn * PG))) / gpg) if cg and gpg > 0 else 0.0
        d = -PGn + beta * d
        Gd, PG, gpg = Gn, PGn, gpgn
    if not converged and res < cfg.tol_grad and abs(dJ) < cfg.tol_energy * max(1.0, abs(J)):
        converged = True
    result = _result(problem, U, J, res, it, trace, report, run.restarts, converged, regime_ok)
    if not converged:
        raise NonConvergenceError(
            f"no convergence after {it} iterations (residual {res:.3e}, |dJ| {abs(dJ):.3e})", result=result)
    return result


def _result(problem, U, J, res, it, trace, report, restarts, converged, regime_ok):
    stats = problem._group_stats(U)
    q = problem.grid.interior_weights
    l4 = np.sum(U**4 * q, axis=1) ** 0.25
    trivial = semi_trivial_flags(problem, l4, report)
    return SolveResult(
        field=problem.field(U), energy=J, grad_residual=res, nehari_residual=stats.G,
        iterations=it, energy_trace=trace, component_l4=l4, semi_trivial=bool(trivial.any()),
        constants=report, membership=membership_from_stats(stats), restarts=restarts,
        converged=converged, regime_ok=regime_ok, trivial_components=trivial)


def multistart(problem, cfg: SolverConfig, seeds, report=None):
    """Run :func:`minimize` from several seeds; results in seed order."""
    report = constants_report(problem.grid, problem.dec, problem.spec) if report is None else report
    return [minimize(problem, replace(cfg, seed=int(s)), report=report) for s in seeds]


# ----------------------------------------------------------------------
# positivity audit


class PositivityAudit(NamedTuple):
    component_positive: np.ndarray
    group_mass: np.ndarray
    group_bound: np.ndarray
    component_ok: np.ndarray

    @property
    def ok(self):
        return bool(np.all(self.component_ok))


def positivity_audit(res: SolveResult, problem: Problem, report: ConstantsReport | None = None):
    """Per-component positivity and the group mass lower bound.

    A component passes if its minimum over free nodes is positive and its
    group satisfies ``max_{i,j in I_h} beta_ij * sum_{i in I_h} |u_i|_4^2 >= delta``.
    """
    report = res.constants if report is None else report
    U = problem.interior(res.field)
    q = problem.grid.interior_weights
    l4sq = np.sum(U**4 * q, axis=1) ** 0.5
    positive = U.min(axis=1) > 0
    B = problem.spec.beta
    mass = np.array([max(B[i, j] for i in g for j in g) * l4sq[list(g)].sum() for g in problem.dec.groups])
    bound_ok = mass >= report.delta
    ok = positive & bound_ok[problem.dec.group_of]
    return PositivityAudit(positive, mass, bound_ok, ok)


# ----------------------------------------------------------------------
# parameter sweeps


def parse_parameter(name):
    """``"beta_1_2"`` -> ``("beta", (0, 1))``, ``"lambda_2"`` -> ``("lambda", (1,))``."""
    kind, *idx = name.split("_")
    idx = tuple(int(x) - 1 for x in idx)
    if kind == "beta" and len(idx) == 2 or kind == "lambda" and len(idx) == 1:
        if min(idx) < 0:
            raise ValueError(f"indices are 1-based in {name!r}")
        return kind, idx
    raise ValueError(f"sweep parameter must look like beta_i_j or lambda_i, got {name!r}")


@dataclass
class SweepRow:
    row: int
    params: dict
    result: SolveResult | None
    report: ConstantsReport | None
    verdict: object
    symmetry: object = None
    error: str | None = None


def _threads():
    try:
        n = int(os.environ.get("NEHARI_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def sweep(grid, dec, spec_template, parameter_grid, cfg: SolverConfig, audit_split=None):
    """Solve on the Cartesian product of parameter values.

    Parameters
    ----------
    parameter_grid : dict
        Ordered mapping ``name -> values`` with names ``beta_i_j`` or ``lambda_i``
        (1-based).  An empty mapping, or any empty value list, gives no rows.
    audit_split : int or "auto", optional
        Run the antipodal audit with this macro split on rotational grids;
        ``"auto"`` picks it from the signs of each row's couplings.

    Returns
    -------
    list of SweepRow
        Ordered by row index.  Failures are recorded in ``error``.
    """
    names = list(parameter_grid)
    values = [list(parameter_grid[n]) for n in names]
    if not names or any(len(v) == 0 for v in values):
        return []
    parsed = [parse_parameter(n) for n in names]
    points = list(itertools.product(*values))
    seeds = np.random.SeedSequence(cfg.seed).generate_state(len(points))

    def one(k):
        params = dict(zip(names, points[k]))
        beta, lam = {}, {}
        for (kind, idx), v in zip(parsed, points[k]):
            (beta if kind == "beta" else lam)[idx if kind == "beta" else idx[0]] = float(v)
        report = verdict = None
        try:
            spec = spec_template.with_entries(beta=beta, lam=lam)
            problem = Problem(grid, spec, dec)
            report = constants_report(grid, dec, spec)
            verdict = validate_regime(dec, spec, report, "existence") if report.K is not None else None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = minimize(problem, replace(cfg, seed=int(seeds[k])), report=report)
            sym = None
            if audit_split is not None and grid.is_rotational:
                from .symmetry import antipodal_audit, default_macro_split

                split = default_macro_split(spec, dec) if audit_split == "auto" else audit_split
                sym = antipodal_audit(res, dec, split, grid=grid)
            return SweepRow(k, params, res, report, verdict, sym)
        except NonConvergenceError as exc:
            return SweepRow(k, params, exc.result, report, verdict, error=f"nonconvergence: {exc}")
        except (NehariLabError, ValueError, ArithmeticError) as exc:
            return SweepRow(k, params, None, report, verdict, error=f"{type(exc).__name__}: {exc}")

    n_threads = min(_threads(), len(points))
    if n_threads == 1:
        return [one(k) for k in range(len(points))]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(one, range(len(points))))
