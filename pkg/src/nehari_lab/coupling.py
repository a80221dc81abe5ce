"""Decompositions, coupling data, explicit admissibility constants and regime checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, GeometryError, PreconditionError

SAME_GROUP = "same_group"
CROSS_GROUP = "cross_group"

THEOREMS = ("existence", "coop_weak", "strong_coop1", "strong_coop2", "nonexistence_rn")


class Decomposition:
    """Split of ``d`` components into ``m`` consecutive groups.

    ``a = (0, a_1, ..., a_m = d)``.  Groups are stored as tuples of 0-based
    component indices, so ``Decomposition((0, 2, 3)).groups == ((0, 1), (2,))``.
    """

    def __init__(self, a):
        a = tuple(int(x) for x in a)
        if len(a) < 2 or a[0] != 0 or any(x >= y for x, y in zip(a, a[1:])):
            raise ValueError(f"decomposition must be strictly increasing from 0, got {a}")
        self.a = a

    @classmethod
    def full(cls, d):
        """``a = (0, 1, ..., d)``: every component is its own group."""
        return cls(range(d + 1))

    @property
    def d(self):
        return self.a[-1]

    @property
    def m(self):
        return len(self.a) - 1

    @property
    def groups(self):
        return tuple(tuple(range(lo, hi)) for lo, hi in zip(self.a, self.a[1:]))

    @property
    def group_of(self):
        """Group index of every component."""
        return np.repeat(np.arange(self.m), np.diff(self.a))

    def same_group_pairs(self):
        """Ordered off-diagonal pairs inside a group."""
        g = self.group_of
        return [(i, j) for i in range(self.d) for j in range(self.d) if i != j and g[i] == g[j]]

    def cross_group_pairs(self):
        g = self.group_of
        return [(i, j) for i in range(self.d) for j in range(self.d) if g[i] != g[j]]

    def __eq__(self, other):
        return isinstance(other, Decomposition) and other.a == self.a

    def __hash__(self):
        return hash(self.a)

    def __repr__(self):
        return f"Decomposition({self.a})"


class CouplingSpec:
    """Symmetric coupling matrix ``beta`` and shifts ``lam`` of a d-component system."""

    def __init__(self, beta, lam):
        beta = np.array(beta, dtype=float, ndmin=2)
        lam = np.array(lam, dtype=float, ndmin=1)
        d = lam.size
        if beta.shape != (d, d):
            raise ValueError(f"beta must be {d}x{d}, got {beta.shape}")
        if not np.allclose(beta, beta.T, rtol=0, atol=1e-14 * max(1.0, np.abs(beta).max())):
            raise ValueError("beta must be symmetric")
        if np.any(np.diag(beta) <= 0):
            raise ValueError("diagonal couplings beta_ii must be positive")
        self.beta = 0.5 * (beta + beta.T)
        self.lam = lam
        self.beta.setflags(write=False)
        self.lam.setflags(write=False)

    @property
    def d(self):
        return self.lam.size

    def with_entries(self, beta=None, lam=None):
        """Copy with some ``beta[(i, j)]`` / ``lam[i]`` replaced (symmetrically)."""
        b = self.beta.copy()
        l_ = self.lam.copy()
        for (i, j), v in (beta or {}).items():
            b[i, j] = b[j, i] = v
        for i, v in (lam or {}).items():
            l_[i] = v
        return CouplingSpec(b, l_)

    def restricted(self, idx):
        idx = list(idx)
        return CouplingSpec(self.beta[np.ix_(idx, idx)], self.lam[idx])

    def check_grid(self, grid):
        for lam in np.unique(self.lam):
            grid.check_shift(lam)

    def __repr__(self):
        return f"CouplingSpec(beta={self.beta.tolist()}, lam={self.lam.tolist()})"


def classify_pairs(dec, spec):
    """Label every off-diagonal pair ``(i, j)`` as same-group or cross-group."""
    if dec.d != spec.d:
        raise ValueError(f"decomposition has d={dec.d}, coupling has d={spec.d}")
    g = dec.group_of
    return {(i, j): SAME_GROUP if g[i] == g[j] else CROSS_GROUP
            for i in range(dec.d) for j in range(dec.d) if i != j}


# ----------------------------------------------------------------------
# Sobolev quotient


def _bump(grid, center=None, width=None):
    if grid.is_radial:
        r = grid.coords[0]
        width = width or 0.25 * grid.domain_radius
        return np.exp(-(r / width) ** 2) * grid.mask
    X, Y = grid.coords
    if center is None:
        # centroid of the free nodes, so slabs get their own bump
        center = (X[grid.mask].mean(), Y[grid.mask].mean())
    if width is None:
        width = 0.5 * max(np.ptp(X[grid.mask]), np.ptp(Y[grid.mask]), grid.h)
    return np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / width**2) * grid.mask


def sobolev_minimizer(grid, lam, tol=1e-12, max_iter=10_000, precondition=True):
    """Minimize ``||u||_lam^2 / |u|_4^2`` from a positive centered bump.

    With ``precondition`` the update is ``u <- (S + lam Q)^{-1} Q u^3``
    followed by L4 renormalization (a preconditioned projected gradient step
    of unit length); otherwise a plain gradient step ``0.5 h^2 / 4`` is used.

    Returns
    -------
    S : float
        Minimal quotient.
    u : ndarray
        Nonnegative minimizer with ``|u|_4 = 1``.
    """
    grid.check_shift(lam)
    A = grid.stiffness
    q = grid.interior_weights
    u = grid.to_interior(_bump(grid))
    u /= np.sum(q * u**4) ** 0.25
    F = float(u @ (A @ u)) + lam * float(np.sum(q * u * u))
    solve = grid.shifted_solve(lam) if precondition else None
    step = 0.5 * grid.h**2 / 4
    for _ in range(max_iter):
        if precondition:
            u = np.abs(solve(q * u**3))
        else:
            grad = (A @ u) / q + lam * u - F * u**3
            u = np.maximum(u - step * grad, 0.0)
        u /= np.sum(q * u**4) ** 0.25
        F_new = float(u @ (A @ u)) + lam * float(np.sum(q * u * u))
        if abs(F_new - F) <= tol * abs(F_new):
            return F_new, grid.from_interior(u)
        F = F_new
    raise ConvergenceError(f"Sobolev quotient minimization did not converge in {max_iter} steps")


def sobolev_constant(grid, spec, tol=1e-12, precondition=True):
    """``S = min_i inf ||u||_i^2 / |u|_4^2`` together with the per-index values."""
    per_lam = {lam: sobolev_minimizer(grid, lam, tol=tol, precondition=precondition)[0]
               for lam in np.unique(spec.lam)}
    S_i = np.array([per_lam[lam] for lam in spec.lam])
    return float(S_i.min()), S_i


def slab_masks(grid, m):
    """``m`` equal vertical slabs of the bounding box (open, disjoint)."""
    if not grid.is_bounded:
        raise GeometryError("slab partition needs a bounded grid")
    X = grid.coords[0]
    lo, hi = X.min(), X.max()
    cuts = lo + (hi - lo) * np.arange(m + 1) / m
    eps = 1e-9 * grid.h
    masks = [(X > cuts[k] + eps) & (X < cuts[k + 1] - eps) & grid.mask for k in range(m)]
    for k, msk in enumerate(masks):
        if not msk.any():
            raise GeometryError(f"slab {k} of {m} has empty interior (n={grid.n} too coarse)")
    return masks


def cbar_prefactor(dec, spec):
    """``1/4 max_h min_{i in I_h} (1 + lam_i)^2 / beta_ii``."""
    diag = np.diag(spec.beta)
    per_group = [min((1 + spec.lam[i]) ** 2 / diag[i] for i in grp) for grp in dec.groups]
    return 0.25 * max(per_group)


def upper_bound_cbar(grid, dec, spec, partition=None, tol=1e-12):
    """Energy upper bound ``Cbar`` from a disjoint partition of the domain.

    The partition defaults to ``m`` equal vertical slabs; any list of ``m``
    disjoint node masks may be supplied instead.  Each piece contributes its
    Sobolev constant for the ``lam = 1`` norm.

    Returns
    -------
    cbar : float
    slab_S : ndarray
        Sobolev constant of each piece.
    """
    if dec.d != spec.d:
        raise ValueError("decomposition and coupling disagree on d")
    masks = slab_masks(grid, dec.m) if partition is None else list(partition)
    if len(masks) != dec.m:
        raise ValueError(f"partition has {len(masks)} pieces, need m={dec.m}")
    total = np.zeros(grid.shape, dtype=int)
    slab_S = []
    for msk in masks:
        sub = grid.restrict(msk)
        total += sub.mask
        slab_S.append(sobolev_minimizer(sub, 1.0, tol=tol)[0])
    if total.max() > 1:
        raise GeometryError("partition pieces overlap")
    slab_S = np.array(slab_S)
    return cbar_prefactor(dec, spec) * float(np.sum(slab_S**2)), slab_S


@dataclass(frozen=True)
class ConstantsReport:
    """Explicit constants of the existence theory on one grid.

    ``Cbar`` and ``K`` are ``None`` on radial lines, where no slab partition
    exists; ``Kcoop`` is ``None`` unless every off-diagonal coupling is positive.
    """

    S: float
    S_i: np.ndarray
    delta: float
    Cbar: float | None = None
    K: float | None = None
    Kcoop: float | None = None
    slab_S: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self):
        out = {"S": self.S}
        for i, s in enumerate(self.S_i, start=1):
            out[f"S_{i}"] = float(s)
        out["Cbar"] = self.Cbar
        out["K"] = self.K
        out["Kcoop"] = self.Kcoop
        out["delta"] = self.delta
        return out

    def to_text(self):
        """Flat ``key=value`` block, 17 significant digits."""
        lines = []
        for k, v in self.as_dict().items():
            lines.append(f"{k}={'none' if v is None else format(v, '.17g')}")
        return "\n".join(lines) + "\n"


def constants_report(grid, dec, spec, tol=1e-12):
    """Assemble ``S, S_i, Cbar, K = S^2/(16 Cbar), delta = S/(2d)`` and ``Kcoop``."""
    if dec.d != spec.d:
        raise ValueError("decomposition and coupling disagree on d")
    spec.check_grid(grid)
    S, S_i = sobolev_constant(grid, spec, tol=tol)
    delta = S / (2 * spec.d)
    Cbar = K = slab_S = None
    if grid.is_bounded:
        Cbar, slab_S = upper_bound_cbar(grid, dec, spec, tol=tol)
        K = S**2 / (16 * Cbar)
    off = spec.beta[~np.eye(spec.d, dtype=bool)]
    Kcoop = None
    if np.all(off > 0):
        Kcoop = float(np.min(S_i**2) / (2 * np.sum(S_i**2 / np.diag(spec.beta))))
    return ConstantsReport(S=S, S_i=S_i, delta=delta, Cbar=Cbar, K=K, Kcoop=Kcoop, slab_S=slab_S)


# ----------------------------------------------------------------------
# regime validation


@dataclass(frozen=True)
class RegimeVerdict:
    theorem: str
    checks: dict

    @property
    def ok(self):
        return all(self.checks.values())

    @property
    def failing(self):
        return [k for k, v in self.checks.items() if not v]

    def __bool__(self):
        return self.ok


def _uniform(values):
    values = list(values)
    return not values or np.ptp(values) == 0


def validate_regime(dec, spec, report, theorem, alpha=None):
    """Check the coupling hypotheses of one existence/non-existence result.

    Parameters
    ----------
    theorem : {"existence", "coop_weak", "strong_coop1", "strong_coop2", "nonexistence_rn"}
    report : ConstantsReport or None
        Needed for every check involving ``K``.
    alpha : float
        Required for ``strong_coop2``.

    Returns
    -------
    RegimeVerdict
        Per-hypothesis booleans; never raises on a failed hypothesis.
    """
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}; choose from {THEOREMS}")
    if dec.d != spec.d:
        raise ValueError("decomposition and coupling disagree on d")
    B = spec.beta
    k1 = dec.same_group_pairs()
    k2 = dec.cross_group_pairs()
    K = None if report is None else report.K
    if K is None and theorem != "nonexistence_rn":
        raise PreconditionError(f"{theorem} needs a report with K (bounded grid)")
    k1_vals = [B[p] for p in k1]
    k2_vals = [B[p] for p in k2]
    checks = {}

    def group_coop(groups):
        return [[B[i, j] for i in g for j in g if i != j] for g in groups]

    equal_lambda = all(_uniform(spec.lam[list(g)]) for g in dec.groups)

    if theorem == "existence":
        checks["beta>=0 on K1"] = all(v >= 0 for v in k1_vals)
        checks["beta<K on K2"] = all(v < K for v in k2_vals)
    elif theorem == "coop_weak":
        checks["full decomposition"] = dec.m == dec.d
        checks["beta<K off-diagonal"] = all(B[i, j] < K for i in range(dec.d)
                                            for j in range(dec.d) if i != j)
    elif theorem == "strong_coop1":
        inner = group_coop(dec.groups)
        checks["uniform beta_h in groups"] = all(_uniform(v) for v in inner)
        checks["beta_h>max beta_ii"] = all(
            all(b > max(B[i, i] for i in g) for b in vals) for g, vals in zip(dec.groups, inner))
        checks["uniform b on K2"] = _uniform(k2_vals)
        checks["b<K"] = all(v < K for v in k2_vals)
        checks["equal lambda per group"] = equal_lambda
    elif theorem == "strong_coop2":
        if alpha is None:
            raise ValueError("strong_coop2 needs alpha")
        checks["alpha>1"] = alpha > 1
        inner = group_coop(dec.groups)
        ratio = alpha / (alpha - 1) if alpha > 1 else np.inf
        checks["uniform beta_h in groups"] = all(_uniform(v) for v in inner)
        checks["beta_h>alpha/(alpha-1) max beta_ii"] = all(
            all(b > ratio * max(B[i, i] for i in g) for b in vals)
            for g, vals in zip(dec.groups, inner))
        bound = K / (alpha * dec.d**2) if alpha > 1 else -np.inf
        checks["|beta|<=K/(alpha d^2) on K2"] = all(abs(v) <= bound for v in k2_vals)
        checks["equal lambda per group"] = equal_lambda
    else:
        checks["beta>=0 on K1"] = all(v >= 0 for v in k1_vals)
        checks["beta<=0 on K2"] = all(v <= 0 for v in k2_vals)
        groups = dec.groups
        checks["strictly competing group pair"] = any(
            all(B[i, j] < 0 for i in groups[h1] for j in groups[h2])
            for h1, h2 in itertools.combinations(range(dec.m), 2))
    return RegimeVerdict(theorem, checks)
