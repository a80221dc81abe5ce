"""Polarization on grid-compatible half-spaces and foliated Schwarz audits.

Only the eight normals ``(+-1, 0)``, ``(0, +-1)``, ``+-(1, 1)/sqrt 2`` and
``+-(1, -1)/sqrt 2`` are used.  Reflections across the corresponding lines
through the grid center map nodes onto nodes, so polarization is an exact
permutation-with-selection of node values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import GeometryError

_S = 1 / np.sqrt(2)
GRID_NORMALS = (
    (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0),
    (_S, _S), (-_S, -_S), (_S, -_S), (-_S, _S),
)


class HalfSpace:
    """Closed half-space ``{x : (x - c) . n >= 0}`` through the grid center ``c``."""

    def __init__(self, normal):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        match = [k for k, g in enumerate(GRID_NORMALS) if np.allclose(n, g, atol=1e-12)]
        if not match:
            raise GeometryError(f"half-space normal {normal} is not grid compatible")
        self.index = match[0]
        self.normal = np.array(GRID_NORMALS[self.index])

    @property
    def complement(self):
        """The reflected half-space ``H^``."""
        return HalfSpace(-self.normal)

    def __repr__(self):
        return f"HalfSpace({self.normal.round(6).tolist()})"

    def __eq__(self, other):
        return isinstance(other, HalfSpace) and other.index == self.index

    def __hash__(self):
        return hash(self.index)


def all_half_spaces():
    return [HalfSpace(n) for n in GRID_NORMALS]


def _centered_indices(shape):
    ny, nx = shape
    iy, ix = np.indices(shape)
    # doubled offsets from the center, exact integers
    return 2 * ix - (nx - 1), 2 * iy - (ny - 1)


@lru_cache(maxsize=64)
def _reflection(shape, index):
    """Flat permutation and side sign (+1 in H, -1 outside, 0 on the boundary)."""
    ny, nx = shape
    a, b = _centered_indices(shape)
    nx_, ny_ = GRID_NORMALS[index]
    sx, sy = int(np.sign(round(nx_, 6))), int(np.sign(round(ny_, 6)))
    if sx and sy and nx != ny:
        raise GeometryError("diagonal reflections need a square node array")
    if sx and not sy:
        a2, b2 = -a, b
    elif sy and not sx:
        a2, b2 = a, -b
    elif sx == sy:
        a2, b2 = -b, -a
    else:
        a2, b2 = b, a
    perm = ((b2 + ny - 1) // 2) * nx + (a2 + nx - 1) // 2
    side = np.sign(sx * a + sy * b)
    perm.setflags(write=False)
    side.setflags(write=False)
    return perm.ravel(), side.ravel()


def reflection(grid, H: HalfSpace):
    """Node permutation ``sigma_H`` and side indicator for ``H`` on ``grid``.

    Raises
    ------
    GeometryError
        On radial grids, or if the mask or weights are not ``sigma_H`` invariant.
    """
    if grid.is_radial:
        raise GeometryError("polarization needs a planar grid")
    perm, side = _reflection(grid.shape, H.index)
    mask = grid.mask.ravel()
    w = grid.weights.ravel()
    if not (np.array_equal(mask, mask[perm]) and np.array_equal(w, w[perm])):
        raise GeometryError(f"grid is not symmetric under the reflection of {H}")
    return perm, side


def polarize(grid, u, H: HalfSpace):
    """Max of ``u`` and ``u o sigma_H`` on ``H``, min on the complement, ``u`` on the boundary."""
    u = grid.check(u)
    perm, side = reflection(grid, H)
    flat = u.ravel()
    v = flat[perm]
    out = np.where(side > 0, np.maximum(flat, v), np.where(side < 0, np.minimum(flat, v), flat))
    return out.reshape(grid.shape)


class InvariantChecks(NamedTuple):
    lp_exact: bool
    lp_error: float
    gradient_error: float
    gradient_ok: bool
    product_gain: float
    product_cross: float
    product_ok: bool


def _terms(grid, u, p):
    return np.sort((grid.weights * np.abs(u) ** p).ravel())


def polarization_invariants(grid, u, v, H: HalfSpace, grad_tol=1e-10, slack=1e-12):
    """Check norm, gradient and product relations between ``u, v`` and their polarizations.

    ``lp_exact`` compares the sorted multisets of weighted terms
    ``w |u|^p`` (p = 2, 4) bit for bit; ``lp_error`` is the largest relative
    difference of the norms themselves.  ``gradient_error`` is the relative
    change of the Dirichlet integral.  ``product_gain`` is
    ``int u_H^2 v_H^2 - int u^2 v^2`` and ``product_cross`` is
    ``int u^2 v^2 - int u_H^2 v_H^^2``; both must be ``>= -slack`` (relative).
    """
    from .grid import dirichlet_energy, integrate, lp_norm

    uH = polarize(grid, u, H)
    vH = polarize(grid, v, H)
    vHc = polarize(grid, v, H.complement)
    exact = all(np.array_equal(_terms(grid, u, p), _terms(grid, uH, p)) for p in (2, 4))
    lp_err = max(abs(lp_norm(grid, uH, p) - lp_norm(grid, u, p)) / max(lp_norm(grid, u, p), 1e-300)
                 for p in (2, 4))
    e0 = dirichlet_energy(grid, u)
    grad_err = abs(dirichlet_energy(grid, uH) - e0) / max(e0, 1e-300)
    base = integrate(grid, u**2 * v**2)
    scale = max(abs(base), 1e-300)
    gain = integrate(grid, uH**2 * vH**2) - base
    cross = base - integrate(grid, uH**2 * vHc**2)
    return InvariantChecks(exact, lp_err, grad_err, grad_err <= grad_tol, gain, cross,
                           gain >= -slack * scale and cross >= -slack * scale)


# ----------------------------------------------------------------------
# foliated Schwarz audits


def _require_rotational(grid):
    if not grid.is_rotational:
        raise GeometryError(f"foliated Schwarz tests need a disk or annulus grid, got {grid.kind}")


def _unit(p):
    p = np.asarray(p, dtype=float)
    return p / np.linalg.norm(p)


def half_space_violations(grid, u):
    """``max_{x in H} (u(sigma_H x) - u(x))_+ / max|u|`` for each of the eight half-spaces."""
    flat = grid.check(u).ravel()
    scale = np.max(np.abs(flat))
    if scale == 0:
        return np.zeros(len(GRID_NORMALS))
    out = []
    for H in all_half_spaces():
        perm, side = reflection(grid, H)
        diff = (flat[perm] - flat)[side > 0]
        out.append(max(float(diff.max(initial=0.0)), 0.0) / scale)
    return np.array(out)


def violation_for_axis(viol, p):
    """Worst violation over the grid half-spaces whose interior contains ``p``."""
    p = _unit(p)
    sel = [k for k, n in enumerate(GRID_NORMALS) if np.dot(n, p) > 1e-12]
    return float(max(viol[k] for k in sel))


def moment_axis(grid, u):
    """Direction of the first moment ``sum w u (x - c)``; ``None`` if it vanishes."""
    X, Y = grid.coords
    cx, cy = grid.center
    w = grid.weights * u
    m = np.array([np.sum(w * (X - cx)), np.sum(w * (Y - cy))])
    norm = np.linalg.norm(m)
    total = np.sum(np.abs(w)) * grid.domain_radius
    if total == 0 or norm <= 1e-9 * total:
        return None
    return m / norm


def _candidates(grid, fields, candidates):
    if candidates is not None:
        return [_unit(p) for p in candidates]
    cands = [np.array(n) for n in GRID_NORMALS]
    for f in fields:
        p = moment_axis(grid, f)
        if p is not None:
            cands.append(p)
    return cands


def foliated_schwarz_test(grid, u, candidates=None):
    """Best axis among ``candidates`` and its violation.

    Parameters
    ----------
    candidates : iterable of 2-vectors, optional
        Defaults to the eight grid directions plus the moment axis of ``u``.

    Returns
    -------
    axis : ndarray
    violation : float
        ``max(0, u(sigma_H x) - u(x))`` over ``x in H`` and tested ``H`` with
        ``p`` in their interior, relative to ``max|u|``.
    """
    _require_rotational(grid)
    viol = half_space_violations(grid, u)
    best = min(_candidates(grid, [u], candidates), key=lambda p: violation_for_axis(viol, p))
    return best, violation_for_axis(viol, best)


def is_isotropic(grid, u, tol):
    """True if ``u`` is invariant under all eight reflections up to ``tol`` (relative)."""
    flat = grid.check(u).ravel()
    scale = np.max(np.abs(flat))
    if scale == 0:
        return True
    return all(np.max(np.abs(flat[reflection(grid, H)[0]] - flat)) <= tol * scale for H in all_half_spaces())


@dataclass(frozen=True)
class SymmetryReport:
    axis: np.ndarray
    per_component_angle: np.ndarray
    per_component_violation: np.ndarray
    isotropic: np.ndarray
    joint_violation: float
    pairing_angle_deg: float | None
    pairing_ok: bool
    ok: bool

    @property
    def axis_angle(self):
        return float(np.arctan2(self.axis[1], self.axis[0]))

    def as_dict(self):
        out = {"symAxis": self.axis_angle, "symViolation": self.joint_violation,
               "pairingAngleDeg": np.nan if self.pairing_angle_deg is None else self.pairing_angle_deg,
               "symmetryOk": self.ok}
        return out


def default_macro_split(spec, dec):
    """``d`` (same direction) when no coupling is negative, else the first group boundary ``a_1``."""
    off = spec.beta[~np.eye(spec.d, dtype=bool)]
    return spec.d if np.all(off >= 0) else dec.a[1]


def _angle_deg(p, q):
    return float(np.degrees(np.arccos(np.clip(np.dot(_unit(p), _unit(q)), -1.0, 1.0))))


def antipodal_audit(res, dec, l, tol=1e-3, angle_tol=5.0, grid=None, candidates=None):
    """Foliated Schwarz audit of a minimizer with macro split ``l``.

    Components ``0..l-1`` must be foliated Schwarz symmetric with respect to
    a common ``p`` and components ``l..d-1`` with respect to ``-p``;
    ``l = d`` is the same-direction audit.  Components that are invariant under
    every grid reflection carry no axis and are skipped in the pairing.

    Returns
    -------
    SymmetryReport
    """
    u = res.field if hasattr(res, "field") else np.asarray(res)
    grid = grid if grid is not None else res.grid
    _require_rotational(grid)
    d = u.shape[0]
    if not 1 <= l <= d:
        raise ValueError(f"macro split l={l} outside 1..{d}")
    sign = np.where(np.arange(d) < l, 1.0, -1.0)
    viols = [half_space_violations(grid, u[i]) for i in range(d)]
    iso = np.array([is_isotropic(grid, u[i], tol) for i in range(d)])
    active = [i for i in range(d) if not iso[i]]

    if candidates is None:
        # moment axes of the second macro group point to -p
        cands = [np.array(n) for n in GRID_NORMALS]
        for i in active:
            p = moment_axis(grid, u[i])
            if p is not None:
                cands.append(sign[i] * p)
    else:
        cands = [_unit(p) for p in candidates]

    def joint(p):
        return max((violation_for_axis(viols[i], sign[i] * p) for i in active), default=0.0)

    best = min(cands, key=joint)
    jv = joint(best)
    per_v = np.array([violation_for_axis(viols[i], sign[i] * best) for i in range(d)])
    per_angle = np.full(d, np.nan)
    for i in active:
        p = moment_axis(grid, u[i])
        if p is not None:
            per_angle[i] = np.arctan2(p[1], p[0])

    def group_axis(idx):
        m = sum((moment_axis(grid, u[i]) for i in idx if moment_axis(grid, u[i]) is not None),
                np.zeros(2))
        return None if np.linalg.norm(m) == 0 else _unit(m)

    first = [i for i in active if sign[i] > 0]
    second = [i for i in active if sign[i] < 0]
    pairing_angle = None
    pairing_ok = True
    axes = [group_axis(first), group_axis(second)]
    if axes[0] is not None and axes[1] is not None:
        pairing_angle = _angle_deg(axes[0], -axes[1])
        pairing_ok = pairing_angle <= angle_tol
    # all active components of one macro group must share the axis
    for idx, s in ((first, 1.0), (second, -1.0)):
        ref = axes[0] if axes[0] is not None else (-axes[1] if axes[1] is not None else None)
        for i in idx:
            p = moment_axis(grid, u[i])
            if p is not None and ref is not None and _angle_deg(s * p, ref) > angle_tol:
                pairing_ok = False
    return SymmetryReport(best, per_angle, per_v, iso, jv, pairing_angle, pairing_ok,
                          bool(jv <= tol and pairing_ok))
