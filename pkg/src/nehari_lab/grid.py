"""Finite-difference grids with Dirichlet masking.

A :class:`Grid` stores node coordinates on a full tensor array together with
an interior mask and per-node quadrature weights.  Fields are plain numpy
arrays of the grid's ``shape`` (scalar) or ``(d, *shape)`` (vector) that
vanish on masked nodes.

The discrete Dirichlet form is assembled edge by edge, so that

    u . S v = sum_edges c_e (u_a - u_b)(v_a - v_b)

is exactly the summation-by-parts partner of the nodal Laplacian
``-lap u = S u / weight``.  Every identity between the energy, its gradient
and the inner products relies on this.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, FieldShapeError, GeometryError, NormNotEquivalentError

KINDS = ("rectangle2d", "disk2d", "annulus2d", "radial")

# surface area of the unit sphere in R^N
SPHERE_AREA = {2: 2.0 * math.pi, 3: 4.0 * math.pi}


class Grid:
    """Immutable discretized domain.

    Use the constructors :meth:`rectangle`, :meth:`disk`, :meth:`annulus`
    and :meth:`radial` rather than calling ``Grid`` directly.

    Attributes
    ----------
    kind : str
        One of ``rectangle2d``, ``disk2d``, ``annulus2d``, ``radial``.
    extents : dict
        Geometric parameters (``lx``/``ly``, ``radius``, ``r_in``/``r_out``
        or ``r_max``).
    n : int
        Points per axis (including the boundary nodes).
    h : float
        Uniform node spacing.
    dim : int
        Space dimension N.  Planar grids have ``dim == 2``; radial lines
        carry the dimension of the radially symmetric problem they house.
    coords : tuple of ndarray
        ``(x, y)`` arrays of ``shape`` for planar grids, ``(r,)`` for radial.
    mask : ndarray of bool
        True on free (interior) nodes.
    weights : ndarray
        Quadrature weight of every node.
    """

    def __init__(self, kind, extents, n, h, coords, mask, weights, dim, edges):
        self.kind = kind
        self.extents = dict(extents)
        self.n = int(n)
        self.h = float(h)
        self.coords = tuple(np.asarray(c, dtype=float) for c in coords)
        self.mask = np.asarray(mask, dtype=bool)
        self.weights = np.asarray(weights, dtype=float)
        self.dim = int(dim)
        self._edges = edges
        for arr in (*self.coords, self.mask, self.weights):
            arr.setflags(write=False)
        if not self.mask.any():
            raise GeometryError(f"{kind} grid has no interior nodes")
        self._solvers = {}

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def rectangle(cls, lx=1.0, ly=None, n=33, centered=False):
        """Rectangle ``[0, lx] x [0, ly]`` (or centered at the origin)."""
        ly = lx if ly is None else ly
        if lx <= 0 or ly <= 0 or n < 3:
            raise GeometryError("rectangle needs positive sides and n >= 3")
        h = lx / (n - 1)
        ny = int(round(ly / h)) + 1
        if ny < 3 or abs((ny - 1) * h - ly) > 1e-9 * ly:
            raise GeometryError(f"side ly={ly} is not a multiple of h={h}")
        x0, y0 = (-lx / 2, -ly / 2) if centered else (0.0, 0.0)
        x = x0 + h * np.arange(n)
        y = y0 + h * np.arange(ny)
        X, Y = np.meshgrid(x, y)
        mask = np.zeros((ny, n), dtype=bool)
        mask[1:-1, 1:-1] = True
        # trapezoid weights: sum is exactly lx * ly
        wx = np.full(n, h)
        wx[[0, -1]] = h / 2
        wy = np.full(ny, h)
        wy[[0, -1]] = h / 2
        weights = np.outer(wy, wx)
        extents = {"lx": float(lx), "ly": float(ly), "centered": bool(centered)}
        return cls("rectangle2d", extents, n, h, (X, Y), mask, weights, 2, _planar_edges(mask))

    @classmethod
    def disk(cls, radius=1.0, n=65):
        """Disk of given radius centered at the origin, staircase boundary.

        A node is free when its half-cell lies inside the disk,
        ``|x| < radius - h/2``.
        """
        if radius <= 0 or n < 3:
            raise GeometryError("disk needs a positive radius and n >= 3")
        X, Y, h = _square_nodes(radius, n)
        mask = np.hypot(X, Y) < radius - h / 2
        return cls._masked("disk2d", {"radius": float(radius)}, n, h, X, Y, mask)

    @classmethod
    def annulus(cls, r_in=0.5, r_out=1.0, n=65):
        """Annulus ``r_in < |x| < r_out`` centered at the origin (half-cell rule)."""
        if not 0 < r_in < r_out or n < 3:
            raise GeometryError("annulus needs 0 < r_in < r_out and n >= 3")
        X, Y, h = _square_nodes(r_out, n)
        r = np.hypot(X, Y)
        mask = (r > r_in + h / 2) & (r < r_out - h / 2)
        return cls._masked("annulus2d", {"r_in": float(r_in), "r_out": float(r_out)}, n, h, X, Y, mask)

    @classmethod
    def radial(cls, r_max=12.0, n=241, dim=2):
        """Radial line ``[0, r_max]`` housing radial functions on R^dim.

        Node ``r = 0`` is free (zero-slope condition), ``r = r_max`` is
        Dirichlet.  Weights are ``|S^{N-1}| r^{N-1} h`` for ``0 < r < r_max``,
        half of that at ``r_max`` and the ball volume ``|B_{h/2}|`` at the
        origin, which keeps ``-lap u = S u / weight`` consistent at ``r = 0``.
        """
        if dim not in SPHERE_AREA:
            raise GeometryError(f"radial grids support dim 2 or 3, got {dim}")
        if r_max <= 0 or n < 3:
            raise GeometryError("radial line needs r_max > 0 and n >= 3")
        h = r_max / (n - 1)
        r = h * np.arange(n)
        area = SPHERE_AREA[dim]
        weights = area * r ** (dim - 1) * h
        weights[0] = area * (h / 2) ** dim / dim
        weights[-1] *= 0.5
        mask = np.ones(n, dtype=bool)
        mask[-1] = False
        rhalf = r[:-1] + h / 2
        edges = (np.arange(n - 1), np.arange(1, n), area * rhalf ** (dim - 1) / h)
        return cls("radial", {"r_max": float(r_max)}, n, h, (r,), mask, weights, dim, edges)

    @classmethod
    def _masked(cls, kind, extents, n, h, X, Y, mask):
        mask = mask.copy()
        mask[[0, -1], :] = False
        mask[:, [0, -1]] = False
        weights = np.where(mask, h * h, 0.0)
        return cls(kind, extents, n, h, (X, Y), mask, weights, 2, _planar_edges(mask))

    def restrict(self, submask):
        """Same nodes, Dirichlet outside ``mask & submask``."""
        submask = np.asarray(submask, dtype=bool)
        if submask.shape != self.shape:
            raise FieldShapeError(f"submask shape {submask.shape} != grid shape {self.shape}")
        mask = self.mask & submask
        if not mask.any():
            raise GeometryError("restriction has empty interior")
        if self.is_radial:
            raise GeometryError("radial grids cannot be restricted")
        weights = np.where(mask, self.h * self.h, 0.0)
        return Grid(self.kind, self.extents, self.n, self.h, self.coords, mask, weights, self.dim,
                    _planar_edges(mask))

    # ------------------------------------------------------------------
    # geometry helpers

    @property
    def shape(self):
        return self.mask.shape

    @property
    def is_radial(self):
        return self.kind == "radial"

    @property
    def is_bounded(self):
        return not self.is_radial

    @property
    def is_rotational(self):
        """Disk or annulus centered at the origin."""
        return self.kind in ("disk2d", "annulus2d")

    @cached_property
    def interior(self):
        """Flat indices of free nodes."""
        return np.flatnonzero(self.mask)

    @cached_property
    def center(self):
        if self.is_radial:
            return np.zeros(1)
        X, Y = self.coords
        return np.array([0.5 * (X.min() + X.max()), 0.5 * (Y.min() + Y.max())])

    @cached_property
    def domain_radius(self):
        """Characteristic radius used to place initial bumps."""
        e = self.extents
        if self.kind == "disk2d":
            return e["radius"]
        if self.kind == "annulus2d":
            return e["r_out"]
        if self.kind == "rectangle2d":
            return 0.5 * min(e["lx"], e["ly"])
        return e["r_max"]

    @cached_property
    def area(self):
        return float(self.weights[self.mask].sum())

    def check(self, u):
        """Raise :class:`FieldShapeError` unless ``u`` is a scalar field on this grid."""
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise FieldShapeError(f"field shape {u.shape} does not match grid shape {self.shape}")
        return u

    def check_field(self, u, d):
        """Same for a stacked ``(d, *shape)`` vector field."""
        u = np.asarray(u, dtype=float)
        if u.shape != (d, *self.shape):
            raise FieldShapeError(f"field shape {u.shape} does not match {(d, *self.shape)}")
        return u

    def zeros(self, d=None):
        return np.zeros(self.shape if d is None else (d, *self.shape))

    def to_interior(self, u):
        """Values at free nodes; accepts scalar or stacked fields."""
        u = np.asarray(u, dtype=float)
        return u.reshape(*u.shape[: u.ndim - len(self.shape)], -1)[..., self.interior]

    def from_interior(self, vals):
        vals = np.asarray(vals, dtype=float)
        lead = vals.shape[:-1]
        out = np.zeros((*lead, self.mask.size))
        out[..., self.interior] = vals
        return out.reshape(*lead, *self.shape)

    # ------------------------------------------------------------------
    # discrete operators

    @cached_property
    def stiffness(self):
        """Symmetric Dirichlet form on free nodes (CSR)."""
        a, b, c = self._edges
        index = np.full(self.mask.size, -1)
        index[self.interior] = np.arange(self.interior.size)
        ia, ib = index[a], index[b]
        rows, cols, vals = [], [], []
        for i, j in ((ia, ib), (ib, ia)):
            keep = i >= 0
            rows.append(i[keep])
            cols.append(i[keep])
            vals.append(c[keep])
        both = (ia >= 0) & (ib >= 0)
        rows += [ia[both], ib[both]]
        cols += [ib[both], ia[both]]
        vals += [-c[both], -c[both]]
        nint = self.interior.size
        S = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nint, nint))
        return S.tocsr()

    @cached_property
    def interior_weights(self):
        return self.weights.ravel()[self.interior]

    def shifted_solve(self, lam):
        """Return ``f -> (S + lam Q)^{-1} f`` on free-node vectors (cached LU)."""
        key = float(lam)
        solve = self._solvers.get(key)
        if solve is None:
            A = (self.stiffness + key * sp.diags(self.interior_weights)).tocsc()
            solve = spla.factorized(A)
            self._solvers[key] = solve
        return solve

    @cached_property
    def mu1(self):
        """Cached first Dirichlet eigenvalue (bounded grids only)."""
        return first_eigenvalue(self)

    def check_shift(self, lam):
        """Raise unless ``||.||^2 + lam |.|_2^2`` is an equivalent norm."""
        if self.is_radial:
            if lam <= 0:
                raise NormNotEquivalentError(f"norm not equivalent: lambda={lam} must be > 0 on R^N")
        elif lam < 0 and lam <= -self.mu1:
            raise NormNotEquivalentError(
                f"norm not equivalent: lambda={lam} <= -mu1={-self.mu1:.6g}")


def _square_nodes(radius, n):
    h = 2.0 * radius / (n - 1)
    x = -radius + h * np.arange(n)
    # symmetric coordinates: mirror nodes must have exactly opposite values
    x = 0.5 * (x - x[::-1])
    X, Y = np.meshgrid(x, x)
    return X, Y, h


def _planar_edges(mask):
    """Unit-coefficient 5-point edges touching at least one free node."""
    ny, nx = mask.shape
    idx = np.arange(mask.size).reshape(ny, nx)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    flat = mask.ravel()
    keep = flat[a] | flat[b]
    return a[keep], b[keep], np.ones(int(keep.sum()))


# ----------------------------------------------------------------------
# module-level operations


def laplacian(grid, u):
    """Discrete Laplacian of a scalar field, zero on masked nodes."""
    u = grid.check(u)
    ui = grid.to_interior(u)
    return grid.from_interior(-(grid.stiffness @ ui) / grid.interior_weights)


def dirichlet_energy(grid, u, v=None):
    """Discrete ``int grad u . grad v`` (``v = u`` by default)."""
    ui = grid.to_interior(grid.check(u))
    vi = ui if v is None else grid.to_interior(grid.check(v))
    return float(ui @ (grid.stiffness @ vi))


def integrate(grid, f):
    """Quadrature of a nodal function."""
    f = np.asarray(f, dtype=float)
    return float(np.sum(grid.weights * f))


def inner_product(grid, u, v, lam):
    """``<u, v>_lam = int grad u . grad v + lam u v``.

    Raises
    ------
    NormNotEquivalentError
        If ``lam <= -mu1`` (bounded grids) or ``lam <= 0`` (radial lines).
    """
    grid.check_shift(lam)
    return dirichlet_energy(grid, u, v) + lam * integrate(grid, np.asarray(u) * np.asarray(v))


def lp_norm(grid, u, p):
    """``(sum |u|^p w)^(1/p)`` for ``p >= 1``."""
    if p < 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    u = grid.check(u)
    return integrate(grid, np.abs(u) ** p) ** (1.0 / p)


def first_eigenvalue(grid, tol=1e-10, max_iter=10_000):
    """First Dirichlet eigenvalue by inverse power iteration.

    Iterates ``x <- S^{-1} Q x`` and stops once successive Rayleigh
    quotients differ by less than ``tol`` (relative).
    """
    if not grid.is_bounded:
        raise GeometryError("first_eigenvalue needs a bounded-domain grid")
    S = grid.stiffness
    q = grid.interior_weights
    solve = grid.shifted_solve(0.0)
    x = np.ones(S.shape[0])
    mu = float(x @ (S @ x)) / float(x @ (q * x))
    for _ in range(max_iter):
        x = solve(q * x)
        x /= np.sqrt(x @ (q * x))
        mu_new = float(x @ (S @ x))
        if abs(mu_new - mu) < tol * abs(mu_new):
            return mu_new
        mu = mu_new
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps")
