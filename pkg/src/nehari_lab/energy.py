"""Energy functional, its L2 gradient, group aggregates and set memberships.

A field is an array of shape ``(d, *grid.shape)`` that vanishes on masked
nodes.  Internally every quantity is computed on the stacked interior values
``U`` of shape ``(d, n_free)`` with quadrature weights ``q``:

* ``||u_i||_i^2 = U_i . S U_i + lam_i sum q U_i^2``
* ``P_ij = sum q U_i^2 U_j^2`` (quartic interaction masses)
* ``M_B[h, k] = sum_{i in I_h, j in I_k} beta_ij P_ij``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .coupling import CouplingSpec, Decomposition

MAX_COMPONENTS = 16


@dataclass(frozen=True)
class GroupStats:
    """Group norms ``||u_h||_h^2``, the matrix ``M_B(u)`` and ``G_h(u)``."""

    group_norms: np.ndarray
    MB: np.ndarray
    G: np.ndarray


class Membership(NamedTuple):
    in_N: bool
    in_Ntilde: bool
    in_E: bool


class Problem:
    """Coupled cubic system on a grid with a fixed decomposition.

    Parameters
    ----------
    grid : Grid
    spec : CouplingSpec
    dec : Decomposition
        Defaults to a single group.
    """

    def __init__(self, grid, spec: CouplingSpec, dec: Decomposition | None = None):
        dec = Decomposition((0, spec.d)) if dec is None else dec
        if dec.d != spec.d:
            raise ValueError(f"decomposition has d={dec.d}, coupling has d={spec.d}")
        if spec.d > MAX_COMPONENTS:
            raise ValueError(f"at most {MAX_COMPONENTS} components are supported")
        spec.check_grid(grid)
        self.grid = grid
        self.spec = spec
        self.dec = dec
        self._E = np.zeros((spec.d, dec.m))
        self._E[np.arange(spec.d), dec.group_of] = 1.0

    @property
    def d(self):
        return self.spec.d

    @property
    def m(self):
        return self.dec.m

    # -- plumbing -------------------------------------------------------

    def interior(self, u):
        """Stacked interior values, shape ``(d, n_free)``."""
        u = self.grid.check_field(u, self.d)
        return u.reshape(self.d, -1)[:, self.grid.interior]

    def field(self, U):
        """Inverse of :meth:`interior`."""
        out = np.zeros((self.d, self.grid.mask.size))
        out[:, self.grid.interior] = U
        return out.reshape((self.d,) + self.grid.shape)

    def zeros(self):
        return self.grid.zeros(self.d)

    def _dirichlet(self, U, V=None):
        S = self.grid.stiffness
        V = U if V is None else V
        return np.einsum("in,in->i", U, (S @ V.T).T)

    def _norms(self, U):
        q = self.grid.interior_weights
        return self._dirichlet(U) + self.spec.lam * ((U * U) @ q)

    def _quartic(self, U):
        q = self.grid.interior_weights
        W = U * U
        return (W * q) @ W.T

    # -- public quantities ---------------------------------------------

    def norms(self, u):
        """``||u_i||_i^2`` for every component."""
        return self._norms(self.interior(u))

    def quartic(self, u):
        """Matrix ``P_ij = int u_i^2 u_j^2``."""
        return self._quartic(self.interior(u))

    def energy(self, u):
        """``J(u) = 1/2 sum ||u_i||_i^2 - 1/4 sum beta_ij int u_i^2 u_j^2``."""
        U = self.interior(u)
        return 0.5 * float(self._norms(U).sum()) - 0.25 * float(np.sum(self.spec.beta * self._quartic(U)))

    def gradient(self, u):
        """L2 gradient ``-Lap u_i + lam_i u_i - sum_j beta_ij u_j^2 u_i``."""
        U = self.interior(u)
        q = self.grid.interior_weights
        SU = (self.grid.stiffness @ U.T).T
        G = SU / q + self.spec.lam[:, None] * U - (self.spec.beta @ (U * U)) * U
        return self.field(G)

    def dual_gradient(self, U):
        """``Q`` times the L2 gradient on interior values (avoids dividing by ``q``)."""
        q = self.grid.interior_weights
        SU = (self.grid.stiffness @ U.T).T
        return SU + q * (self.spec.lam[:, None] * U - (self.spec.beta @ (U * U)) * U)

    def residual(self, u, normalized=False):
        """Quadrature L2 norm of the gradient; optionally relative to ``|u|_2``."""
        U = self.interior(u)
        q = self.grid.interior_weights
        R = self.dual_gradient(U) / q
        r = float(np.sqrt(np.sum(R * R * q)))
        if normalized:
            r /= float(np.sqrt(np.sum(U * U * q)))
        return r

    def group_stats(self, u):
        U = self.interior(u)
        return self._group_stats(U)

    def _group_stats(self, U):
        E = self._E
        norms = self._norms(U) @ E
        MB = E.T @ (self.spec.beta * self._quartic(U)) @ E
        MB = 0.5 * (MB + MB.T)
        return GroupStats(norms, MB, norms - MB.sum(axis=1))

    def membership(self, u, tol=1e-8):
        return membership_from_stats(self.group_stats(u), tol)

    def second_variation(self, u, v):
        """``d2J(u)[v, v]``."""
        U = self.interior(u)
        V = self.interior(v)
        q = self.grid.interior_weights
        B = self.spec.beta
        lin = float(self._dirichlet(V).sum() + self.spec.lam @ ((V * V) @ q))
        cross = float(np.sum(B * (((U * U) * q) @ (V * V).T)))
        mixed = float(np.sum(B * (((U * V) * q) @ (U * V).T)))
        return lin - cross - 2.0 * mixed


def membership_from_stats(stats: GroupStats, tol=1e-8):
    """Flags for the Nehari set, its relaxation and the diagonally dominant set.

    The relaxation keeps fields with ``G_h <= 0`` (``sum_{i in I_h} dJ(u)[u_i] <= 0``)
    for every group; all tests are relative to the group norm.
    """
    n = stats.group_norms
    nonzero = bool(np.all(n > tol))
    in_N = nonzero and bool(np.all(np.abs(stats.G) <= tol * n))
    in_Nt = nonzero and bool(np.all(stats.G <= tol * n))
    return Membership(in_N, in_Nt, diagonally_dominant(stats.MB))


def diagonally_dominant(M):
    """Strict row diagonal dominance ``M_hh > sum_{k != h} |M_hk|``."""
    diag = np.diag(M)
    off = np.abs(M).sum(axis=1) - np.abs(diag)
    return bool(np.all(diag > off))


def dominance_margin(M):
    diag = np.diag(M)
    return float(np.min(diag - (np.abs(M).sum(axis=1) - np.abs(diag))))
