import numpy as np
import pytest

from nehari_lab import (CouplingSpec, Decomposition, Grid, PreconditionError, Problem, ProjectionError,
                        natural_constraint_residual, project_to_n, scaling_energy, solve_scaling)
from nehari_lab.nehari import psi, scale_groups
from nehari_lab.solver import gaussian

GRID = Grid.rectangle(n=17)


def problem(B, a, lam=None, grid=GRID):
    B = np.asarray(B, dtype=float)
    lam = np.ones(len(B)) if lam is None else lam
    return Problem(grid, CouplingSpec(B, lam), Decomposition(a))


def random_field(p, rng):
    return np.abs(rng.standard_normal((p.d, *p.grid.shape))) * p.grid.mask


P3 = problem([[1, 0.5, -0.2], [0.5, 1, -0.1], [-0.2, -0.1, 1]], (0, 2, 3))


def test_scaling_energy_identity_and_zero():
    u = random_field(P3, np.random.default_rng(0))
    assert scaling_energy(P3, u, np.ones(2)) == pytest.approx(P3.energy(u), rel=1e-13)
    assert scaling_energy(P3, u, np.zeros(2)) == 0.0
    with pytest.raises(ValueError):
        scaling_energy(P3, u, np.array([1.0, -0.5]))


def test_scaling_energy_matches_scaled_field():
    u = random_field(P3, np.random.default_rng(1))
    t = np.array([0.3, 2.5])
    assert scaling_energy(P3, u, t) == pytest.approx(P3.energy(scale_groups(P3, u, t)), rel=1e-12)


def test_point_of_N_has_unit_t():
    u = project_to_n(P3, random_field(P3, np.random.default_rng(2)))
    res = solve_scaling(P3, u)
    assert res.solvable and res.all_positive
    assert np.max(np.abs(res.t - 1)) <= 1e-8


def test_single_component_ratio():
    p = problem([[2.0]], (0, 1))
    u = random_field(p, np.random.default_rng(3))
    n = p.norms(u)[0]
    quart = p.quartic(u)[0, 0]
    assert solve_scaling(p, u).t[0] == pytest.approx(n / (2.0 * quart), rel=1e-13)


def test_decoupled_groups():
    p = problem([[1, 0], [0, 3]], (0, 1, 2))
    u = random_field(p, np.random.default_rng(4))
    n = p.norms(u)
    P = p.quartic(u)
    t = solve_scaling(p, u).t
    assert t == pytest.approx([n[0] / P[0, 0], n[1] / (3 * P[1, 1])], rel=1e-13)


def test_zero_group_rejected():
    u = random_field(P3, np.random.default_rng(5))
    u[2] = 0
    with pytest.raises(PreconditionError):
        solve_scaling(P3, u)


def test_projection_leaves_orthant():
    p = problem([[1, -5], [-5, 1]], (0, 1, 2))
    bump = gaussian(GRID, (0.5, 0.5), 0.3)
    u = np.stack([bump, 1.01 * bump])
    with pytest.raises(ProjectionError, match="projection leaves positive orthant") as exc:
        project_to_n(p, u)
    assert np.any(exc.value.t <= 0)
    assert not solve_scaling(p, u).all_positive


def test_projection_idempotent_and_in_N():
    rng = np.random.default_rng(6)
    for _ in range(10):
        v = project_to_n(P3, random_field(P3, rng))
        assert P3.membership(v).in_N
        w = project_to_n(P3, v)
        assert np.max(np.abs(w - v)) <= 1e-8 * np.max(np.abs(v))


def test_concavity_and_maximality():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(5):
        u = random_field(P3, rng)
        stats = P3.group_stats(u)
        res = solve_scaling(P3, u)
        assert res.all_positive
        if P3.membership(u).in_E:
            np.linalg.cholesky(stats.MB)
            top = psi(stats, res.t)
            samples = rng.uniform(0, 2, (1000, 2)) * res.t
            assert all(psi(stats, t) <= top for t in samples)
            checked += 1
    assert checked > 0


def test_psi_at_one_on_N():
    v = project_to_n(P3, random_field(P3, np.random.default_rng(8)))
    stats = P3.group_stats(v)
    assert psi(stats, np.ones(2)) == pytest.approx(P3.energy(v), rel=1e-13)
    assert P3.energy(v) == pytest.approx(0.25 * stats.group_norms.sum(), rel=1e-8)


def test_random_point_of_N_is_not_critical():
    v = project_to_n(P3, random_field(P3, np.random.default_rng(9)))
    assert natural_constraint_residual(P3, v, normalized=True) > 1e-2


def test_normalized_residual_scaling_invariance():
    rng = np.random.default_rng(10)
    u = random_field(P3, rng)
    c = 3.7
    B = P3.spec.beta
    scaled = problem(B / c**2, (0, 2, 3))
    r1 = natural_constraint_residual(P3, u, normalized=True)
    r2 = natural_constraint_residual(scaled, c * u, normalized=True)
    assert r2 == pytest.approx(r1, rel=1e-10)
