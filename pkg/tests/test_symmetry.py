import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nehari_lab import (CouplingSpec, Decomposition, GeometryError, Grid, HalfSpace, Problem,
                        SolverConfig, antipodal_audit, foliated_schwarz_test, minimize,
                        polarization_invariants, polarize, project_to_n)
from nehari_lab.grid import dirichlet_energy
from nehari_lab.solver import gaussian
from nehari_lab.symmetry import GRID_NORMALS, all_half_spaces, half_space_violations

DISK = Grid.disk(n=33)
RIGHT = HalfSpace((1, 0))


def bump_at(angle, rad=0.5, width=0.25, grid=DISK):
    return gaussian(grid, (rad * np.cos(angle), rad * np.sin(angle)), width)


def test_half_space_normals():
    assert len(all_half_spaces()) == 8
    assert RIGHT.complement == HalfSpace((-1, 0))
    assert HalfSpace((2, 2)) == HalfSpace((1, 1))
    with pytest.raises(GeometryError):
        HalfSpace((1, 2))


def test_polarize_keeps_ordered_field():
    X, _ = DISK.coords
    u = X * DISK.mask
    assert np.array_equal(polarize(DISK, u, RIGHT), u)


def test_polarize_reversed_ramp_is_flipped():
    # values are only swapped between mirror nodes, so -x becomes x (not |x|)
    X, _ = DISK.coords
    assert np.array_equal(polarize(DISK, -X * DISK.mask, RIGHT), X * DISK.mask)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(0, 7))
def test_polarize_idempotent_and_permutation(seed, k):
    H = HalfSpace(GRID_NORMALS[k])
    u = np.abs(np.random.default_rng(seed).standard_normal(DISK.shape)) * DISK.mask
    uH = polarize(DISK, u, H)
    assert np.array_equal(polarize(DISK, uH, H), uH)
    assert np.array_equal(np.sort(uH.ravel()), np.sort(u.ravel()))
    assert np.all(uH >= 0)


def test_invariants_on_random_fields():
    rng = np.random.default_rng(0)
    for H in all_half_spaces():
        for _ in range(5):
            u = np.abs(rng.standard_normal(DISK.shape)) * DISK.mask
            v = np.abs(rng.standard_normal(DISK.shape)) * DISK.mask
            chk = polarization_invariants(DISK, u, v, H)
            assert chk.lp_exact and chk.lp_error <= 1e-14
            assert chk.product_ok


def test_polarization_never_raises_dirichlet_energy():
    rng = np.random.default_rng(1)
    for H in all_half_spaces():
        u = np.abs(rng.standard_normal(DISK.shape)) * DISK.mask
        assert dirichlet_energy(DISK, polarize(DISK, u, H)) <= dirichlet_energy(DISK, u) * (1 + 1e-14)


def test_equal_fields_give_equality():
    u = np.abs(np.random.default_rng(2).standard_normal(DISK.shape)) * DISK.mask
    assert polarization_invariants(DISK, u, u, RIGHT).product_gain == 0.0


def test_mirrored_bumps_give_strict_gain():
    u = bump_at(0.0, width=0.15)
    v = bump_at(np.pi, width=0.15)
    chk = polarization_invariants(DISK, u, v, RIGHT)
    assert chk.product_gain > 1e-3
    coincident = polarization_invariants(DISK, u, u.copy(), RIGHT)
    assert coincident.product_cross > 1e-3


def test_symmetric_field_gives_equalities():
    X, Y = DISK.coords
    u = np.exp(-(X**2 + 2 * Y**2)) * DISK.mask
    v = np.exp(-(2 * X**2 + Y**2)) * DISK.mask
    chk = polarization_invariants(DISK, u, v, RIGHT)
    assert chk.lp_exact and chk.gradient_error == 0.0
    assert chk.product_gain == 0.0 and chk.product_cross == 0.0


def test_polarize_requires_planar_grid():
    g = Grid.radial(n=41, r_max=4)
    with pytest.raises(GeometryError):
        polarize(g, np.zeros(41), RIGHT)


def test_radial_function_has_no_violation():
    X, Y = DISK.coords
    u = np.exp(-(X**2 + Y**2)) * DISK.mask
    assert np.all(half_space_violations(DISK, u) == 0)
    for p in GRID_NORMALS:
        assert foliated_schwarz_test(DISK, u, candidates=[p])[1] == 0.0


def test_off_center_bump_axis():
    axis, viol = foliated_schwarz_test(DISK, bump_at(0.0))
    assert axis == pytest.approx([1.0, 0.0], abs=1e-12)
    assert viol <= 1e-12


def test_antipodal_bumps_have_no_axis():
    u = bump_at(0.0) + bump_at(np.pi)
    circle = [(np.cos(a), np.sin(a)) for a in np.linspace(0, 2 * np.pi, 64, endpoint=False)]
    _, viol = foliated_schwarz_test(DISK, u, candidates=circle)
    assert viol > 0.1


def test_violation_invariant_under_grid_rotation():
    u = bump_at(0.4) + 0.3 * bump_at(2.5)
    rot = np.rot90(u)  # rows run along +y, so this turns the field clockwise in (x, y)
    for p in GRID_NORMALS:
        p = np.array(p)
        q = np.array([p[1], -p[0]])
        v1 = foliated_schwarz_test(DISK, u, candidates=[p])[1]
        v2 = foliated_schwarz_test(DISK, rot, candidates=[q])[1]
        assert v1 == pytest.approx(v2, abs=1e-15)


def test_foliated_test_needs_rotational_grid():
    with pytest.raises(GeometryError):
        foliated_schwarz_test(Grid.rectangle(n=17), np.zeros((17, 17)))


def test_antipodal_audit_constructed():
    u = np.stack([bump_at(0.0), bump_at(np.pi)])
    rep = antipodal_audit(u, Decomposition((0, 1, 2)), 1, grid=DISK)
    assert rep.ok and rep.joint_violation <= 1e-12
    assert rep.pairing_angle_deg == pytest.approx(0.0, abs=1e-6)
    same = antipodal_audit(u, Decomposition((0, 1, 2)), 2, grid=DISK)
    assert not same.ok


def test_antipodal_audit_isotropic_fields():
    X, Y = DISK.coords
    u = np.stack([np.exp(-(X**2 + Y**2)), np.exp(-3 * (X**2 + Y**2))]) * DISK.mask
    rep = antipodal_audit(u, Decomposition((0, 1, 2)), 2, grid=DISK)
    assert rep.isotropic.all() and rep.joint_violation == 0.0
    assert rep.pairing_ok and rep.pairing_angle_deg is None
    d = rep.as_dict()
    assert set(d) == {"symAxis", "symViolation", "pairingAngleDeg", "symmetryOk"}


@pytest.fixture(scope="module")
def competitive_minimizer():
    spec = CouplingSpec([[1, -1], [-1, 1]], [1, 1])
    prob = Problem(DISK, spec, Decomposition((0, 1, 2)))
    cfg = SolverConfig(tol_energy=1e-12)
    return prob, minimize(prob, cfg), cfg


def test_competitive_minimizer_is_antipodal(competitive_minimizer):
    prob, res, _ = competitive_minimizer
    rep = antipodal_audit(res, prob.dec, 1, grid=DISK)
    assert rep.ok and rep.joint_violation <= 1e-3


def test_polarized_minimizer_keeps_energy(competitive_minimizer):
    prob, res, cfg = competitive_minimizer
    u = res.field
    for H in all_half_spaces():
        uH = np.stack([polarize(DISK, u[0], H), polarize(DISK, u[1], H.complement)])
        J = prob.energy(project_to_n(prob, uH))
        assert abs(J - res.energy) <= 10 * cfg.tol_energy * max(1.0, abs(res.energy))
