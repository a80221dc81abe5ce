"""Exit criteria, one test per criterion.

Run with ``pytest -m acceptance -v``; the terminal summary lists one
PASS/FAIL line per criterion.
"""
import time

import numpy as np
import pytest

from nehari_lab import (CouplingSpec, Decomposition, Grid, Problem, SolverConfig, antipodal_audit,
                        constants_report, decay_audit, minimize, multistart, polarization_invariants,
                        positivity_audit, project_to_n, solve_scaling, splitting_experiment,
                        subsystem_level)
from nehari_lab.cli import main
from nehari_lab.nehari import psi
from nehari_lab.symmetry import all_half_spaces

from oracles import shooting_ground_state

pytestmark = pytest.mark.acceptance

PAIR = Decomposition((0, 1, 2))
TRIPLE = Decomposition((0, 2, 3))


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


def spec2(b):
    return CouplingSpec([[1.0, b], [b, 1.0]], [1.0, 1.0])


def spec3(b12, b):
    return CouplingSpec([[1.0, b12, b], [b12, 1.0, b], [b, b, 1.0]], [1.0, 1.0, 1.0])


def bumps(grid, rng, d, count=3):
    """Smooth positive fields: a few Gaussians per component."""
    X, Y = grid.coords
    c = np.array(grid.center)
    R = grid.domain_radius
    u = np.zeros((d, *grid.shape))
    for i in range(d):
        for _ in range(count):
            x0, y0 = c + rng.uniform(-0.5, 0.5, 2) * R
            w = rng.uniform(0.1, 0.4) * R
            u[i] += rng.uniform(0.2, 2.0) * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2 * w * w))
    return u * grid.mask


# ----------------------------------------------------------------------


def test_criterion_01_gradient_consistency():
    grid = Grid.rectangle(n=33)
    rng = np.random.default_rng(101)
    eps = 1e-5
    with Budget(10):
        worst = 0.0
        for k in range(100):
            b12, b = rng.uniform(0, 2), rng.uniform(-1, 1)
            p = Problem(grid, spec3(b12, b), TRIPLE)
            u = rng.standard_normal((3, *grid.shape)) * grid.mask
            v = rng.standard_normal((3, *grid.shape)) * grid.mask
            fd = (p.energy(u + eps * v) - p.energy(u - eps * v)) / (2 * eps)
            an = float(np.sum(p.gradient(u) * v * grid.weights))
            worst = max(worst, abs(fd - an) / abs(an))
    assert worst <= 1e-6, worst


def test_criterion_02_nehari_identities():
    grid = Grid.rectangle(n=33)
    rng = np.random.default_rng(202)
    with Budget(30):
        for k in range(200):
            if k % 2:
                p = Problem(grid, spec2(rng.uniform(-0.5, 0.0)), PAIR)
            else:
                p = Problem(grid, spec3(rng.uniform(0, 2), rng.uniform(-0.3, 0.0)), TRIPLE)
            u = project_to_n(p, bumps(grid, rng, p.d))
            st = p.group_stats(u)
            assert np.all(np.abs(st.G) <= 1e-8 * st.group_norms), k
            J, n = p.energy(u), p.norms(u).sum()
            assert abs(J - 0.25 * n) <= 1e-8 * abs(J), k


def test_criterion_03_scaling_oracle():
    grid = Grid.rectangle(n=17)
    rng = np.random.default_rng(303)
    cells = 200
    with Budget(60):
        done = 0
        while done < 20:
            p = Problem(grid, spec2(rng.uniform(-0.5, 0.5)), PAIR)
            u = bumps(grid, rng, 2, count=2)
            sol = solve_scaling(p, u)
            if not (sol.solvable and sol.all_positive):
                continue
            stats = p.group_stats(u)
            axis = np.linspace(0.0, 2.0 * sol.t.max(), cells)
            T1, T2 = np.meshgrid(axis, axis, indexing="ij")
            t = np.stack([T1.ravel(), T2.ravel()], axis=1)
            vals = 0.5 * t @ stats.group_norms - 0.25 * np.einsum("ki,ij,kj->k", t, stats.MB, t)
            k = int(np.argmax(vals))
            best = t[k]
            cell = axis[1] - axis[0]
            assert np.all(np.abs(best - sol.t) <= cell), (best, sol.t)
            assert psi(stats, sol.t) >= vals[k] - 1e-12 * abs(vals[k])
            done += 1


def test_criterion_04_inclusion_in_E():
    grid = Grid.disk(n=33)
    rng = np.random.default_rng(404)
    reports = {dec: constants_report(grid, dec, spec2(0.0) if dec.d == 2 else spec3(2.0, 0.0))
               for dec in (PAIR, TRIPLE)}
    with Budget(60):
        accepted = in_E = 0
        while accepted < 500:
            dec = PAIR if accepted % 2 else TRIPLE
            rep = reports[dec]
            b = rng.uniform(-2 * rep.K, rep.K)
            spec = spec2(b) if dec.d == 2 else spec3(rng.uniform(0, 2), b)
            p = Problem(grid, spec, dec)
            u, t = project_to_n(p, bumps(grid, rng, p.d), return_t=True)
            cap = 8 * rep.Cbar / p.norms(u).sum()
            if cap < 1:
                continue
            # per-group enlargement beyond the Nehari scaling, then keep only fields in N~
            c = rng.uniform(1.0, cap, dec.m)
            c *= min(1.0, cap / np.max(c))
            v = u * np.sqrt(c)[dec.group_of][:, None, None]
            st = p.group_stats(v)
            if np.any(st.G > 0) or p.norms(v).sum() > 8 * rep.Cbar:
                continue
            accepted += 1
            in_E += bool(p.membership(v).in_E)
    assert in_E == accepted


def test_criterion_05_polarization_exactness():
    grid = Grid.disk(n=33)
    rng = np.random.default_rng(505)
    lp_ok = grad_ok = prod_ok = True
    worst_grad = 0.0
    with Budget(30):
        for _ in range(100):
            u, v = np.abs(rng.standard_normal((2, *grid.shape))) * grid.mask
            for H in all_half_spaces():
                chk = polarization_invariants(grid, u, v, H, grad_tol=1e-10, slack=1e-12)
                lp_ok &= chk.lp_exact
                grad_ok &= chk.gradient_ok
                prod_ok &= chk.product_ok
                worst_grad = max(worst_grad, chk.gradient_error)
    assert lp_ok and prod_ok
    assert grad_ok, f"Dirichlet integral changed by up to {worst_grad:.3e} (relative)"


@pytest.fixture(scope="module")
def desk_check():
    grid = Grid.disk(n=65)
    K = constants_report(grid, PAIR, spec2(0.0)).K
    out = {}
    start = time.perf_counter()
    for b in (-1.0, 0.0, 0.5 * K):
        p = Problem(grid, spec2(b), PAIR)
        rep = constants_report(grid, PAIR, p.spec)
        out[b] = (p, rep, minimize(p, SolverConfig(seed=0), rep))
    return K, out, time.perf_counter() - start


def test_criterion_06_existence_positivity(desk_check):
    _, runs, elapsed = desk_check
    assert elapsed < 300
    for b, (p, rep, res) in runs.items():
        assert res.converged and res.grad_residual < 1e-6, b
        audit = positivity_audit(res, p, rep)
        assert audit.ok, (b, audit)
        assert np.all(p.norms(res.field) > 0)
        assert res.energy <= 1.05 * rep.Cbar, b


def test_criterion_07_antipodal_symmetry(desk_check):
    K, runs, _ = desk_check
    _, _, competing = runs[-1.0]
    rep = antipodal_audit(competing, PAIR, 1, tol=1e-3, angle_tol=5.0, grid=Grid.disk(n=65))
    assert rep.ok and rep.joint_violation <= 1e-3
    assert rep.pairing_angle_deg is not None and rep.pairing_angle_deg <= 5.0
    _, _, weak = runs[0.5 * K]
    same = antipodal_audit(weak, PAIR, 2, tol=1e-3, grid=Grid.disk(n=65))
    assert same.ok and same.joint_violation <= 1e-3


def test_criterion_08_strong_cooperation():
    grid = Grid.disk(n=65)
    with Budget(600):
        K = constants_report(grid, TRIPLE, spec3(2.0, 0.0)).K
        p = Problem(grid, spec3(2.0, 0.5 * K), TRIPLE)
        rep = constants_report(grid, TRIPLE, p.spec)
        runs = multistart(p, SolverConfig(), seeds=[0, 1, 2, 3], report=rep)
    for res in runs:
        assert positivity_audit(res, p, rep).component_positive.all()
        assert positivity_audit(res, p, rep).ok
    energies = np.array([r.energy for r in runs])
    assert np.all(energies - energies.min() <= 1e-4 * energies.min())


def test_criterion_09_radial_oracle():
    dec = Decomposition((0, 1))
    with Budget(120):
        base = subsystem_level(CouplingSpec([[1.0]], [1.0]), dec, 0)
        scaled = subsystem_level(CouplingSpec([[3.0]], [1.0]), dec, 0)
        _, level = shooting_ground_state(1.0, 1.0, 2)
    assert base.level == pytest.approx(level, rel=5e-3)
    assert scaled.level == pytest.approx(base.level / 3.0, rel=5e-3)


def test_criterion_10_decay():
    with Budget(60):
        lv = subsystem_level(CouplingSpec([[1.0]], [1.0]), Decomposition((0, 1)), 0)
        rep = decay_audit(lv, 0.81)
    assert rep.passed and rep.slopes[0] <= -0.9 * 0.95


def test_criterion_11_splitting():
    spec = spec2(-0.5)
    radii = [4.0, 6.0, 8.0, 10.0, 12.0]
    with Budget(300):
        rows, levels = splitting_experiment(spec, PAIR, radii)
    J = np.array([r.J for r in rows])
    sum_lh = rows[0].sum_lh
    assert sum_lh == pytest.approx(sum(lv.level for lv in levels))
    assert np.all(np.diff(J) <= 0), J
    assert np.all(J >= 0.98 * sum_lh), (J, sum_lh)
    assert abs(J[-1] - sum_lh) <= 0.02 * sum_lh
    assert np.all(np.abs(rows[-1].t - 1.0) <= 1e-3), rows[-1].t


def _cfg(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_criterion_12_determinism(tmp_path, desk_check):
    K = desk_check[0]
    sweep_cfg = _cfg(tmp_path, "sweep.cfg", f"""domain.kind = disk2d
domain.n = 65
system.lambda = 1, 1
system.beta.row_1 = 1, 0
system.beta.row_2 = 0, 1
decomposition.a = 0, 1, 2
solver.seed = 0
task.sweep.beta_1_2 = -1, 0, {float(0.5 * K)!r}
""")
    b = float(0.5 * constants_report(Grid.disk(n=65), TRIPLE, spec3(2.0, 0.0)).K)
    coop_cfg = _cfg(tmp_path, "coop.cfg", f"""domain.kind = disk2d
domain.n = 65
system.lambda = 1, 1, 1
system.beta.row_1 = 1, 2, {b!r}
system.beta.row_2 = 2, 1, {b!r}
system.beta.row_3 = {b!r}, {b!r}, 1
decomposition.a = 0, 2, 3
""")
    for tag in ("a", "b"):
        assert main(["sweep", "--config", sweep_cfg, "--out", str(tmp_path / f"sweep_{tag}")]) == 0
        for seed in range(4):
            out = tmp_path / f"coop_{tag}_{seed}"
            assert main(["solve", "--config", coop_cfg, "--out", str(out), "--seed", str(seed)]) == 0
    first = (tmp_path / "sweep_a" / "sweep.csv").read_bytes()
    assert first == (tmp_path / "sweep_b" / "sweep.csv").read_bytes()
    assert first.count(b"\n") == 4
    for seed in range(4):
        a = (tmp_path / f"coop_a_{seed}" / "diagnostics.csv").read_bytes()
        assert a == (tmp_path / f"coop_b_{seed}" / "diagnostics.csv").read_bytes()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-m", "acceptance"]))
