"""Command-line entry point: ``nehari-lab {solve,sweep,constants,radial}``.

Exit codes: 0 success, 1 configuration or input error, 2 non-convergence,
3 the coupling regime does not satisfy the hypotheses the command needs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import __version__
from .config import load_config
from .coupling import constants_report, validate_regime
from .dump import columns_text, csv_text, key_value_text, write_atomic, write_grid_dump
from .energy import Problem
from .errors import ConfigError, NehariLabError, NonConvergenceError, PreconditionError
from .radial import decay_audit, default_radial_grid, splitting_experiment, subsystem_level
from .solver import minimize, positivity_audit, sweep
from .symmetry import antipodal_audit, default_macro_split

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_REGIME = 0, 1, 2, 3

log = logging.getLogger("nehari_lab")


def _fail(msg, code):
    print(f"nehari-lab: {msg}", file=sys.stderr)
    return code


def _setup(args):
    cfg = load_config(args.config)
    grid = cfg.grid()
    spec = cfg.spec()
    dec = cfg.decomposition()
    if dec.d != spec.d:
        raise ConfigError(f"decomposition ends at {dec.d} but the system has d={spec.d}")
    spec.check_grid(grid)
    return cfg, grid, spec, dec


def _group_rows(stats):
    row = {}
    m = stats.group_norms.size
    for h in range(m):
        row[f"groupNorm_{h + 1}"] = stats.group_norms[h]
        row[f"G_{h + 1}"] = stats.G[h]
        for k in range(m):
            row[f"MB_{h + 1}_{k + 1}"] = stats.MB[h, k]
    return row


def _slices(grid, u):
    """Plot-ready cuts through the field."""
    if grid.is_radial:
        r = grid.coords[0]
        return {"profile.dat": columns_text(["r"] + [f"u{i + 1}" for i in range(u.shape[0])],
                                            [r] + list(u))}
    X, Y = grid.coords
    ny, nx = grid.shape
    names = [f"u{i + 1}" for i in range(u.shape[0])]
    return {
        "slice_x.dat": columns_text(["x"] + names, [X[ny // 2]] + [c[ny // 2] for c in u]),
        "slice_y.dat": columns_text(["y"] + names, [Y[:, nx // 2]] + [c[:, nx // 2] for c in u]),
    }


# ----------------------------------------------------------------------
# commands


def cmd_solve(args):
    cfg, grid, spec, dec = _setup(args)
    problem = Problem(grid, spec, dec)
    report = constants_report(grid, dec, spec)
    verdict = validate_regime(dec, spec, report, "existence") if report.K is not None else None
    status = EXIT_OK
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            res = minimize(problem, cfg.solver_config(args.seed), report=report)
        except NonConvergenceError as exc:
            if exc.result is None:
                return _fail(str(exc), EXIT_NONCONVERGENCE)
            res, status = exc.result, EXIT_NONCONVERGENCE
            print(f"nehari-lab: {exc}", file=sys.stderr)
    audit = positivity_audit(res, problem, report)
    sym = None
    if grid.is_rotational:
        split = cfg.task.get("audit_split", default_macro_split(spec, dec))
        sym = antipodal_audit(res, dec, split, tol=cfg.task.get("audit_tol", 1e-3),
                              angle_tol=cfg.task.get("angle_tol", 5.0), grid=grid)

    summary = {"command": "solve", "status": status}
    summary.update(res.summary())
    summary["regime.existence"] = None if verdict is None else verdict.ok
    summary["regime.failing"] = "" if verdict is None else ";".join(verdict.failing)
    for i, ok in enumerate(audit.component_ok, start=1):
        summary[f"positivity_{i}"] = bool(ok)
    for h, mass in enumerate(audit.group_mass, start=1):
        summary[f"groupMass_{h}"] = mass
    summary["positivity"] = audit.ok
    if sym is not None:
        summary.update({f"symmetry.{k}": v for k, v in sym.as_dict().items()})
    summary.update({f"constants.{k}": v for k, v in report.as_dict().items()})

    os.makedirs(args.out, exist_ok=True)
    write_atomic(os.path.join(args.out, "summary.txt"), key_value_text(summary))
    write_grid_dump(os.path.join(args.out, "field.dump"), grid, res.field)
    row = {"row": 0, "energy": res.energy, "gradResidual": res.grad_residual,
           "iterations": res.iterations, "semiTrivial": res.semi_trivial,
           "regimeVerdict": None if verdict is None else verdict.ok}
    row.update({f"L4_{i + 1}": v for i, v in enumerate(res.component_l4)})
    row.update(_group_rows(problem.group_stats(res.field)))
    header = ["row", "energy", "gradResidual", "iterations", "semiTrivial"]
    header += [f"L4_{i + 1}" for i in range(spec.d)] + ["regimeVerdict"]
    header += [k for k in row if k.startswith(("groupNorm_", "G_", "MB_"))]
    write_atomic(os.path.join(args.out, "diagnostics.csv"), csv_text(header, [row]))
    trace = np.asarray(res.energy_trace)
    write_atomic(os.path.join(args.out, "trace.dat"),
                 columns_text(["iteration", "energy"], [np.arange(trace.size), trace]))
    for name, text in _slices(grid, res.field).items():
        write_atomic(os.path.join(args.out, name), text)
    return status


def cmd_sweep(args):
    cfg, grid, spec, dec = _setup(args)
    solver_cfg = cfg.solver_config(args.seed)
    split = cfg.task.get("audit_split", "auto") if grid.is_rotational else None
    rows = sweep(grid, dec, spec, cfg.sweep, solver_cfg, audit_split=split)
    names = list(cfg.sweep)
    header = ["row"] + names + ["energy", "gradResidual", "iterations", "semiTrivial"]
    header += [f"L4_{i + 1}" for i in range(spec.d)] + ["regimeVerdict", "K", "status"]
    if split is not None:
        header += ["symAxis", "symViolation", "symmetryOk"]
    os.makedirs(args.out, exist_ok=True)
    table, manifest = [], []
    for r in rows:
        entry = {"row": r.row, **r.params}
        status = "ok" if r.error is None else r.error.split(":", 1)[0]
        entry["status"] = status
        entry["K"] = None if r.report is None else r.report.K
        entry["regimeVerdict"] = None if r.verdict is None else r.verdict.ok
        files = []
        if r.result is not None:
            entry.update({"energy": r.result.energy, "gradResidual": r.result.grad_residual,
                          "iterations": r.result.iterations, "semiTrivial": r.result.semi_trivial})
            entry.update({f"L4_{i + 1}": v for i, v in enumerate(r.result.component_l4)})
            name = f"row_{r.row:04d}.dump"
            write_grid_dump(os.path.join(args.out, name), grid, r.result.field)
            files.append(name)
        if r.symmetry is not None:
            entry.update(r.symmetry.as_dict())
        table.append(entry)
        manifest.append({"row": r.row, "params": r.params, "status": status, "error": r.error,
                         "files": files})
    write_atomic(os.path.join(args.out, "sweep.csv"), csv_text(header, table))
    write_atomic(os.path.join(args.out, "manifest.json"),
                 json.dumps({"csv": "sweep.csv", "rows": manifest}, indent=2) + "\n")
    return EXIT_OK


def cmd_constants(args):
    cfg, grid, spec, dec = _setup(args)
    report = constants_report(grid, dec, spec)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        write_atomic(os.path.join(args.out, "constants.txt"), text)
    return EXIT_OK


def cmd_radial(args):
    cfg = load_config(args.config)
    spec = cfg.spec()
    dec = cfg.decomposition()
    if dec.d != spec.d:
        raise ConfigError(f"decomposition ends at {dec.d} but the system has d={spec.d}")
    if cfg.domain.get("kind", "radial") != "radial":
        raise ConfigError("the radial command needs domain.kind = radial (or no domain block)")
    lam_min = float(np.min(spec.lam))
    if lam_min <= 0:
        raise ConfigError(f"norm not equivalent: lambda must be > 0 on R^N, got min {lam_min}")
    if dec.m >= 2:
        verdict = validate_regime(dec, spec, None, "nonexistence_rn")
        if not verdict.ok:
            return _fail("regime guard: non-existence hypotheses fail (" + "; ".join(verdict.failing)
                         + "); the splitting experiment is meaningless here", EXIT_REGIME)
    dim = cfg.task.get("dim", cfg.domain.get("dim", 2))
    r_max = cfg.task.get("r_max", cfg.domain.get("r_max", 12.0 / np.sqrt(lam_min)))
    if "radial_n" in cfg.task or "n" in cfg.domain:
        from .grid import Grid

        rgrid = Grid.radial(r_max=r_max, n=cfg.task.get("radial_n", cfg.domain.get("n")), dim=dim)
    else:
        rgrid = default_radial_grid(lam_min, dim=dim, factor=r_max * np.sqrt(lam_min))
    solver_cfg = cfg.solver_config(args.seed)
    try:
        levels = [subsystem_level(spec, dec, h, rgrid, solver_cfg) for h in range(dec.m)]
    except PreconditionError as exc:
        return _fail(f"regime guard: {exc}", EXIT_REGIME)
    beta_fraction = cfg.task.get("beta_fraction", 0.81)
    os.makedirs(args.out, exist_ok=True)
    lv_items = {"dim": dim, "r_max": r_max, "n": rgrid.n}
    decay_items = {"beta_fraction": beta_fraction}
    all_pass = True
    for lv in levels:
        lv_items[f"l_{lv.h + 1}"] = lv.level
        lv_items[f"decayRate_{lv.h + 1}"] = lv.decay_rate
        audit = decay_audit(lv, beta_fraction)
        decay_items[f"required_{lv.h + 1}"] = audit.required
        for i, slope in zip(lv.components, audit.slopes):
            decay_items[f"slope_{i + 1}"] = slope
        decay_items[f"passed_{lv.h + 1}"] = audit.passed
        all_pass &= audit.passed
    lv_items["sumLh"] = float(sum(lv.level for lv in levels))
    decay_items["passed"] = all_pass
    write_atomic(os.path.join(args.out, "levels.txt"), key_value_text(lv_items))
    write_atomic(os.path.join(args.out, "decay.txt"), key_value_text(decay_items))
    r = rgrid.coords[0]
    cols, names = [r], ["r"]
    for lv in levels:
        for i, comp in zip(lv.components, lv.profile):
            cols.append(comp)
            names.append(f"v{i + 1}")
    write_atomic(os.path.join(args.out, "profiles.dat"), columns_text(names, cols))
    if dec.m >= 2:
        if dim != 2:
            return _fail("the splitting experiment is only available for dim = 2", EXIT_CONFIG)
        radii = cfg.task.get("radii") or [x / np.sqrt(lam_min) for x in (4, 6, 8, 10, 12)]
        rows, _ = splitting_experiment(spec, dec, radii, levels=levels, h=cfg.task.get("planar_h", 0.1))
        header = ["R", "J", "sumLh", "offDiagMass"] + [f"t_{h + 1}" for h in range(dec.m)]
        table = []
        for row in rows:
            entry = {"R": row.R, "J": row.J, "sumLh": row.sum_lh, "offDiagMass": row.off_diag_mass}
            entry.update({f"t_{h + 1}": t for h, t in enumerate(row.t)})
            table.append(entry)
        write_atomic(os.path.join(args.out, "splitting.csv"), csv_text(header, table))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "constants": cmd_constants, "radial": cmd_radial}


def build_parser():
    parser = argparse.ArgumentParser(prog="nehari-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", required=name != "constants", metavar="DIR")
        p.add_argument("--seed", type=int, default=None, metavar="N", help="override solver.seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(f"config error: {exc}", EXIT_CONFIG)
    except NonConvergenceError as exc:
        return _fail(str(exc), EXIT_NONCONVERGENCE)
    except (NehariLabError, ValueError) as exc:
        return _fail(f"error: {exc}", EXIT_CONFIG)
    except OSError as exc:
        return _fail(f"I/O error: {exc}", EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
