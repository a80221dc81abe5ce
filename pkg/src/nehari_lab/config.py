"""Line-oriented ``section.key = value`` run configuration.

Example::

    domain.kind = disk2d
    domain.radius = 1.0
    domain.n = 65
    system.lambda = 1, 1
    system.beta.row_1 = 1, -1
    system.beta.row_2 = -1, 1
    decomposition.a = 0, 1, 2
    solver.seed = 3
    task.sweep.beta_1_2 = -1, 0, 0.005
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingSpec, Decomposition
from .errors import ConfigError
from .grid import Grid
from .solver import SolverConfig

DOMAIN_KEYS = {
    "rectangle2d": {"lx": float, "ly": float, "n": int, "centered": "bool"},
    "disk2d": {"radius": float, "n": int},
    "annulus2d": {"r_in": float, "r_out": float, "n": int},
    "radial": {"r_max": float, "n": int, "dim": int},
}
SOLVER_KEYS = {"max_iter": int, "tol_grad": float, "tol_energy": float, "step": "step",
               "precondition": "bool", "seed": int, "init": str, "method": str, "directions": "floats"}
TASK_KEYS = {"theorem": str, "alpha": float, "audit_split": int, "audit_tol": float,
             "angle_tol": float, "beta_fraction": float, "radii": "floats", "dim": int,
             "r_max": float, "radial_n": int, "planar_h": float}
SWEEP_KEY = re.compile(r"^sweep\.(beta_\d+_\d+|lambda_\d+)$")
ROW_KEY = re.compile(r"^beta\.row_(\d+)$")


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    text = text.strip()
    if not text:
        return []
    return [float(x) for x in text.split(",")]


def _convert(kind, text):
    if kind == "bool":
        return _bool(text)
    if kind == "floats":
        return _floats(text)
    if kind == "step":
        return "auto" if text.strip() == "auto" else float(text)
    return kind(text.strip())


@dataclass
class RunConfig:
    domain: dict = field(default_factory=dict)
    lam: list | None = None
    beta_rows: dict = field(default_factory=dict)
    d: int | None = None
    a: list | None = None
    solver: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    path: str = ""

    # -- derived objects -----------------------------------------------

    def grid(self):
        kind = self.domain.get("kind")
        if kind is None:
            raise ConfigError("domain.kind is required")
        params = {k: v for k, v in self.domain.items() if k != "kind"}
        try:
            if kind == "rectangle2d":
                return Grid.rectangle(**params)
            if kind == "disk2d":
                return Grid.disk(**params)
            if kind == "annulus2d":
                return Grid.annulus(**params)
            if kind == "radial":
                return Grid.radial(**params)
        except TypeError as exc:
            raise ConfigError(f"domain: {exc}") from None
        raise ConfigError(f"domain.kind must be one of {sorted(DOMAIN_KEYS)}, got {kind!r}")

    def spec(self):
        d = self.dimension
        beta = np.array([self.beta_rows[i] for i in range(1, d + 1)])
        try:
            return CouplingSpec(beta, self.lam)
        except ValueError as exc:
            raise ConfigError(f"system: {exc}") from None

    @property
    def dimension(self):
        return len(self.lam)

    def decomposition(self):
        if self.a is None:
            return Decomposition((0, self.dimension))
        try:
            return Decomposition([int(x) for x in self.a])
        except ValueError as exc:
            raise ConfigError(f"decomposition: {exc}") from None

    def solver_config(self, seed=None):
        opts = dict(self.solver)
        if "directions" in opts:
            opts["directions"] = tuple(opts["directions"])
        if seed is not None:
            opts["seed"] = seed
        try:
            return SolverConfig(**opts)
        except ValueError as exc:
            raise ConfigError(f"solver: {exc}") from None


def parse_config(text, path="<string>"):
    """Parse configuration text; unknown keys and inconsistent sizes raise :class:`ConfigError`."""
    cfg = RunConfig(path=str(path))
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        section, _, rest = key.partition(".")
        try:
            _assign(cfg, section, rest, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    _validate(cfg, path)
    return cfg


def _assign(cfg, section, key, value):
    if section == "domain":
        if key == "kind":
            if value not in DOMAIN_KEYS:
                raise ConfigError(f"unknown domain kind {value!r}")
            cfg.domain["kind"] = value
            return
        # kind may come later in the file, so check against all kinds now
        kinds = [k for k, keys in DOMAIN_KEYS.items() if key in keys]
        if not kinds:
            raise ConfigError(f"unknown key domain.{key}")
        cfg.domain[key] = _convert(DOMAIN_KEYS[kinds[0]][key], value)
    elif section == "system":
        if key == "lambda":
            cfg.lam = _floats(value)
        elif key == "d":
            cfg.d = int(value)
        elif ROW_KEY.match(key):
            cfg.beta_rows[int(ROW_KEY.match(key).group(1))] = _floats(value)
        else:
            raise ConfigError(f"unknown key system.{key}")
    elif section == "decomposition":
        if key != "a":
            raise ConfigError(f"unknown key decomposition.{key}")
        cfg.a = [int(float(x)) for x in value.split(",")]
    elif section == "solver":
        if key not in SOLVER_KEYS:
            raise ConfigError(f"unknown key solver.{key}")
        cfg.solver[key] = _convert(SOLVER_KEYS[key], value)
    elif section == "task":
        if SWEEP_KEY.match(key):
            cfg.sweep[key[len("sweep."):]] = _floats(value)
        elif key in TASK_KEYS:
            cfg.task[key] = _convert(TASK_KEYS[key], value)
        else:
            raise ConfigError(f"unknown key task.{key}")
    else:
        raise ConfigError(f"unknown section {section!r}")


def _validate(cfg, path):
    kind = cfg.domain.get("kind")
    if kind is None and cfg.domain:
        raise ConfigError(f"{path}: domain.kind is required with other domain keys")
    extra = set(cfg.domain) - {"kind"} - set(DOMAIN_KEYS.get(kind, ()))
    if kind is not None and extra:
        raise ConfigError(f"{path}: keys {sorted(extra)} do not apply to domain.kind={kind}")
    if not cfg.lam:
        raise ConfigError(f"{path}: system.lambda is required")
    d = len(cfg.lam)
    if cfg.d is not None and cfg.d != d:
        raise ConfigError(f"{path}: system.d={cfg.d} but lambda has {d} entries")
    if sorted(cfg.beta_rows) != list(range(1, d + 1)):
        raise ConfigError(f"{path}: need system.beta.row_1 .. row_{d}")
    for i, row in cfg.beta_rows.items():
        if len(row) != d:
            raise ConfigError(f"{path}: system.beta.row_{i} has {len(row)} entries, expected {d}")
    if cfg.a is not None and (cfg.a[0] != 0 or cfg.a[-1] != d):
        raise ConfigError(f"{path}: decomposition.a must run from 0 to d={d}")
    for name in cfg.sweep:
        idx = [int(x) for x in name.split("_")[1:]]
        if any(not 1 <= i <= d for i in idx):
            raise ConfigError(f"{path}: sweep parameter {name} is out of range for d={d}")


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path)
