"""Run configuration: a small sectioned ``key = value`` format.

Example::

    [potential]
    centre = -1 0 0.5
    centre = 1 0 0.5

    [geometry]
    epsilon = 0.05
    R = 0.4
    delta = 0.08

    [symbols]
    sequence = 0|1 0|1

    [solver]
    optimizer_tol = 2.5e-8

    [sweep]
    epsilons = 0.1 0.05 0.025 0.0125

Lines starting with ``#`` or ``;`` are comments.  ``centre`` may repeat; any
other repeated key is an error.  A partition symbol lists the indices of
one block on each side of ``|``, either as single digits (``01|2``) or
comma separated (``0,1|2``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .inner_arcs import Partition
from .potential import Centre, PotentialConfig


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("\n".join(errors))


@dataclass
class SolverSettings:
    integration_tol: float = 1e-9
    shoot_tol: float = 1e-10
    optimizer_tol: float = 2.5e-8
    c1_tolerance: float = 1e-5
    max_iter: int = 60


@dataclass
class SweepSettings:
    epsilons: list = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    outer_pairs: int = 16
    inner_pairs: int = 4
    n_values: list = field(default_factory=lambda: [1, 2, 3])
    interiority_epsilons: list | None = None
    gradient_configs: int = 20


@dataclass
class RunConfig:
    centres: list
    epsilon: float = 0.05
    R: float = 0.4
    delta: float = 0.08
    symbols: list = field(default_factory=list)
    solver: SolverSettings = field(default_factory=SolverSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    initial_phase: float = 0.3
    chord_fraction: float = 0.5
    output_dir: str = "out"
    seed: int = 0

    def potential(self, epsilon: float | None = None) -> PotentialConfig:
        return PotentialConfig(tuple(self.centres), self.epsilon if epsilon is None else epsilon,
                               self.R, self.delta)

    def partitions(self) -> list[Partition]:
        return [parse_symbol(s, len(self.centres)) for s in self.symbols]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["centres"] = [[c.base_position[0], c.base_position[1], c.mass] for c in self.centres]
        return d


def parse_symbol(text: str, n_centres: int) -> Partition:
    if text.count("|") != 1:
        raise ValueError(f"partition symbol {text!r} needs exactly one '|'")
    left, right = text.split("|")

    def block(s):
        s = s.strip()
        parts = s.split(",") if "," in s else list(s)
        return {int(p) for p in parts if p.strip()}

    a, b = block(left), block(right)
    if not a or not b:
        raise ValueError(f"partition symbol {text!r} has an empty block")
    if a & b or a | b != set(range(n_centres)):
        raise ValueError(f"partition symbol {text!r} must split centres 0..{n_centres - 1}")
    return Partition(frozenset(a), n_centres)


_FLOAT_KEYS = {
    ("geometry", "epsilon"): "epsilon", ("geometry", "R"): "R", ("geometry", "delta"): "delta",
    ("potential", "epsilon"): "epsilon",
    ("glue", "initial_phase"): "initial_phase", ("glue", "chord_fraction"): "chord_fraction",
}
_SOLVER_KEYS = {"integration_tol": float, "shoot_tol": float, "optimizer_tol": float,
                "c1_tolerance": float, "max_iter": int}
_SWEEP_KEYS = {"epsilons": "floats", "outer_pairs": int, "inner_pairs": int, "n_values": "ints",
               "interiority_epsilons": "floats", "gradient_configs": int}


def parse_config(text: str) -> RunConfig:
    """Parse and validate; every problem found is reported in one ``ConfigError``."""
    errors: list[str] = []
    section = None
    seen: set = set()
    centres = []
    values: dict = {}
    solver = SolverSettings()
    sweep = SweepSettings()
    symbols_text = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: malformed section header {raw.strip()!r}")
                continue
            section = line[1:-1].strip()
            if section not in {"potential", "geometry", "symbols", "solver", "sweep", "glue", "output", "run"}:
                errors.append(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            errors.append(f"line {lineno}, column 1: expected 'key = value'")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if section is None:
            errors.append(f"line {lineno}: key {key!r} outside any section")
            continue
        if key != "centre":
            if (section, key) in seen:
                errors.append(f"line {lineno}: duplicate key {key!r} in [{section}]")
                continue
            seen.add((section, key))
        try:
            if section == "potential" and key == "centre":
                parts = val.split()
                if len(parts) != 3:
                    raise ValueError("centre needs 'x y mass'")
                x, y, m = map(float, parts)
                centres.append(Centre((x, y), m))
            elif (section, key) in _FLOAT_KEYS:
                values[_FLOAT_KEYS[(section, key)]] = float(val)
            elif section == "symbols" and key == "sequence":
                symbols_text = val.split()
            elif section == "solver" and key in _SOLVER_KEYS:
                setattr(solver, key, _SOLVER_KEYS[key](val))
            elif section == "sweep" and key in _SWEEP_KEYS:
                kind = _SWEEP_KEYS[key]
                if kind == "floats":
                    setattr(sweep, key, [float(v) for v in val.split()])
                elif kind == "ints":
                    setattr(sweep, key, [int(v) for v in val.split()])
                else:
                    setattr(sweep, key, kind(val))
            elif section == "output" and key == "dir":
                values["output_dir"] = val
            elif section == "run" and key == "seed":
                values["seed"] = int(val)
            else:
                errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for {key!r}: {exc}")
    if not centres:
        errors.append("[potential]: at least one 'centre = x y mass' line is required")
    cfg = RunConfig(centres, **values, solver=solver, sweep=sweep)
    if symbols_text is None:
        cfg.symbols = ["0|" + "".join(str(i) for i in range(1, len(centres)))] * 2 if len(centres) > 1 else []
    else:
        cfg.symbols = symbols_text
    errors += validate(cfg, parsed_ok=not errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: RunConfig, parsed_ok: bool = True) -> list[str]:
    errors = []
    if cfg.centres:
        errors += PotentialConfig.validation_errors(_Shim(cfg))
    for name in ("integration_tol", "shoot_tol", "optimizer_tol", "c1_tolerance"):
        if not getattr(cfg.solver, name) > 0:
            errors.append(f"[solver] {name} must be > 0")
    if cfg.solver.max_iter < 1:
        errors.append("[solver] max_iter must be >= 1")
    if not cfg.sweep.epsilons:
        errors.append("[sweep] epsilons must be non-empty")
    elif any(e < 0 or not math.isfinite(e) for e in cfg.sweep.epsilons):
        errors.append("[sweep] epsilons must be finite and >= 0")
    if not cfg.sweep.n_values or any(n < 1 for n in cfg.sweep.n_values):
        errors.append("[sweep] n_values must be non-empty positive integers")
    if cfg.sweep.outer_pairs < 16:
        errors.append("[sweep] outer_pairs must be >= 16")
    if cfg.sweep.inner_pairs < 1:
        errors.append("[sweep] inner_pairs must be >= 1")
    if cfg.sweep.gradient_configs < 1:
        errors.append("[sweep] gradient_configs must be >= 1")
    if not 0 < cfg.chord_fraction <= 1:
        errors.append("[glue] chord_fraction must be in (0, 1]")
    if len(cfg.centres) > 1:
        if not cfg.symbols:
            errors.append("[symbols] sequence must contain at least one symbol")
        for s in cfg.symbols:
            try:
                parse_symbol(s, len(cfg.centres))
            except ValueError as exc:
                errors.append(f"[symbols] {exc}")
    elif cfg.centres:
        errors.append("[potential] at least two centres are needed for a partition symbol")
    return errors


class _Shim:
    """Adapter so PotentialConfig's checks run without constructing it."""

    def __init__(self, cfg: RunConfig):
        self.centres = tuple(cfg.centres)
        self.epsilon = cfg.epsilon
        self.R = cfg.R
        self.delta = cfg.delta


DEFAULT_CONFIG = """\
[potential]
centre = -1 0 0.5
centre = 1 0 0.5

[geometry]
epsilon = 0.05
R = 0.4
delta = 0.08

[symbols]
sequence = 0|1 0|1

[glue]
initial_phase = 1.3
"""
