"""Command line entry point: ``ncglue solve | sweeps | grad-check | export``.

Exit codes: 0 success, 1 bad config or usage, 2 optimizer not converged (or
C1 certificate failed at a converged interior point), 3 minimizer on the
chord constraint, 4 solver failure, 5 sweep with failed cells, 6 gradient
check failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import itertools
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_CONFIG, ConfigError, RunConfig, parse_config, validate
from .glue import (JunctionVector, LegSolver, build_trajectory, check_C1, eval_G, grad_G, initial_junctions,
                   junction_context, minimize_F)
from .inner_arcs import Partition, inner_angular_sweep
from .outer_arcs import c1_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_BOUNDARY, EXIT_SOLVER = 0, 1, 2, 3, 4
EXIT_SWEEP_PARTIAL, EXIT_GRADIENT = 5, 6
FD_STEPS = (1e-4, 1e-5, 1e-6)
GRADIENT_RTOL = 1e-4


# --------------------------------------------------------------------------- output helpers

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def envelope(cfg: RunConfig, command: str, payload: dict, exit_code: int) -> dict:
    return {
        "command": command,
        "config": _clean(cfg.to_dict()),
        "exit_code": exit_code,
        "payload": _clean(payload),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": f"ncglue {__version__}",
    }


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path: Path, obj: dict):
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- solve

def _leg_solver(cfg: RunConfig, pc):
    return LegSolver(pc, cfg.solver.shoot_tol, cfg.solver.integration_tol)


def solve_sequence(cfg: RunConfig, partitions, epsilon=None):
    """Minimize F for one partition sequence; returns ``(exit_code, payload, jv, legs)``."""
    pc = cfg.potential(epsilon)
    jv0 = initial_junctions(partitions, pc, cfg.initial_phase, cfg.chord_fraction)
    payload = {"epsilon": pc.epsilon, "partitions": [p.label() for p in partitions],
               "initial_angles": list(jv0.angles)}
    solver = _leg_solver(cfg, pc)
    try:
        jv, report = minimize_F(jv0, pc, tol=cfg.solver.optimizer_tol, max_iter=cfg.solver.max_iter,
                                solver=solver)
    except Exception as exc:
        payload["error"] = f"{type(exc).__name__}: {exc}"
        return EXIT_SOLVER, payload, None, None
    payload["junction_angles"] = list(jv.angles)
    # fresh solver: the written legs depend only on the final angles, as in ``export``
    try:
        legs = _leg_solver(cfg, pc).all(jv)
    except Exception as exc:
        payload["error"] = f"legs not reproducible from the final angles: {type(exc).__name__}: {exc}"
        return EXIT_SOLVER, payload, None, None
    payload["margins"] = [j.margin for j in report.junctions]
    if report.converged and not report.constraint_active:
        cert = check_C1(jv, pc, cfg.solver.c1_tolerance, legs=legs, probe_uniqueness=True)
        report.junctions = cert.junctions
        report.c1_verdict = cert.c1_verdict
        report.uniqueness_deviation = cert.uniqueness_deviation
        report.uniqueness_ok = cert.uniqueness_ok
        if cert.message:
            report.message = cert.message
    payload["report"] = report.to_dict()
    if not report.converged:
        code = EXIT_NOT_CONVERGED
    elif report.constraint_active:
        code = EXIT_BOUNDARY
    elif report.c1_verdict and report.uniqueness_ok:
        code = EXIT_OK
    else:
        code = EXIT_NOT_CONVERGED
    return code, payload, jv, legs


def run_solve(cfg: RunConfig, out_dir) -> tuple[int, dict]:
    out = Path(out_dir)
    code, payload, jv, legs = solve_sequence(cfg, cfg.partitions())
    if jv is not None:
        traj = build_trajectory(jv, cfg.potential(), legs)
        _write_atomic(out / "trajectory.csv", traj.to_csv())
        payload["trajectory"] = {"file": "trajectory.csv", "period": traj.period,
                                 "closure_error": traj.closure_error,
                                 "max_velocity_jump": traj.max_velocity_jump}
    env = envelope(cfg, "solve", payload, code)
    write_json(out / "report.json", env)
    return code, env


# --------------------------------------------------------------------------- sweeps

def partition_sequences(n_centres: int, n: int):
    return [list(s) for s in itertools.product(Partition.all(n_centres), repeat=n)]


def classify(code: int) -> str:
    return {EXIT_OK: "interior", EXIT_BOUNDARY: "boundary", EXIT_NOT_CONVERGED: "not_converged"}.get(code, "failed")


def empirical_epsilon_bar(cells: list[dict]) -> float | None:
    """Largest grid epsilon at and below which every cell converged to an interior minimizer."""
    eps = sorted({c["epsilon"] for c in cells})
    best = None
    for e in eps:
        if all(c["status"] == "interior" for c in cells if c["epsilon"] == e):
            best = e
        else:
            break
    return best


def interiority_sweep(cfg: RunConfig, epsilons, n_values, cell_dir: Path | None = None) -> list[dict]:
    cells = []
    for eps in epsilons:
        for n in n_values:
            for seq in partition_sequences(len(cfg.centres), n):
                code, payload, _, _ = solve_sequence(cfg, seq, eps)
                rep = payload.get("report", {})
                cell = {"epsilon": eps, "n": n, "sequence": " ".join(p.label() for p in seq),
                        "status": classify(code), "exit_code": code,
                        "min_margin": min(payload["margins"]) if "margins" in payload else None,
                        "grad_norm": rep.get("grad_norm"), "error": payload.get("error")}
                cells.append(cell)
                if cell_dir is not None:
                    name = f"eps{eps:g}_n{n}_{cell['sequence'].replace('|', '-').replace(' ', '_')}.json"
                    write_json(cell_dir / name, _clean(cell))
    return cells


def run_sweeps(cfg: RunConfig, out_dir) -> tuple[int, dict]:
    out = Path(out_dir)
    pc = cfg.potential()
    sw = cfg.sweep
    eps_grid = sorted(sw.epsilons, reverse=True)
    c1 = c1_sweep(cfg.delta, eps_grid, sw.outer_pairs, pc, cfg.solver.shoot_tol)
    inner_eps = [e for e in eps_grid if e > 0]
    inner = inner_angular_sweep(inner_eps, sw.inner_pairs, None, pc)
    c1_min = min((r.min_abs_theta_dot for r in c1.rows if r.epsilon > 0 and r.n_ok), default=math.nan)
    eps5 = inner.epsilon5(0.5 * c1_min)
    if sw.interiority_epsilons is not None:
        int_eps = sorted(sw.interiority_epsilons, reverse=True)
    elif eps5 is not None:
        int_eps = [e for e in inner_eps if e <= eps5]
    else:
        int_eps = [min(inner_eps)]
    cells = interiority_sweep(cfg, int_eps, sw.n_values, out / "cells")
    eps_bar = empirical_epsilon_bar(cells)
    failed = [c for c in cells if c["status"] == "failed"]
    partial = bool(failed) or any(r.errors for r in c1.rows) or any(r.errors for r in inner.rows)
    code = EXIT_SWEEP_PARTIAL if partial else EXIT_OK
    payload = {"c1": c1.to_dict(), "C1_min": c1_min, "inner": inner.to_dict(),
               "epsilon5": eps5, "interiority_epsilons": int_eps, "interiority": cells,
               "epsilon_bar": eps_bar}
    env = envelope(cfg, "sweeps", payload, code)
    write_json(out / "sweeps.json", env)
    return code, env


# --------------------------------------------------------------------------- gradient check

def _random_junctions(rng, pc, partitions_all):
    beta = pc.chord_angle
    a0 = rng.uniform(0.0, 2 * math.pi)
    a2 = a0 + math.pi + rng.uniform(-0.4, 0.4)
    a1 = a0 + rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 0.8) * beta
    a3 = a2 + rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 0.8) * beta
    parts = [partitions_all[rng.integers(len(partitions_all))] for _ in range(2)]
    return JunctionVector([a0, a1, a2, a3], parts)


def gradient_check(cfg: RunConfig, n_configs: int | None = None, max_attempts: int = 400):
    """Rows comparing ``grad_G`` with central differences of ``eval_G``; parities alternate."""
    pc = cfg.potential()
    rng = np.random.default_rng(cfg.seed)
    parts = Partition.all(len(cfg.centres))
    n_configs = n_configs or cfg.sweep.gradient_configs
    rows, skipped = [], []
    attempts = 0
    while len(rows) < n_configs:
        if attempts >= max_attempts:
            raise RuntimeError(f"only {len(rows)} usable configurations in {max_attempts} attempts")
        attempts += 1
        jv = _random_junctions(rng, pc, parts)
        k = int(rng.integers(2)) * 2 + (len(rows) % 2)
        try:
            ctx = junction_context(k, jv, pc, _leg_solver(cfg, pc))
        except Exception as exc:  # collision or unsolvable leg: draw again
            skipped.append(f"{type(exc).__name__}: {exc}")
            continue
        theta = jv.angles[k]
        analytic = grad_G(k, theta, jv, pc, ctx)
        fds, errs = {}, {}
        for h in FD_STEPS:
            fd = (eval_G(k, theta + h, jv, pc, ctx) - eval_G(k, theta - h, jv, pc, ctx)) / (2 * h)
            fds[f"{h:g}"] = fd
            errs[f"{h:g}"] = abs(analytic - fd) / (1 + abs(fd))
        rows.append({"config": len(rows), "junction": k, "parity": "odd" if k % 2 else "even",
                     "angles": list(jv.angles), "partitions": [p.label() for p in jv.partitions],
                     "analytic": analytic, "fd": fds, "rel_error": errs,
                     "max_rel_error": max(errs.values())})
    return rows, skipped


def run_gradient_check(cfg: RunConfig, out_dir) -> tuple[int, dict]:
    out = Path(out_dir)
    try:
        rows, skipped = gradient_check(cfg)
    except Exception as exc:
        payload = {"error": f"{type(exc).__name__}: {exc}"}
        env = envelope(cfg, "grad-check", payload, EXIT_GRADIENT)
        write_json(out / "gradient_check.json", env)
        return EXIT_GRADIENT, env
    bad = [r for r in rows if not r["max_rel_error"] <= GRADIENT_RTOL]
    code = EXIT_GRADIENT if bad else EXIT_OK
    payload = {"rows": rows, "tolerance": GRADIENT_RTOL, "steps": list(FD_STEPS),
               "skipped_draws": skipped, "failures": bad}
    env = envelope(cfg, "grad-check", payload, code)
    write_json(out / "gradient_check.json", env)
    return code, env


# --------------------------------------------------------------------------- export

def run_export(cfg: RunConfig, out_dir, report_path=None) -> tuple[int, dict]:
    """Rebuild the trajectory from the junction angles stored in a solve report."""
    out = Path(out_dir)
    src = Path(report_path) if report_path else out / "report.json"
    try:
        saved = json.loads(src.read_text())
        angles = saved["payload"]["junction_angles"]
    except (OSError, KeyError, ValueError) as exc:
        print(f"export: cannot read junction angles from {src}: {exc}", file=sys.stderr)
        return EXIT_SOLVER, {}
    pc = cfg.potential()
    jv = JunctionVector(angles, cfg.partitions())
    try:
        traj = build_trajectory(jv, pc, _leg_solver(cfg, pc).all(jv))
    except Exception as exc:
        print(f"export: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER, {}
    _write_atomic(out / "trajectory.csv", traj.to_csv())
    payload = {"source": str(src), "file": "trajectory.csv", "rows": sum(len(a.times) for a in traj.arcs),
               "arcs": [{"kind": a.kind, "duration": a.duration, "samples": len(a.times)} for a in traj.arcs],
               "period": traj.period, "closure_error": traj.closure_error,
               "max_velocity_jump": traj.max_velocity_jump}
    env = envelope(cfg, "export", payload, EXIT_OK)
    write_json(out / "manifest.json", env)
    return EXIT_OK, env


# --------------------------------------------------------------------------- argument handling

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def apply_overrides(cfg: RunConfig, overrides) -> list[str]:
    errors = []
    for item in overrides or []:
        if "=" not in item:
            errors.append(f"--tol-override {item!r}: expected key=value")
            continue
        key, val = (s.strip() for s in item.split("=", 1))
        key = key.removeprefix("solver.")
        if not hasattr(cfg.solver, key):
            errors.append(f"--tol-override: unknown solver key {key!r}")
            continue
        try:
            setattr(cfg.solver, key, type(getattr(cfg.solver, key))(val))
        except ValueError:
            errors.append(f"--tol-override {key}: bad value {val!r}")
    return errors


def load_config(path, seed=None, overrides=None) -> RunConfig:
    text = Path(path).read_text() if path else DEFAULT_CONFIG
    cfg = parse_config(text)
    if seed is not None:
        cfg.seed = seed
    errors = apply_overrides(cfg, overrides)
    errors += validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ncglue", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ncglue {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (("solve", "minimize F for the configured partition sequence"),
                           ("sweeps", "angular-speed sweeps and the interiority table"),
                           ("grad-check", "analytic versus finite-difference junction gradients"),
                           ("export", "rebuild the trajectory CSV from a saved solve report")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="config file (built-in two-centre default if omitted)")
        s.add_argument("--out", help="output directory (overrides [output] dir)")
        s.add_argument("--seed", type=int)
        s.add_argument("--tol-override", action="append", metavar="KEY=VALUE", default=[])
        if name == "export":
            s.add_argument("--report", help="solve report to read (default OUT/report.json)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.tol_override)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output_dir
    if args.command == "solve":
        code, env = run_solve(cfg, out)
    elif args.command == "sweeps":
        code, env = run_sweeps(cfg, out)
    elif args.command == "grad-check":
        code, env = run_gradient_check(cfg, out)
    else:
        code, env = run_export(cfg, out, args.report)
    print(f"{args.command}: exit {code} ({out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
