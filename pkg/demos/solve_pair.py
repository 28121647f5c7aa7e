"""Glue a periodic orbit for two centres and inspect the junctions.

Run: python3 demos/solve_pair.py [output_dir]
"""

import sys

from ncglue import cli
from ncglue.config import DEFAULT_CONFIG, parse_config

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out/pair"
cfg = parse_config(DEFAULT_CONFIG)
print(f"centres {cfg.centres}, epsilon {cfg.epsilon}, R {cfg.R}, delta {cfg.delta}")
print(f"partition sequence: {' '.join(cfg.symbols)}")

code, env = cli.run_solve(cfg, out)
rep = env["payload"]["report"]
print(f"exit code {code}, F = {rep['F']:.12f}, |grad| = {rep['grad_norm']:.1e}, iterations {rep['iterations']}")
print(f"junction angles: {[round(a, 6) for a in env['payload']['junction_angles']]}")
print(f"{'k':>2} {'margin':>9} {'mismatch':>9} {'tangential':>11} {'speed':>9}")
for k, j in enumerate(rep["junctions"]):
    print(f"{k:>2} {j['margin']:9.4f} {j['mismatch_norm']:9.1e} {j['tangential_mismatch']:11.1e} {j['speed_mismatch']:9.1e}")
print(f"C1 verdict {rep['c1_verdict']}, uniqueness deviation {rep['uniqueness_deviation']:.1e}")
traj = env["payload"]["trajectory"]
print(f"period {traj['period']:.6f}, closure error {traj['closure_error']:.1e}, trajectory in {out}/trajectory.csv")
