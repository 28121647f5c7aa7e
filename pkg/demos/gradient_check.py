"""Analytic junction derivative against central differences at three step sizes.

Run: python3 demos/gradient_check.py [n_configs]
"""

import sys

from ncglue import cli
from ncglue.config import DEFAULT_CONFIG, parse_config

n = int(sys.argv[1]) if len(sys.argv) > 1 else 8
cfg = parse_config(DEFAULT_CONFIG)
rows, skipped = cli.gradient_check(cfg, n)
print(f"{'cfg':>3} {'k':>2} {'parity':>6} {'analytic':>12}  " + "  ".join(f"err h={h:g}" for h in cli.FD_STEPS))
for r in rows:
    errs = "  ".join(f"{r['rel_error'][f'{h:g}']:10.1e}" for h in cli.FD_STEPS)
    print(f"{r['config']:>3} {r['junction']:>2} {r['parity']:>6} {r['analytic']:12.8f}  {errs}")
print(f"worst relative error {max(r['max_rel_error'] for r in rows):.1e}; {len(skipped)} draws redrawn")
