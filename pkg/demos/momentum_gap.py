"""Compare outer arrival and inner departure angular speeds on the triangle layout.

The outer column should stay bounded away from zero while the inner one shrinks
with epsilon; the script reports where (if anywhere on the grid) the inner
maximum drops below half the outer minimum.

Run: python3 demos/momentum_gap.py
"""

from ncglue.inner_arcs import inner_angular_sweep
from ncglue.outer_arcs import c1_sweep
from ncglue.potential import triangle

grid = [0.1, 0.05, 0.025, 0.0125]
cfg = triangle(0.05)
c1 = c1_sweep(cfg.delta, [0.0] + grid, 16, cfg)
inner = inner_angular_sweep(grid, 4, None, cfg)

print(f"Kepler limit C2 = {c1.C2:.10f}")
inner_max = {r.epsilon: r for r in inner.rows}
print(f"{'eps':>7} {'outer min':>10} {'inner max':>10} {'min S':>8} {'failed':>10}")
for r in c1.rows:
    i = inner_max.get(r.epsilon)
    tail = f"{i.max_abs_theta_dot:10.4f} {i.min_S:8.4f} {len(i.errors):10d}" if i else ""
    print(f"{r.epsilon:7.4f} {r.min_abs_theta_dot:10.4f} {tail}")
C1 = min(r.min_abs_theta_dot for r in c1.rows if r.epsilon > 0)
print(f"C1 = {C1:.4f}; largest grid eps with inner max < C1/2: {inner.epsilon5(C1 / 2)}")
