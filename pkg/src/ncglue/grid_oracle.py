"""Shortest separating path on a grid graph: an independent check of the discrete geodesic.

Nodes are grid points of spacing ``h`` inside the closed disc of radius R and
outside the collision discs.  Edges join each node to its neighbours at
coprime offsets up to ``reach`` grid units; an edge costs
``sqrt(V(midpoint) - 1) * |edge|``.  The class constraint is handled on a
product graph: one layer per parity mask, where bit ``i`` flips each time an
edge crosses a fixed ray leaving centre ``i``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import _kernels as K
from .inner_arcs import Partition
from .potential import PotentialConfig


def _offsets(reach: int) -> np.ndarray:
    out = [(dx, dy) for dx in range(-reach, reach + 1) for dy in range(-reach, reach + 1)
           if (dx, dy) != (0, 0) and math.gcd(abs(dx), abs(dy)) == 1]
    return np.array(out, dtype=np.int64)


@nb.njit(cache=True)
def _crosses(ax, ay, bx, by, cx, cy, dx, dy):
    # segment a->b (half-open at b) against the ray c + t d, t >= 0
    ex = bx - ax
    ey = by - ay
    den = ex * dy - ey * dx
    if den == 0.0:
        return False
    qx = cx - ax
    qy = cy - ay
    s = (qx * dy - qy * dx) / den
    t = (qx * ey - qy * ex) / den
    return 0.0 <= s < 1.0 and t >= 0.0


@nb.njit(cache=True)
def _seg_dist(ax, ay, bx, by, cx, cy):
    ex = bx - ax
    ey = by - ay
    ll = ex * ex + ey * ey
    t = ((cx - ax) * ex + (cy - ay) * ey) / ll
    t = min(1.0, max(0.0, t))
    px = ax + t * ex - cx
    py = ay + t * ey - cy
    return np.sqrt(px * px + py * py)


@nb.njit(cache=True)
def _dijkstra(n, h, R, offs, cx, cy, m, rdx, rdy, coll_r, src, t0, t1):
    nl = 1 << cx.shape[0]
    nn = n * n
    dist = np.full(nn * nl, np.inf)
    done = np.zeros(nn * nl, dtype=np.bool_)
    dist[src * nl] = 0.0
    heap = [(0.0, src * nl)]
    found = 0
    while heap:
        d, s = heapq.heappop(heap)
        if done[s]:
            continue
        done[s] = True
        if s == t0 or s == t1:
            found += 1
            if found == 2 or (t0 == t1):
                break
        node = s // nl
        mask = s % nl
        i = node // n
        j = node % n
        ax = -R + i * h
        ay = -R + j * h
        for k in range(offs.shape[0]):
            ii = i + offs[k, 0]
            jj = j + offs[k, 1]
            if ii < 0 or jj < 0 or ii >= n or jj >= n:
                continue
            bx = -R + ii * h
            by = -R + jj * h
            if bx * bx + by * by > R * R * (1.0 + 1e-12):
                continue
            ok = True
            newmask = mask
            for c in range(cx.shape[0]):
                if _seg_dist(ax, ay, bx, by, cx[c], cy[c]) < coll_r:
                    ok = False
                    break
                if _crosses(ax, ay, bx, by, cx[c], cy[c], rdx[c], rdy[c]):
                    newmask ^= 1 << c
            if not ok:
                continue
            mx = 0.5 * (ax + bx)
            my = 0.5 * (ay + by)
            v = K.potential(mx, my, cx, cy, m)
            if v <= 1.0:
                continue
            w = np.sqrt(v - 1.0) * np.sqrt((bx - ax) ** 2 + (by - ay) ** 2)
            ns = (ii * n + jj) * nl + newmask
            nd = d + w
            if nd < dist[ns]:
                dist[ns] = nd
                heapq.heappush(heap, (nd, ns))
    return dist[t0], dist[t1]


@dataclass
class OracleResult:
    length: float
    spacing: float
    reach: int


def _ray_directions(cfg: PotentialConfig) -> np.ndarray:
    out = []
    for c in cfg.positions:
        a = math.atan2(c[1], c[0]) if np.hypot(*c) > 0 else 0.0
        a += 0.0123456789  # keeps rays off grid lines
        out.append((math.cos(a), math.sin(a)))
    return np.array(out)


def _closure_bits(theta1: float, theta2: float, cfg: PotentialConfig, dirs: np.ndarray) -> int:
    """Parity bits contributed by the counter-clockwise circle arc from theta2 to theta1."""
    bits = 0
    span = (theta1 - theta2) % (2 * math.pi)
    for i, (c, d) in enumerate(zip(cfg.positions, dirs)):
        b = float(c @ d)
        t = -b + math.sqrt(b * b - float(c @ c) + cfg.R ** 2)
        q = c + t * d
        phi = math.atan2(q[1], q[0])
        if (phi - theta2) % (2 * math.pi) < span:
            bits ^= 1 << i
    return bits


def grid_shortest_path(p1, p2, partition: Partition, cfg: PotentialConfig, spacing: float | None = None,
                       reach: int = 6) -> OracleResult:
    """Length of the shortest grid path from ``p1`` to ``p2`` in the partition's class."""
    h = spacing or cfg.R / 200.0
    n = 2 * int(math.floor(cfg.R / h)) + 1
    R_grid = (n - 1) / 2 * h
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    dirs = _ray_directions(cfg)

    def snap(p):
        best = None
        i0 = int(round((p[0] + R_grid) / h))
        j0 = int(round((p[1] + R_grid) / h))
        for i in range(i0 - 2, i0 + 3):
            for j in range(j0 - 2, j0 + 3):
                q = np.array([-R_grid + i * h, -R_grid + j * h])
                if q @ q <= cfg.R ** 2 and (best is None or np.linalg.norm(q - p) < best[0]):
                    best = (np.linalg.norm(q - p), i * n + j, q)
        return best

    d1, s, q1 = snap(p1)
    d2, t, q2 = snap(p2)
    th1 = math.atan2(p1[1], p1[0])
    th2 = math.atan2(p2[1], p2[0])
    closure = _closure_bits(th1, th2, cfg, dirs)
    nl = 1 << len(cfg.centres)
    targets = []
    for block in (partition.left_block, partition.right_block):
        bits = sum(1 << i for i in block) ^ closure
        targets.append(t * nl + bits)
    cx, cy, m = cfg.kernel_args()
    a, b = _dijkstra(n, h, R_grid, _offsets(reach), cx, cy, m, np.ascontiguousarray(dirs[:, 0]),
                     np.ascontiguousarray(dirs[:, 1]), cfg.collision_radius, s, targets[0], targets[1])
    core = min(a, b)
    ends = 0.0
    for p, q in ((p1, q1), (p2, q2)):
        mid = 0.5 * (p + q)
        ends += math.sqrt(K.potential(mid[0], mid[1], cx, cy, m) - 1.0) * float(np.linalg.norm(p - q))
    return OracleResult(core + ends, h, reach)
