"""Inner arcs: partition-constrained Jacobi geodesics through the centre region.

Pipeline for one inner leg ``p1 -> p2``:

1. ``seed_path`` builds a polyline in the right class,
2. ``minimize_geodesic`` minimizes the discrete Jacobi length (banded Newton),
3. ``solve_inner`` refines the result by shooting the equation of motion, so
   endpoint velocities are exact to integrator accuracy.

A class is the pair of blocks a path separates: close the path with an arc of
the circle and take the set of centres with odd winding number.  Switching the
closing arc flips every parity, so the unordered pair of blocks is well
defined.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, solveh_banded
from scipy.optimize import brentq
from scipy.spatial import ConvexHull

from . import _kernels as K
from .integrator import Arc, CollisionError, IntegrationError, _make_arc, _raise_for, shoot
from .potential import (HillBoundaryError, PotentialConfig, angular_speed, boundary_point,
                        wrap_angle)


class InfeasiblePartitionError(ValueError):
    pass


class ClassEscapeError(RuntimeError):
    pass


class CollisionProximityError(RuntimeError):
    """The length minimizer rests on the collision barrier of a centre."""


class InnerSolveError(RuntimeError):
    pass


class UniquenessError(RuntimeError):
    pass


class TruncationError(ValueError):
    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        super().__init__(f"{condition}: {detail}" if detail else condition)


@dataclass(frozen=True, eq=False)
class Partition:
    """Two-block split of the centre indices ``0..n_centres-1``."""

    left_block: frozenset
    n_centres: int

    def __post_init__(self):
        left = frozenset(int(i) for i in self.left_block)
        object.__setattr__(self, "left_block", left)
        if not left or not left < frozenset(range(self.n_centres)):
            raise ValueError("left_block must be a non-empty proper subset of the centres")

    @property
    def right_block(self) -> frozenset:
        return frozenset(range(self.n_centres)) - self.left_block

    @property
    def blocks(self) -> frozenset:
        return frozenset({self.left_block, self.right_block})

    def __eq__(self, other):
        return isinstance(other, Partition) and self.blocks == other.blocks

    def __hash__(self):
        return hash(self.blocks)

    def __repr__(self):
        a, b = sorted([sorted(self.left_block), sorted(self.right_block)])
        return f"Partition({a}|{b})"

    def label(self) -> str:
        a, b = sorted([sorted(self.left_block), sorted(self.right_block)])
        return "".join(map(str, a)) + "|" + "".join(map(str, b))

    @classmethod
    def all(cls, n_centres: int) -> list["Partition"]:
        """Every two-block partition (2^(N-1) - 1 of them)."""
        out = []
        rest = range(1, n_centres)
        for k in range(0, n_centres - 1):
            for extra in itertools.combinations(rest, k):
                out.append(cls(frozenset((0,) + extra), n_centres))
        return out


# --------------------------------------------------------------------------- class test

def _closure(p_from: np.ndarray, p_to: np.ndarray, R: float, n: int = 96) -> np.ndarray:
    a = math.atan2(p_from[1], p_from[0])
    b = math.atan2(p_to[1], p_to[0])
    span = (b - a) % (2 * math.pi)
    ang = a + span * np.linspace(0.0, 1.0, n)[1:-1]
    return np.column_stack([R * np.cos(ang), R * np.sin(ang)])


def winding_numbers(path: np.ndarray, centres: np.ndarray, R: float) -> np.ndarray:
    """Winding numbers of ``path`` closed counter-clockwise along the circle of radius R."""
    poly = np.vstack([path, _closure(path[-1], path[0], R), path[:1]])
    rel = poly[None, :, :] - centres[:, None, :]
    a, b = rel[:, :-1, :], rel[:, 1:, :]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = (a * b).sum(-1)
    return np.rint(np.arctan2(cross, dot).sum(axis=1) / (2 * math.pi)).astype(int)


def path_class(path: np.ndarray, cfg: PotentialConfig) -> frozenset:
    """Centres enclosed an odd number of times."""
    w = winding_numbers(path, cfg.positions, cfg.R)
    return frozenset(int(i) for i in np.flatnonzero(w % 2))


def separates(path: np.ndarray, partition: Partition, cfg: PotentialConfig) -> bool:
    return path_class(path, cfg) in partition.blocks


def _segment_distance(path: np.ndarray, centres: np.ndarray) -> float:
    a = path[:-1]
    d = path[1:] - a
    dd = (d * d).sum(-1)
    best = np.inf
    for c in centres:
        t = np.clip(((c - a) * d).sum(-1) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
        q = a + t[:, None] * d - c
        best = min(best, float(np.sqrt((q * q).sum(-1)).min()))
    return best


# --------------------------------------------------------------------------- metrics

class JacobiMetric:
    """sqrt(V - 1) with analytic gradient and Hessian, vectorized over points."""

    def __init__(self, cfg: PotentialConfig):
        self.cfg = cfg
        self.c = cfg.positions
        self.m = cfg.masses

    def _v(self, X):
        r = X[:, None, :] - self.c[None, :, :]
        d = np.sqrt((r * r).sum(-1))
        V = (self.m / d).sum(-1)
        return r, d, V

    def weight(self, X):
        _, _, V = self._v(X)
        if np.any(V <= 1.0):
            raise HillBoundaryError("path leaves the Hill region")
        return np.sqrt(V - 1.0)

    def all(self, X):
        r, d, V = self._v(X)
        if np.any(V <= 1.0):
            raise HillBoundaryError("path leaves the Hill region")
        w = np.sqrt(V - 1.0)
        d3 = d ** 3
        gV = -(self.m[None, :, None] * r / d3[..., None]).sum(1)
        d5 = d3 * d * d
        outer = r[..., :, None] * r[..., None, :]
        HV = (self.m[None, :, None, None] * (3.0 * outer / d5[..., None, None]
                                             - np.eye(2)[None, None] / d3[..., None, None])).sum(1)
        gw = gV / (2.0 * w[:, None])
        Hw = HV / (2.0 * w[:, None, None]) - gV[:, :, None] * gV[:, None, :] / (4.0 * w[:, None, None] ** 3)
        return w, gw, Hw


class UnitMetric:
    """Euclidean metric; used for sanity checks of the minimizer."""

    def weight(self, X):
        return np.ones(len(X))

    def all(self, X):
        n = len(X)
        return np.ones(n), np.zeros((n, 2)), np.zeros((n, 2, 2))


def discrete_length(X: np.ndarray, metric) -> float:
    d = np.diff(X, axis=0)
    mid = 0.5 * (X[1:] + X[:-1])
    return float((metric.weight(mid) * np.sqrt((d * d).sum(-1))).sum())


def _assemble(X, metric):
    d = np.diff(X, axis=0)
    ell = np.sqrt((d * d).sum(-1))
    if not np.all(ell > 0):
        raise HillBoundaryError("degenerate segment")  # treated as a rejected step
    u = d / ell[:, None]
    mid = 0.5 * (X[1:] + X[:-1])
    w, gw, Hw = metric.all(mid)
    L = float((w * ell).sum())
    ga = 0.5 * ell[:, None] * gw - w[:, None] * u
    gb = 0.5 * ell[:, None] * gw + w[:, None] * u
    g = ga[1:] + gb[:-1]  # interior vertices 1..K-1

    P = np.eye(2)[None] - u[:, :, None] * u[:, None, :]
    base = 0.25 * ell[:, None, None] * Hw
    gu = gw[:, :, None] * u[:, None, :]
    S = 0.5 * (gu + gu.transpose(0, 2, 1))
    Asym = 0.5 * (gu - gu.transpose(0, 2, 1))
    wp = (w / ell)[:, None, None] * P
    Haa = base - S + wp
    Hbb = base + S + wp
    Hab = base + Asym - wp
    D = Hbb[:-1] + Haa[1:]
    O = Hab[1:-1]
    nv = len(g)
    n = 2 * nv
    ab = np.zeros((4, n))
    ab[3, 0::2] = D[:, 0, 0]
    ab[3, 1::2] = D[:, 1, 1]
    ab[2, 1::2] = D[:, 0, 1]
    if nv > 1:
        q = np.arange(nv - 1)
        ab[1, 2 * q + 2] = O[:, 0, 0]
        ab[0, 2 * q + 3] = O[:, 0, 1]
        ab[2, 2 * q + 2] = O[:, 1, 0]
        ab[1, 2 * q + 3] = O[:, 1, 1]
    return L, g.ravel(), ab


@dataclass
class GeodesicPath:
    vertices: np.ndarray
    jacobi_length: float
    partition: Partition | None = None
    grad_norm: float = 0.0
    refinement_change: float = math.nan
    richardson_length: float = math.nan
    arc: Arc | None = None
    barrier_active: bool = False

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1


def _resample(X: np.ndarray, n_seg: int, metric) -> np.ndarray:
    """Redistribute vertices at equal discrete Jacobi length along the polyline."""
    d = np.diff(X, axis=0)
    ell = np.sqrt((d * d).sum(-1))
    seg = metric.weight(0.5 * (X[1:] + X[:-1])) * ell
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, s[-1], n_seg + 1)
    out = np.column_stack([np.interp(target, s, X[:, 0]), np.interp(target, s, X[:, 1])])
    out[0], out[-1] = X[0], X[-1]
    return out


def _admissible(X, cfg, partition, coll_r):
    if cfg is None:
        return True
    if coll_r > 0 and _segment_distance(X, cfg.positions) < coll_r:
        return False
    if partition is not None and not separates(X, partition, cfg):
        return False
    return True


def _normals(X):
    t = X[2:] - X[:-2]
    t /= np.sqrt((t * t).sum(-1))[:, None]
    return np.column_stack([-t[:, 1], t[:, 0]])


def _newton(X, metric, cfg, partition, coll_r, tol, max_iter):
    """Damped Newton on normal offsets of the interior vertices.

    Tangential motion only reparametrizes the polyline; leaving it free lets
    vertices drift to exploit the midpoint rule, so it is frozen here and
    handled by ``_respline`` instead.
    """
    n = _normals(X)
    L, g, ab = _assemble(X, metric)

    def reduce(g, ab):
        gs = (g.reshape(-1, 2) * n).sum(-1)
        nx, ny = n[:, 0], n[:, 1]
        diag = ab[3, 0::2] * nx * nx + 2 * ab[2, 1::2] * nx * ny + ab[3, 1::2] * ny * ny
        # off-diagonal block O (rows vertex q, cols vertex q+1) sandwiched by normals
        o00, o01, o10, o11 = ab[1, 2::2], ab[0, 3::2], ab[2, 2::2], ab[1, 3::2]
        off = (nx[:-1] * (o00 * nx[1:] + o01 * ny[1:]) + ny[:-1] * (o10 * nx[1:] + o11 * ny[1:]))
        band = np.zeros((2, len(gs)))
        band[1] = diag
        band[0, 1:] = off
        return gs, band

    gs, band = reduce(g, ab)
    scale = float(np.mean(np.abs(band[1])))
    lam = 1e-10
    gn = float(np.linalg.norm(gs))
    for _ in range(max_iter):
        if gn <= tol:
            break
        accepted = False
        while lam < 1e8:
            b = band.copy()
            b[1] += lam * scale
            try:
                step = solveh_banded(b, -gs, check_finite=False)
            except (LinAlgError, ValueError):
                lam *= 10.0
                continue
            Xn = X.copy()
            Xn[1:-1] += step[:, None] * n
            try:
                if not _admissible(Xn, cfg, partition, coll_r):
                    lam *= 10.0
                    continue
                Ln, g_new, ab_new = _assemble(Xn, metric)
            except HillBoundaryError:
                lam *= 10.0
                continue
            gs_new, band_new = reduce(g_new, ab_new)
            gn_new = float(np.linalg.norm(gs_new))
            if Ln <= L + 1e-15 * abs(L) or (gn_new < 0.5 * gn and Ln <= L + 1e-13 * abs(L)):
                X, L, gs, band, gn = Xn, Ln, gs_new, band_new, gn_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
    return X, L, gn


def _respline(X, n_seg, metric, sub=8):
    """Equal discrete-Jacobi-length vertices on a cubic spline through ``X``."""
    X = _dedupe(X)
    sig = np.concatenate([[0.0], np.cumsum(np.sqrt((np.diff(X, axis=0) ** 2).sum(-1)))])
    spl = CubicSpline(sig, X, axis=0)
    fine = np.linspace(0.0, sig[-1], sub * max(n_seg, len(X) - 1) + 1)
    P = spl(fine)
    d = np.sqrt((np.diff(P, axis=0) ** 2).sum(-1))
    s = np.concatenate([[0.0], np.cumsum(metric.weight(0.5 * (P[1:] + P[:-1])) * d)])
    out = spl(np.interp(np.linspace(0.0, s[-1], n_seg + 1), s, fine))
    out[0], out[-1] = X[0], X[-1]
    return out


def _dedupe(X):
    keep = np.concatenate([[True], np.sqrt((np.diff(X, axis=0) ** 2).sum(-1)) > 1e-14])
    keep[-1] = True
    Y = X[keep]
    if len(Y) > 2 and np.linalg.norm(Y[-1] - Y[-2]) <= 1e-14:
        Y = np.delete(Y, -2, axis=0)
    return Y


def _midpoints(X):
    Xf = np.empty((2 * len(X) - 1, 2))
    Xf[0::2] = X
    Xf[1::2] = 0.5 * (X[1:] + X[:-1])
    return Xf


def _converge(X, n_seg, metric, cfg, partition, coll_r, tol, max_iter, rounds=4):
    L = math.inf
    gn = math.inf
    for _ in range(rounds):
        try:
            Y = _respline(X, n_seg, metric)
            if not _admissible(Y, cfg, partition, coll_r):
                Y = None
        except HillBoundaryError:
            Y = None
        if Y is None:
            Y = X if len(X) == n_seg + 1 else _midpoints(X)
        X, L_new, gn = _newton(Y, metric, cfg, partition, coll_r, tol, max_iter)
        done = abs(L_new - L) <= 1e-13 * abs(L_new) and gn <= tol
        L = L_new
        if done:
            break
    return X, L, gn


def minimize_geodesic(seed: GeodesicPath, cfg: PotentialConfig | None, tol: float = 1e-9,
                      refine_tol: float = 1e-6, max_segments: int = 4096, max_iter: int = 100,
                      metric=None, on_barrier: str = "raise") -> GeodesicPath:
    """Local minimizer of the discrete Jacobi length with fixed endpoints.

    The length is sum_k w(midpoint_k) |segment_k|.  Steps that change the
    separation class or enter the collision radius are rejected.  The number
    of segments is doubled until the minimum changes by at most
    ``refine_tol`` (relative).

    A minimizer that stays non-stationary against the collision barrier
    raises ``CollisionProximityError`` (``on_barrier="raise"``) or is returned
    with ``barrier_active`` set (``on_barrier="flag"``).
    """
    metric = metric or JacobiMetric(cfg)
    coll_r = cfg.collision_radius if cfg is not None else 0.0
    X = np.array(seed.vertices, dtype=float)
    if seed.partition is not None and cfg is not None and not separates(X, seed.partition, cfg):
        raise ClassEscapeError("seed does not separate the partition blocks")
    n_seg = max(len(X) - 1, 8)
    Y = _resample(X, n_seg, metric)
    X = Y if _admissible(Y, cfg, seed.partition, coll_r) else X
    X, L, gn = _converge(X, n_seg, metric, cfg, seed.partition, coll_r, tol, max_iter)
    change = math.inf
    rich = math.nan
    while 2 * n_seg <= max_segments and change > refine_tol:
        Xf, Lf, gnf = _converge(X, 2 * n_seg, metric, cfg, seed.partition, coll_r, tol, max_iter)
        change = abs(Lf - L) / max(abs(Lf), 1e-300)
        rich = (4.0 * Lf - L) / 3.0
        X, L, gn, n_seg = Xf, Lf, gnf, 2 * n_seg
    if seed.partition is not None and cfg is not None and not separates(X, seed.partition, cfg):
        raise ClassEscapeError("minimizer left the separation class")
    barrier = (coll_r > 0 and gn > max(1e3 * tol, 1e-6)
               and _segment_distance(X, cfg.positions) < 1.5 * coll_r)
    if barrier and on_barrier == "raise":
        raise CollisionProximityError(f"minimizer pressed against centre {_nearest_centre(X, cfg)}")
    return GeodesicPath(X, L, seed.partition, gn, change, rich, barrier_active=barrier)


def _nearest_centre(X, cfg):
    return int(np.argmin([_segment_distance(X, c[None]) for c in cfg.positions]))


# --------------------------------------------------------------------------- seeding

def _polyline(points: Sequence[np.ndarray], n_seg: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    d = np.sqrt((np.diff(pts, axis=0) ** 2).sum(-1))
    s = np.concatenate([[0.0], np.cumsum(d)])
    t = np.linspace(0.0, s[-1], n_seg + 1)
    return np.column_stack([np.interp(t, s, pts[:, 0]), np.interp(t, s, pts[:, 1])])


def _waypoints(cfg: PotentialConfig) -> np.ndarray:
    c = cfg.positions
    span = max(cfg.epsilon, 1e-3)
    pts = [np.zeros(2)]
    for r in (0.35, 0.7, 1.2, 1.8, 2.6):
        for k in range(24):
            a = 2 * math.pi * k / 24
            pts.append(span * r * np.array([math.cos(a), math.sin(a)]))
    for i, j in itertools.combinations(range(len(c)), 2):
        pts.append(0.5 * (c[i] + c[j]))
    for ci in c:
        for k in range(8):
            a = 2 * math.pi * k / 8
            pts.append(ci + 0.3 * span * np.array([math.cos(a), math.sin(a)]))
    return np.array(pts)


def _block_ring(cfg: PotentialConfig, block: Sequence[int], n_ring: int = 12) -> np.ndarray | None:
    """Counter-clockwise convex polygon around ``block`` that keeps the other centres outside."""
    c = cfg.positions
    inside = c[list(block)]
    others = np.delete(c, list(block), axis=0)
    gap = min(np.linalg.norm(a - b) for a in inside for b in others)
    rho = 0.35 * gap
    ang = np.linspace(0.0, 2 * math.pi, n_ring, endpoint=False)
    pts = (inside[:, None, :] + rho * np.stack([np.cos(ang), np.sin(ang)], -1)[None]).reshape(-1, 2)
    if len(pts) >= 3:
        hull = ConvexHull(pts)
        ring = pts[hull.vertices]
    else:
        ring = pts
    closed = np.vstack([ring, ring[:1]])
    if winding_numbers_polygon(closed, others).any():
        return None
    return ring


def winding_numbers_polygon(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    rel = poly[None, :, :] - pts[:, None, :]
    a, b = rel[:, :-1, :], rel[:, 1:, :]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = (a * b).sum(-1)
    return np.rint(np.arctan2(cross, dot).sum(axis=1) / (2 * math.pi)).astype(int)


def candidate_seeds(p1, p2, partition: Partition, cfg: PotentialConfig, n_seg: int = 64) -> list[GeodesicPath]:
    """Admissible seeds along distinct routes.

    Routes: through the midpoint between the block centroids, and once around
    either block in either orientation.  Falls back to loops around single
    centres, then to one- or two-waypoint polylines.
    """
    p1 = np.asarray(getattr(p1, "position", p1), dtype=float)
    p2 = np.asarray(getattr(p2, "position", p2), dtype=float)
    if np.allclose(p1, p2):
        raise ValueError("p1 and p2 coincide")
    c = cfg.positions
    if partition.n_centres != len(c):
        raise ValueError("partition does not match the number of centres")
    A = sorted(partition.left_block)
    B = sorted(partition.right_block)
    if min(np.linalg.norm(c[i] - c[j]) for i in A for j in B) == 0.0:
        raise InfeasiblePartitionError("blocks share a centre position")
    metric = JacobiMetric(cfg)
    coll = 2.0 * cfg.collision_radius

    def route(ws):
        X = _polyline([p1, *ws, p2], 4 * n_seg)
        if _segment_distance(X, c) < coll or not separates(X, partition, cfg):
            return None
        X = _resample(X, n_seg, metric)
        if not _admissible(X, cfg, partition, coll):
            return None
        return GeodesicPath(X, discrete_length(X, metric), partition)

    out = []
    gap = 0.5 * (c[A].mean(0) + c[B].mean(0))
    s = route([gap])
    if s is not None:
        out.append(s)
    for block in (A, B):
        ring = _block_ring(cfg, block)
        if ring is None:
            continue
        for orient in (1, -1):
            r = ring[::orient]
            k1 = int(np.argmin(np.linalg.norm(r - p1, axis=1)))
            loop = np.roll(r, -k1, axis=0)
            s = route(list(loop) + [loop[0]])
            if s is not None:
                out.append(s)
    if out:
        return out
    out = _centre_loop_routes(p1, p2, partition, cfg, route)
    if out:
        return out
    wps = _waypoints(cfg)
    best = None
    for w in wps:
        s = route([w])
        if s is not None and (best is None or s.jacobi_length < best.jacobi_length):
            best = s
    if best is None:
        for w1, w2 in itertools.permutations(wps[::2], 2):
            s = route([w1, w2])
            if s is not None and (best is None or s.jacobi_length < best.jacobi_length):
                best = s
    if best is None:
        raise InfeasiblePartitionError(f"no seed separates {partition!r}")
    return [best]


def _centre_loop_routes(p1, p2, partition: Partition, cfg: PotentialConfig, route) -> list[GeodesicPath]:
    """Base routes with spur loops around single centres.

    A spur runs from the base route to a small ring around a centre, once
    around it and back, so it flips the parity of exactly that centre.
    """
    c = cfg.positions
    n = len(c)
    rings = []
    for i in range(n):
        others = np.delete(c, i, axis=0)
        rho = 0.35 * float(np.min(np.linalg.norm(others - c[i], axis=1)))
        ang = np.linspace(0.0, 2 * math.pi, 12, endpoint=False)
        rings.append(c[i] + rho * np.column_stack([np.cos(ang), np.sin(ang)]))
    clearance = 4.0 * cfg.collision_radius
    out = []
    for ws in [[]] + [[w] for w in _waypoints(cfg)]:
        base = _polyline([p1, *ws, p2], 128)
        if _segment_distance(base, c) < clearance:
            continue
        S = path_class(base, cfg)
        for block in (partition.left_block, partition.right_block):
            T = S ^ block
            if not T:
                continue
            spots = sorted((int(np.argmin(np.linalg.norm(base - c[i], axis=1))), i) for i in T)
            pts, last = [], 0
            for k, i in spots:
                q = base[k]
                j = int(np.argmin(np.linalg.norm(rings[i] - q, axis=1)))
                loop = np.roll(rings[i], -j, axis=0)
                pts += list(base[last:k + 1]) + list(loop) + [loop[0], q]
                last = k + 1
            pts += list(base[last:])
            s = route(pts[1:-1])
            if s is not None:
                out.append(s)
        if out:
            return out
    return out


def seed_path(p1, p2, partition: Partition, cfg: PotentialConfig, n_seg: int = 64) -> GeodesicPath:
    """Polyline from ``p1`` to ``p2`` that separates the blocks of ``partition``.

    Prefers the route through the midpoint between the block centroids.
    """
    return candidate_seeds(p1, p2, partition, cfg, n_seg)[0]


def inner_geodesic(p1, p2, partition: Partition, cfg: PotentialConfig, refine_tol: float = 1e-3,
                   max_segments: int = 1024) -> GeodesicPath:
    """Shortest discrete geodesic over the candidate routes.

    If the shortest one rests on a collision barrier the class minimizer is a
    collision path, which is reported as ``CollisionProximityError``.
    """
    best = None
    for seed in candidate_seeds(p1, p2, partition, cfg):
        try:
            g = minimize_geodesic(seed, cfg, tol=1e-8, refine_tol=refine_tol, max_segments=max_segments,
                                  on_barrier="flag")
        except (ClassEscapeError, HillBoundaryError):
            continue
        if best is None or g.jacobi_length < best.jacobi_length:
            best = g
    if best is None:
        raise InnerSolveError(f"no route for {partition!r} could be minimized")
    if best.barrier_active:
        raise CollisionProximityError(
            f"minimizer for {partition!r} collapses onto centre {_nearest_centre(best.vertices, cfg)}")
    return best


# --------------------------------------------------------------------------- shooting

@dataclass
class InnerSolution:
    arc: Arc
    p1: np.ndarray
    p2: np.ndarray
    partition: Partition
    alpha: float  # departure direction measured from the inward normal
    arrival_error: float
    path: GeodesicPath | None = None

    @property
    def length(self) -> float:
        return self.arc.jacobi_length

    @property
    def duration(self) -> float:
        return self.arc.duration

    @property
    def initial_angular_speed(self) -> float:
        return angular_speed(self.arc.positions[0], self.arc.velocities[0])


def _inner_start(p1, alpha, cfg):
    th = math.atan2(p1[1], p1[0])
    s = math.sqrt(2.0 * (K.potential(p1[0], p1[1], *cfg.kernel_args()) - 1.0))
    psi = th + math.pi + alpha
    s0 = np.array([p1[0], p1[1], s * math.cos(psi), s * math.sin(psi), 0.0])
    dv = np.array([0.0, 0.0, -s * math.sin(psi), s * math.cos(psi)])
    return s0, dv


def _inner_residual(p1, th2, alpha, cfg, tol, with_derivative=True):
    s0, dv = _inner_start(p1, alpha, cfg)
    status, t, s, *_ = shoot(s0, cfg.R, +1, cfg, tol=tol, max_time=10.0,
                             variational=dv if with_derivative else None)
    if status != K.EVENT:
        if status == K.REACHED_TMAX:
            raise IntegrationError("inner arc did not leave the disc")
        _raise_for(status, t, s, cfg)
    x = s[:2]
    res = wrap_angle(math.atan2(x[1], x[0]) - th2)
    if not with_derivative:
        return res, None
    v = s[2:4]
    dx = s[5:7]
    dt = -float(x @ dx) / float(x @ v)
    dxc = dx + v * dt
    dth = (x[0] * dxc[1] - x[1] * dxc[0]) / float(x @ x)
    return res, dth


def _newton_alpha(p1, th2, alpha, cfg, tol, max_iter=40, ang_tol=1e-13):
    res, der = _inner_residual(p1, th2, alpha, cfg, tol)
    for _ in range(max_iter):
        if abs(res) <= ang_tol:
            return alpha, res
        if der == 0 or not math.isfinite(der):
            break
        step = -res / der
        step = max(min(step, 0.2), -0.2)
        lam = 1.0
        improved = False
        while lam > 1e-6:
            a_new = alpha + lam * step
            if abs(a_new) < 0.5 * math.pi:
                try:
                    r_new, d_new = _inner_residual(p1, th2, a_new, cfg, tol)
                    if abs(r_new) < abs(res):
                        alpha, res, der = a_new, r_new, d_new
                        improved = True
                        break
                except (IntegrationError, HillBoundaryError):
                    pass
            lam *= 0.5
        if not improved:
            break
    return alpha, res


def _arc_for_alpha(p1, alpha, cfg, tol):
    s0, _ = _inner_start(p1, alpha, cfg)
    status, t, s, ts, states, n = shoot(s0, cfg.R, +1, cfg, tol=tol, max_time=10.0, store=True)
    if status != K.EVENT:
        _raise_for(status, t, s, cfg)
    return _make_arc(ts, states, n, cfg, "inner", tol)


def _accept(arc, p2, partition, cfg, ref_length, pos_tol, length_rtol):
    err = float(np.linalg.norm(arc.positions[-1] - p2))
    if err > pos_tol:
        return None
    if not separates(arc.positions, partition, cfg):
        return None
    if ref_length is not None and abs(arc.jacobi_length - ref_length) > length_rtol * ref_length:
        return None
    return err


def _scan_roots(p1, th2, alpha0, width, n, cfg, tol):
    grid = np.linspace(alpha0 - width, alpha0 + width, n)
    grid = grid[np.abs(grid) < 0.5 * math.pi]
    vals = []
    for a in grid:
        try:
            vals.append(_inner_residual(p1, th2, a, cfg, tol, with_derivative=False)[0])
        except (IntegrationError, HillBoundaryError):
            vals.append(math.nan)
    roots = []
    for (a0, f0), (a1, f1) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if math.isfinite(f0) and math.isfinite(f1) and f0 * f1 < 0 and abs(f0 - f1) < math.pi:
            try:
                roots.append(brentq(lambda a: _inner_residual(p1, th2, a, cfg, tol, False)[0], a0, a1,
                                    xtol=1e-15, rtol=4e-16))
            except (IntegrationError, HillBoundaryError, ValueError):
                pass
    roots.sort(key=lambda a: abs(a - alpha0))
    return roots


def solve_inner(p1, p2, partition: Partition, cfg: PotentialConfig, tol: float = 1e-10,
                alpha_guess: float | None = None, ref_length: float | None = None,
                energy_tol: float = 1e-9, seed_segments: int = 64,
                geodesic_refine_tol: float = 1e-3) -> InnerSolution:
    """Inner arc from ``p1`` to ``p2`` separating the blocks of ``partition``.

    Without ``alpha_guess`` the departure direction is taken from a discrete
    geodesic; the shooting residual is the arrival angle on the circle.
    """
    p1 = np.asarray(getattr(p1, "position", p1), dtype=float)
    p2 = np.asarray(getattr(p2, "position", p2), dtype=float)
    th1 = math.atan2(p1[1], p1[0])
    th2 = math.atan2(p2[1], p2[0])
    path = None
    length_rtol = 0.05
    if alpha_guess is None:
        path = inner_geodesic(p1, p2, partition, cfg, geodesic_refine_tol)
        d0 = path.vertices[1] - path.vertices[0]
        alpha_guess = wrap_angle(math.atan2(d0[1], d0[0]) - th1 - math.pi)
        ref_length = path.jacobi_length
        length_rtol = 0.02
    candidates = []
    try:
        a, res = _newton_alpha(p1, th2, alpha_guess, cfg, energy_tol)
        if abs(res) < 1e-11:
            candidates.append(a)
    except (IntegrationError, HillBoundaryError):
        pass
    for a in candidates:
        arc = _arc_for_alpha(p1, a, cfg, energy_tol)
        err = _accept(arc, p2, partition, cfg, ref_length, tol, length_rtol)
        if err is not None:
            return InnerSolution(arc, p1, p2, partition, a, err, path)
    for width in (0.02, 0.1, 0.4):
        for a in _scan_roots(p1, th2, alpha_guess, width, 81, cfg, energy_tol):
            a, res = _newton_alpha(p1, th2, a, cfg, energy_tol)
            try:
                arc = _arc_for_alpha(p1, a, cfg, energy_tol)
            except (IntegrationError, HillBoundaryError):
                continue
            err = _accept(arc, p2, partition, cfg, ref_length, tol, length_rtol)
            if err is not None:
                return InnerSolution(arc, p1, p2, partition, a, err, path)
    raise InnerSolveError(f"no inner arc found for {partition!r} between angles {th1:.6f} and {th2:.6f}")


# --------------------------------------------------------------------------- reparametrization

def reparametrize_maupertuis(path: GeodesicPath, cfg: PotentialConfig, n_samples: int | None = None):
    """Time-parametrize a geodesic with dt = ds / sqrt(2 (V - 1)).

    Returns ``(arc, ode_residual)``: the arc on the energy shell and the sup
    over samples of |x'' - grad V| / max(|grad V|, 1).
    """
    X = np.asarray(path.vertices, dtype=float)
    d = np.sqrt((np.diff(X, axis=0) ** 2).sum(-1))
    keep = np.concatenate([[True], d > 0])
    X = X[keep]
    sig = np.concatenate([[0.0], np.cumsum(np.sqrt((np.diff(X, axis=0) ** 2).sum(-1)))])
    spl = CubicSpline(sig, X, axis=0)
    if n_samples is None:
        s = sig
    else:
        s = np.linspace(0.0, sig[-1], n_samples)
    P = spl(s)
    d1 = spl(s, 1)
    d2 = spl(s, 2)
    args = cfg.kernel_args()
    V = np.array([K.potential(x, y, *args) for x, y in P])
    if np.any(V <= 1.0):
        raise HillBoundaryError("degenerate Jacobi weight along the path")
    gV = np.array([K.gradient(x, y, *args) for x, y in P])
    u = np.sqrt(2.0 * (V - 1.0))
    n1 = np.sqrt((d1 * d1).sum(-1))
    T = d1 / n1[:, None]
    kN = (d2 - (d2 * T).sum(-1)[:, None] * T) / (n1 ** 2)[:, None]
    acc = (gV * T).sum(-1)[:, None] * T + (u ** 2)[:, None] * kN
    # relative where |grad V| >= 1, absolute near the saddle points of V
    resid = float((np.sqrt(((acc - gV) ** 2).sum(-1)) / np.maximum(np.sqrt((gV ** 2).sum(-1)), 1.0)).max())
    # dt/ds = 1/u with |dx/ds| = n1
    f = n1 / u
    t = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(s))])
    jl = np.concatenate([[0.0], np.cumsum(0.5 * ((u * n1)[1:] + (u * n1)[:-1]) * np.diff(s))]) / math.sqrt(2.0)
    vel = T * u[:, None]
    eres = float(np.abs(0.5 * u ** 2 - V + 1.0).max())
    arc = Arc(t, P, vel, jl, "inner", eres, True)
    return arc, resid


def geodesic_from_arc(arc: Arc, partition: Partition | None = None) -> GeodesicPath:
    return GeodesicPath(arc.positions.copy(), arc.jacobi_length, partition, 0.0, 0.0, arc.jacobi_length, arc)


# --------------------------------------------------------------------------- local geodesics

@dataclass
class ConvexNeighborhood:
    center: np.ndarray
    radius: float
    validated: bool = False

    def contains(self, p, slack: float = 1e-12) -> bool:
        return float(np.linalg.norm(np.asarray(p) - self.center)) <= self.radius + slack


@dataclass
class TruncationPoint:
    t_star: float
    point: np.ndarray
    velocity: np.ndarray
    jacobi_length: float


def _local_residual(p, psi, T, target, cfg, tol):
    s = math.sqrt(2.0 * (K.potential(p[0], p[1], *cfg.kernel_args()) - 1.0))
    s0 = np.array([p[0], p[1], s * math.cos(psi), s * math.sin(psi), 0.0])
    dv = np.array([0.0, 0.0, -s * math.sin(psi), s * math.cos(psi)])
    st = np.empty(9)
    st[:5] = s0
    st[5:] = dv
    status, t, out, *_ = K.propagate(st, T, *cfg.kernel_args(), 9, 1e-12, 1e-13, tol, 0.0, 0,
                                     cfg.collision_radius, 1.0 + 1e-6, 200_000, False)
    if status != K.REACHED_TMAX:
        _raise_for(status, t, out, cfg)
    return out[:2] - target, np.column_stack([out[5:7], out[2:4]])


def _shoot_local(p, target, psi, T, cfg, tol, max_iter=50):
    for _ in range(max_iter):
        r, J = _local_residual(p, psi, T, target, cfg, tol)
        if np.linalg.norm(r) <= 1e-14:
            break
        step = np.linalg.solve(J, -r)
        step[0] = max(min(step[0], 0.5), -0.5)
        T_new = T + step[1]
        if T_new <= 0:
            T_new = 0.5 * T
        psi, T = psi + step[0], T_new
    r, _ = _local_residual(p, psi, T, target, cfg, tol)
    return psi, T, float(np.linalg.norm(r))


def local_geodesic(p, p_tilde, nbhd: ConvexNeighborhood, cfg: PotentialConfig, tol: float = 1e-8,
                   n_starts: int = 3, energy_tol: float = 1e-9) -> GeodesicPath:
    """Unique minimal geodesic from ``p`` to ``p_tilde`` inside ``nbhd``.

    Solved by two-parameter shooting (direction, duration) from ``n_starts``
    seeds; disagreement beyond ``tol`` raises ``UniquenessError``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(p_tilde, dtype=float)
    for pt, name in ((p, "p"), (q, "p_tilde")):
        if not nbhd.contains(pt):
            raise ValueError(f"{name} lies outside the neighbourhood")
    if np.array_equal(p, q):
        return GeodesicPath(np.vstack([p, q]), 0.0)
    d = q - p
    psi0 = math.atan2(d[1], d[0])
    speed = math.sqrt(2.0 * (K.potential(p[0], p[1], *cfg.kernel_args()) - 1.0))
    T0 = float(np.linalg.norm(d)) / speed
    seeds = [(psi0, T0), (psi0 + 0.05, 1.1 * T0), (psi0 - 0.05, 0.9 * T0), (psi0 + 0.1, T0), (psi0 - 0.1, 1.2 * T0)]
    sols = []
    for psi, T in seeds[:max(n_starts, 3)]:
        try:
            s = _shoot_local(p, q, psi, T, cfg, energy_tol)
        except (IntegrationError, np.linalg.LinAlgError, HillBoundaryError):
            continue
        if s[2] <= 1e-10:
            sols.append(s)
    if len(sols) < 3:
        raise UniquenessError("fewer than three shooting starts converged")
    psis = np.array([wrap_angle(s[0] - sols[0][0]) for s in sols])
    Ts = np.array([s[1] for s in sols])
    if np.ptp(psis) > tol or np.ptp(Ts) > tol:
        raise UniquenessError("multi-start disagreement; shrink the neighbourhood")
    psi, T = sols[0][0], sols[0][1]
    s0 = np.array([p[0], p[1], speed * math.cos(psi), speed * math.sin(psi), 0.0])
    status, t, out, ts, states, n = K.propagate(s0, T, *cfg.kernel_args(), 5, 1e-12, 1e-13, energy_tol, 0.0, 0,
                                                cfg.collision_radius, 1.0 + 1e-6, 200_000, True)
    if status != K.REACHED_TMAX:
        _raise_for(status, t, out, cfg)
    arc = _make_arc(ts, states, n, cfg, "local_geodesic", energy_tol)
    arc.positions[-1] = q  # residual <= 1e-10; pin the end exactly
    if not all(nbhd.contains(x, 1e-9) for x in arc.positions):
        raise UniquenessError("local geodesic leaves the neighbourhood")
    return GeodesicPath(arc.positions.copy(), arc.jacobi_length, None, 0.0, 0.0, arc.jacobi_length, arc)


def validate_neighborhood(nbhd: ConvexNeighborhood, cfg: PotentialConfig, n_probe: int = 4) -> bool:
    """Multi-start uniqueness on probe pairs inside the neighbourhood."""
    r = 0.8 * nbhd.radius
    probes = [nbhd.center] + [nbhd.center + r * np.array([math.cos(a), math.sin(a)])
                              for a in np.linspace(0, 2 * math.pi, n_probe, endpoint=False) + 0.3]
    try:
        for a, b in itertools.combinations(probes, 2):
            local_geodesic(a, b, nbhd, cfg)
    except (UniquenessError, IntegrationError, HillBoundaryError):
        return False
    return True


def make_neighborhood(center, cfg: PotentialConfig, radius: float | None = None,
                      max_halvings: int = 6) -> ConvexNeighborhood:
    """Neighbourhood of ``center`` certified by ``validate_neighborhood``; the radius starts at R/10."""
    radius = radius or 0.1 * cfg.R
    for _ in range(max_halvings + 1):
        nb = ConvexNeighborhood(np.asarray(center, dtype=float), radius)
        if validate_neighborhood(nb, cfg):
            nb.validated = True
            return nb
        radius *= 0.5
    raise UniquenessError("could not certify a convex neighbourhood")


def truncation_point(arc: Arc, nbhd: ConvexNeighborhood, cfg: PotentialConfig) -> TruncationPoint:
    """Point of ``arc`` at Jacobi arclength radius/2 from its start, with validation.

    Checks: the point is in the neighbourhood, strictly inside the disc of
    radius R, and the arc up to it stays in the annulus R/2 < |x| <= R.
    """
    target = 0.5 * nbhd.radius
    if np.linalg.norm(arc.positions[0] - nbhd.center) > 1e-9:
        raise TruncationError("start", "arc does not start at the neighbourhood centre")
    if arc.jacobi_length <= target:
        raise TruncationError("arc too short", f"length {arc.jacobi_length:.6g}")
    k = int(np.searchsorted(arc.lengths, target)) - 1
    s = np.concatenate([arc.positions[k], arc.velocities[k], [arc.lengths[k]]])
    args = cfg.kernel_args()
    tau = 0.0
    for _ in range(50):
        st = K.advance(s, tau, *args, 5) if tau > 0 else s
        f = st[4] - target
        if abs(f) <= 1e-15:
            break
        tau -= f / (math.sqrt(2.0) * (K.potential(st[0], st[1], *args) - 1.0))
    st = K.advance(s, tau, *args, 5) if tau != 0 else s
    t_star = float(arc.times[k] + tau)
    point = st[:2].copy()
    if not nbhd.contains(point):
        raise TruncationError("point in neighbourhood", f"distance {np.linalg.norm(point - nbhd.center):.6g}")
    if not np.linalg.norm(point) < cfg.R:
        raise TruncationError("|p_tilde| < R", f"|p_tilde| = {np.linalg.norm(point)!r}")
    r = np.hypot(*arc.positions[arc.times <= t_star].T)
    if r.size and (r.max() > cfg.R * (1 + 1e-12) or r.min() <= cfg.R / 2):
        raise TruncationError("annulus", "initial segment leaves B_R minus B_{R/2}")
    return TruncationPoint(t_star, point, st[2:4].copy(), float(st[4]))


def restriction_distance(local: GeodesicPath, arc: Arc, t_star: float) -> float:
    """Sup distance between the reparametrized local geodesic and ``arc`` on [0, t_star]."""
    la = local.arc
    if la is None:
        return 0.0
    T = min(la.duration, t_star)
    t = np.linspace(0.0, T, 400)
    return float(np.linalg.norm(la.position_at(t) - arc.position_at(t), axis=1).max())


# --------------------------------------------------------------------------- sweep

@dataclass
class InnerRow:
    epsilon: float
    max_abs_theta_dot: float
    worst_case: str
    min_S: float
    n_ok: int
    errors: list[str] = field(default_factory=list)


@dataclass
class InnerMomentumReport:
    rows: list[InnerRow]

    def epsilon5(self, lam: float) -> float | None:
        """Largest grid epsilon whose max inner |theta-dot(0)| is below ``lam``."""
        ok = [r.epsilon for r in self.rows if r.n_ok > 0 and r.max_abs_theta_dot < lam]
        return max(ok) if ok else None

    def to_dict(self) -> dict:
        return {"rows": [{"epsilon": r.epsilon, "max_abs_theta_dot": r.max_abs_theta_dot,
                          "worst_case": r.worst_case, "min_S": r.min_S, "n_ok": r.n_ok,
                          "errors": r.errors} for r in self.rows]}


def sweep_pairs(boundary_pairs: int, offsets: Sequence[float]) -> list[tuple[float, float]]:
    out = []
    for i in range(boundary_pairs):
        a = 2 * math.pi * (i + 0.5) / boundary_pairs
        for off in offsets:
            out.append((a, a + off))
    return out


def exit_time_half_radius(arc: Arc, R: float) -> float:
    """First time the arc reaches |x| = R/2 (the quantity S)."""
    r = np.hypot(*arc.positions.T)
    idx = np.flatnonzero(r <= R / 2)
    if idx.size == 0:
        return math.nan
    k = idx[0]
    r0, r1 = r[k - 1], r[k]
    return float(arc.times[k - 1] + (arc.times[k] - arc.times[k - 1]) * (r0 - R / 2) / (r0 - r1))


def inner_angular_sweep(epsilons: Iterable[float], boundary_pairs: int, partitions: Sequence[Partition] | None,
                        cfg: PotentialConfig, offsets: Sequence[float] | None = None) -> InnerMomentumReport:
    """max |theta-dot(0)| of inner arcs over sampled endpoint pairs and partitions, per epsilon."""
    eps_list = list(epsilons)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilons must be decreasing")
    partitions = partitions or Partition.all(len(cfg.centres))
    if offsets is None:
        offsets = (cfg.chord_angle, math.pi / 2, math.pi, 3 * math.pi / 2)
    pairs = sweep_pairs(boundary_pairs, offsets)
    rows = []
    for eps in eps_list:
        c = cfg.with_epsilon(eps)
        worst, worst_id, min_S, n_ok, errs = -1.0, "", math.inf, 0, []
        for (a, b), P in itertools.product(pairs, partitions):
            case = f"theta1={a:.4f},theta2={b % (2 * math.pi):.4f},P={P.label()}"
            try:
                sol = solve_inner(boundary_point(a, c.R), boundary_point(b, c.R), P, c)
            except Exception as exc:  # recorded, the sweep continues
                errs.append(f"{case}: {exc}")
                continue
            n_ok += 1
            th = abs(sol.initial_angular_speed)
            if th > worst:
                worst, worst_id = th, case
            min_S = min(min_S, exit_time_half_radius(sol.arc, c.R))
        rows.append(InnerRow(float(eps), worst if n_ok else math.nan, worst_id, min_S, n_ok, errs))
    return InnerMomentumReport(rows)
