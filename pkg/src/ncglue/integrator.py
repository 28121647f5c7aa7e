"""Fixed-energy integration of x'' = grad V, circle-crossing events and Jacobi lengths."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from . import _kernels as K
from .potential import HillBoundaryError, PotentialConfig, SingularityError

ArcKind = Literal["outer", "inner", "local_geodesic"]

RTOL = 1e-12
ATOL = 1e-13
DEFAULT_TOL = 1e-9
# Outer arcs of chord ~delta peak just inside the Hill boundary (V - 1 ~ 2e-3),
# so the workspace guard is placed at V - 1 = HILL_GUARD.
HILL_GUARD = 1e-6
MAX_STEPS = 200_000


class IntegrationError(RuntimeError):
    pass


class CollisionError(IntegrationError):
    pass


class NoCrossingError(IntegrationError):
    pass


@dataclass(frozen=True)
class State:
    position: np.ndarray
    velocity: np.ndarray

    def energy_residual(self, cfg: PotentialConfig) -> float:
        v = self.velocity
        return 0.5 * float(v @ v) - K.potential(self.position[0], self.position[1], *cfg.kernel_args()) + 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1], self.velocity[0], self.velocity[1], 0.0])

    def reversed(self) -> "State":
        return State(self.position.copy(), -self.velocity)


@dataclass
class Arc:
    """Time-sampled solution segment on the energy shell.

    ``lengths`` is the Jacobi length accumulated from t = 0, integrated as an
    extra ODE component.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    lengths: np.ndarray
    kind: str
    max_energy_residual: float
    valid: bool = True

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def jacobi_length(self) -> float:
        return float(self.lengths[-1])

    @property
    def start(self) -> State:
        return State(self.positions[0].copy(), self.velocities[0].copy())

    @property
    def end(self) -> State:
        return State(self.positions[-1].copy(), self.velocities[-1].copy())

    def __len__(self):
        return len(self.times)

    @property
    def samples(self) -> list[tuple[float, State]]:
        return [(float(t), State(x, v)) for t, x, v in zip(self.times, self.positions, self.velocities)]

    def reversed(self) -> "Arc":
        """The time-reversed arc (the flow is reversible)."""
        T = self.duration
        return Arc(T - self.times[::-1], self.positions[::-1].copy(), -self.velocities[::-1],
                   self.jacobi_length - self.lengths[::-1], self.kind, self.max_energy_residual, self.valid)

    def position_at(self, t) -> np.ndarray:
        """Linear interpolation of the (dense) samples."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.positions[:, 0]),
                         np.interp(t, self.times, self.positions[:, 1])], axis=-1)


@dataclass(frozen=True)
class CrossingEvent:
    time: float
    radius: float
    direction: Literal["outward", "inward"]
    state: State


def _raise_for(status: int, t: float, s: np.ndarray, cfg: PotentialConfig):
    if status == K.COLLISION:
        d = np.hypot(s[0] - cfg._cx, s[1] - cfg._cy)
        raise CollisionError(f"entered collision radius of centre {int(np.argmin(d))} at t={t:.6g}")
    if status == K.HILL:
        raise HillBoundaryError(f"arc reached the Hill-region guard at t={t:.6g}")
    if status == K.MAX_STEPS:
        raise IntegrationError("step count exhausted")
    if status == K.STEP_UNDERFLOW:
        raise IntegrationError(f"step size underflow at t={t:.6g}")


def _check_start(s0: np.ndarray, cfg: PotentialConfig, tol: float):
    d = np.hypot(s0[0] - cfg._cx, s0[1] - cfg._cy)
    if d.min() == 0:
        raise SingularityError(int(np.argmin(d)))
    res = abs(K.energy_residual(s0, *cfg.kernel_args()))
    if res > tol:
        raise ValueError(f"start state violates the energy relation by {res:.3g}")


def _run(s0, t_max, cfg, *, tol, radius=0.0, direction=0, store=True, nv=5,
         collision=True, hill_guard=HILL_GUARD):
    coll_r = cfg.collision_radius if collision else 0.0
    return K.propagate(np.ascontiguousarray(s0, dtype=float), float(t_max), *cfg.kernel_args(), nv,
                       RTOL, ATOL, tol, float(radius), int(direction), coll_r, 1.0 + hill_guard,
                       MAX_STEPS, store)


def _make_arc(ts, states, n, cfg, kind, tol, dense=True) -> Arc:
    ts = ts[:n].copy()
    states = np.ascontiguousarray(states[:n, :5])
    if dense and n > 1:
        ts, states = K.densify(ts, states, *cfg.kernel_args(), tol)
    res = np.array([abs(K.energy_residual(s, *cfg.kernel_args())) for s in states])
    mres = float(res.max())
    return Arc(ts, states[:, :2].copy(), states[:, 2:4].copy(), states[:, 4].copy(), kind, mres,
               valid=mres <= tol)


def start_array(start: State) -> np.ndarray:
    return np.array([start.position[0], start.position[1], start.velocity[0], start.velocity[1], 0.0])


def integrate(start: State, max_time: float, cfg: PotentialConfig, tol: float = DEFAULT_TOL,
              kind: ArcKind = "outer", dense: bool = True, collision: bool = True) -> Arc:
    """Integrate from ``start`` for ``max_time`` time units."""
    s0 = start_array(start)
    _check_start(s0, cfg, tol)
    status, t, s, ts, states, n = _run(s0, max_time, cfg, tol=tol, collision=collision)
    if status != K.REACHED_TMAX:
        _raise_for(status, t, s, cfg)
    return _make_arc(ts, states, n, cfg, kind, tol, dense)


def integrate_until_crossing(start: State, radius: float, direction: Literal["outward", "inward"],
                             cfg: PotentialConfig, tol: float = DEFAULT_TOL, max_time: float = 20.0,
                             kind: ArcKind = "outer", dense: bool = True) -> tuple[Arc, CrossingEvent]:
    """Integrate until |x| crosses ``radius`` in the given direction."""
    s0 = start_array(start)
    _check_start(s0, cfg, tol)
    sign = 1 if direction == "outward" else -1
    status, t, s, ts, states, n = _run(s0, max_time, cfg, tol=tol, radius=radius, direction=sign)
    if status == K.REACHED_TMAX:
        raise NoCrossingError(f"no {direction} crossing of r={radius} before t={max_time}")
    if status != K.EVENT:
        _raise_for(status, t, s, cfg)
    arc = _make_arc(ts, states, n, cfg, kind, tol, dense)
    ev = CrossingEvent(float(t), float(radius), direction, State(s[:2].copy(), s[2:4].copy()))
    return arc, ev


def shoot(s0: np.ndarray, radius: float, sign: int, cfg: PotentialConfig, tol: float = DEFAULT_TOL,
          max_time: float = 20.0, variational: np.ndarray | None = None, store: bool = False):
    """Low-level crossing integration used by the shooting solvers.

    Returns ``(status, t, state, ts, states, n)`` of the raw kernel; ``state``
    carries the tangent vector when ``variational`` is given.
    """
    if variational is not None:
        s = np.empty(9)
        s[:5] = s0[:5]
        s[5:] = variational
        return _run(s, max_time, cfg, tol=tol, radius=radius, direction=sign, store=store, nv=9)
    return _run(s0, max_time, cfg, tol=tol, radius=radius, direction=sign, store=store)


def jacobi_length_of_arc(arc: Arc, cfg: PotentialConfig, rel_tol: float = 1e-6) -> float:
    """Jacobi length by quadrature of the samples.

    Two quadratures are formed, of sqrt(V - 1)|v| and of sqrt(2)(V - 1); on an
    energy-shell arc they coincide.  A ``ValueError`` is raised if they differ
    by more than ``rel_tol`` (relative).
    """
    if not arc.valid:
        raise ValueError("arc is flagged invalid")
    args = cfg.kernel_args()
    V = np.array([K.potential(x, y, *args) for x, y in arc.positions])
    if np.any(V <= 1.0):
        raise HillBoundaryError("arc leaves the Hill region")
    speed = np.hypot(arc.velocities[:, 0], arc.velocities[:, 1])
    l1 = float(np.trapezoid(np.sqrt(V - 1.0) * speed, arc.times))
    l2 = float(np.trapezoid(math.sqrt(2.0) * (V - 1.0), arc.times))
    if abs(l1 - l2) > rel_tol * max(abs(l1), 1e-300):
        raise ValueError(f"Jacobi length quadratures disagree: {l1!r} vs {l2!r}")
    return l1


CSV_COLUMNS = ("t", "x", "y", "vx", "vy", "kind", "arc_id")


def arcs_to_csv(arcs: Iterable[Arc], t_offsets: Iterable[float] | None = None) -> str:
    """Rows ``t, x, y, vx, vy, kind, arc_id`` for a sequence of arcs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    arcs = list(arcs)
    offs = list(t_offsets) if t_offsets is not None else [0.0] * len(arcs)
    for i, (arc, off) in enumerate(zip(arcs, offs)):
        for t, x, v in zip(arc.times, arc.positions, arc.velocities):
            w.writerow([repr(float(t + off)), repr(float(x[0])), repr(float(x[1])),
                        repr(float(v[0])), repr(float(v[1])), arc.kind, i])
    return buf.getvalue()
