"""Junction optimization for broken geodesics that alternate outer and inner arcs.

Junction ``k`` sits at angle ``theta_k`` on the circle of radius R; there are
``2n`` of them, indexed cyclically.  Outer leg ``j`` runs from junction ``2j``
to ``2j+1`` (chord at most delta), inner leg ``j`` from ``2j+1`` to ``2j+2``
and separates the centres according to ``partitions[j]``.

The derivative of a Jacobi length with respect to its end point is ``v/sqrt(2)``
(and ``-v/sqrt(2)`` at the start), so for every junction

    dF/dtheta_k = (R / sqrt(2)) <v_in(end) - v_out(start), tau(theta_k)>.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .inner_arcs import (ConvexNeighborhood, InnerSolution, Partition, TruncationPoint, local_geodesic,
                         make_neighborhood, solve_inner, truncation_point)
from .integrator import Arc
from .outer_arcs import SHOOT_TOL, BoundaryPoint, OuterSolution, solve_outer
from .potential import PotentialConfig, angular_speed, boundary_point, tangent, wrap_angle

SQRT2 = math.sqrt(2.0)
C1_TOLERANCE = 1e-5
# per-junction gradient tolerance; the tangential velocity mismatch is sqrt(2)/R times it
GRAD_TOL = 2.5e-8
F_NOISE = 1e-12


class ConstraintError(ValueError):
    pass


class NeighborhoodExitError(ValueError):
    pass


class LegError(RuntimeError):
    def __init__(self, leg: str, cause: Exception):
        self.leg = leg
        self.cause = cause
        super().__init__(f"{leg}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class JunctionVector:
    angles: tuple
    partitions: tuple

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "partitions", tuple(self.partitions))
        if len(self.partitions) < 1:
            raise ValueError("n must be >= 1")
        if len(self.angles) != 2 * len(self.partitions):
            raise ValueError("need 2n angles for n partition symbols")

    @property
    def n(self) -> int:
        return len(self.partitions)

    def point(self, k: int, R: float) -> np.ndarray:
        return boundary_point(self.angles[k % (2 * self.n)], R)

    def with_angle(self, k: int, theta: float) -> "JunctionVector":
        a = list(self.angles)
        a[k] = theta
        return JunctionVector(a, self.partitions)

    def with_angles(self, angles) -> "JunctionVector":
        return JunctionVector(angles, self.partitions)

    def rotated(self, phi: float) -> "JunctionVector":
        return JunctionVector([a + phi for a in self.angles], self.partitions)


def partner(k: int) -> int:
    return k + 1 if k % 2 == 0 else k - 1


def chord(jv: JunctionVector, k: int, R: float) -> float:
    d = wrap_angle(jv.angles[partner(k)] - jv.angles[k])
    return 2.0 * R * abs(math.sin(0.5 * d))


def interior_margin(jv: JunctionVector, cfg: PotentialConfig) -> list[float]:
    """delta minus the chord to the paired junction, for every junction."""
    return [cfg.delta - chord(jv, k, cfg.R) for k in range(2 * jv.n)]


def is_feasible(jv: JunctionVector, cfg: PotentialConfig) -> bool:
    return all(m >= -1e-15 for m in interior_margin(jv, cfg))


def initial_junctions(partitions: Sequence[Partition], cfg: PotentialConfig, phase: float = 0.3,
                      chord_fraction: float = 0.5) -> JunctionVector:
    """Pairs spread evenly around the circle, each pair at a fraction of the maximal chord."""
    n = len(partitions)
    half = chord_fraction * cfg.chord_angle
    angles = []
    for j in range(n):
        a = phase + 2 * math.pi * j / n
        angles += [a, a + half]
    return JunctionVector(angles, partitions)


# --------------------------------------------------------------------------- legs

@dataclass
class Legs:
    outer: list
    inner: list

    @property
    def F(self) -> float:
        return sum(o.length for o in self.outer) + sum(i.length for i in self.inner)

    def incoming(self, k: int) -> Arc:
        n = len(self.outer)
        return self.outer[k // 2].arc if k % 2 else self.inner[(k // 2 - 1) % n].arc

    def outgoing(self, k: int) -> Arc:
        return self.inner[k // 2].arc if k % 2 else self.outer[k // 2].arc


class LegSolver:
    """Solves legs with warm starts so that each leg stays on one solution branch."""

    def __init__(self, cfg: PotentialConfig, tol: float = SHOOT_TOL, energy_tol: float = 1e-9):
        self.cfg = cfg
        self.tol = tol
        self.energy_tol = energy_tol
        self.outer_alpha: dict = {}
        self.inner_alpha: dict = {}
        self.inner_len: dict = {}

    def outer(self, j: int, ta: float, tb: float) -> OuterSolution:
        R = self.cfg.R
        try:
            sol = solve_outer(BoundaryPoint(ta, R), BoundaryPoint(tb, R), self.cfg, self.tol,
                              self.outer_alpha.get(j), self.energy_tol)
        except Exception as exc:
            raise LegError(f"outer leg {j}", exc) from exc
        self.outer_alpha[j] = sol.alpha
        return sol

    def inner(self, j: int, ta: float, tb: float, partition: Partition, cold: bool = False) -> InnerSolution:
        R = self.cfg.R
        p1, p2 = boundary_point(ta, R), boundary_point(tb, R)
        guess = None if cold else self.inner_alpha.get(j)
        sol = None
        if guess is not None:
            try:
                sol = solve_inner(p1, p2, partition, self.cfg, self.tol, alpha_guess=guess,
                                  ref_length=self.inner_len[j], energy_tol=self.energy_tol)
            except Exception:
                sol = None
        if sol is None:
            try:
                sol = solve_inner(p1, p2, partition, self.cfg, self.tol, energy_tol=self.energy_tol)
            except Exception as exc:
                raise LegError(f"inner leg {j}", exc) from exc
        self.inner_alpha[j] = sol.alpha
        self.inner_len[j] = sol.length
        return sol

    def all(self, jv: JunctionVector) -> Legs:
        a = jv.angles
        n = jv.n
        outer = [self.outer(j, a[2 * j], a[2 * j + 1]) for j in range(n)]
        inner = [self.inner(j, a[2 * j + 1], a[(2 * j + 2) % (2 * n)], jv.partitions[j]) for j in range(n)]
        return Legs(outer, inner)

    def update(self, legs: Legs, jv: JunctionVector, k: int) -> Legs:
        """Re-solve only the two legs adjacent to junction ``k``."""
        a = jv.angles
        n = jv.n
        outer = list(legs.outer)
        inner = list(legs.inner)
        j = k // 2
        outer[j] = self.outer(j, a[2 * j], a[2 * j + 1])
        i = j if k % 2 else (j - 1) % n
        inner[i] = self.inner(i, a[2 * i + 1], a[(2 * i + 2) % (2 * n)], jv.partitions[i])
        return Legs(outer, inner)


def junction_gradient(legs: Legs, jv: JunctionVector, k: int, R: float) -> float:
    v_in = legs.incoming(k).velocities[-1]
    v_out = legs.outgoing(k).velocities[0]
    return R / SQRT2 * float((v_in - v_out) @ tangent(jv.angles[k]))


def gradient(legs: Legs, jv: JunctionVector, R: float) -> np.ndarray:
    return np.array([junction_gradient(legs, jv, k, R) for k in range(2 * jv.n)])


def eval_F(jv: JunctionVector, cfg: PotentialConfig, solver: LegSolver | None = None) -> float:
    """Total Jacobi length of the n outer and n inner legs."""
    return (solver or LegSolver(cfg)).all(jv).F


# --------------------------------------------------------------------------- junction surrogates

@dataclass
class JunctionContext:
    k: int
    jv: JunctionVector
    nbhd: ConvexNeighborhood
    truncation: TruncationPoint
    fixed_theta: float  # the paired junction held fixed
    outer_alpha: float


def junction_context(k: int, jv: JunctionVector, cfg: PotentialConfig,
                     solver: LegSolver | None = None) -> JunctionContext:
    """Neighbourhood and truncation point attached to junction ``k`` of ``jv``."""
    solver = solver or LegSolver(cfg)
    legs = solver.all(jv)
    n = jv.n
    if k % 2:
        inner_arc = legs.inner[k // 2].arc
        alpha = legs.outer[k // 2].alpha
    else:
        inner_arc = legs.inner[(k // 2 - 1) % n].arc.reversed()
        alpha = legs.outer[k // 2].alpha
    nb = make_neighborhood(jv.point(k, cfg.R), cfg)
    while True:
        try:
            tp = truncation_point(inner_arc, nb, cfg)
            break
        except Exception:
            if nb.radius < 1e-3 * cfg.R:
                raise
            nb = make_neighborhood(nb.center, cfg, radius=0.5 * nb.radius)
    return JunctionContext(k, jv, nb, tp, jv.angles[partner(k)], alpha)


def _G_parts(k, theta, ctx: JunctionContext, cfg: PotentialConfig):
    p = boundary_point(theta, cfg.R)
    if not ctx.nbhd.contains(p):
        raise NeighborhoodExitError(f"junction {k} left its neighbourhood")
    if 2 * cfg.R * abs(math.sin(0.5 * wrap_angle(theta - ctx.fixed_theta))) > cfg.delta * (1 + 1e-12):
        raise ConstraintError(f"junction {k} violates the chord constraint")
    R = cfg.R
    if k % 2:
        out = solve_outer(BoundaryPoint(ctx.fixed_theta, R), BoundaryPoint(theta, R), cfg, alpha_guess=ctx.outer_alpha)
    else:
        out = solve_outer(BoundaryPoint(theta, R), BoundaryPoint(ctx.fixed_theta, R), cfg, alpha_guess=ctx.outer_alpha)
    loc = local_geodesic(p, ctx.truncation.point, ctx.nbhd, cfg)
    return out, loc


def eval_G(k: int, theta: float, jv: JunctionVector, cfg: PotentialConfig,
           context: JunctionContext | None = None) -> float:
    """Outer length into the junction plus the local geodesic length to the truncation point."""
    ctx = context or junction_context(k, jv, cfg)
    out, loc = _G_parts(k, theta, ctx, cfg)
    return out.length + loc.jacobi_length


def grad_G(k: int, theta: float, jv: JunctionVector, cfg: PotentialConfig,
           context: JunctionContext | None = None) -> float:
    """dG/dtheta from the velocity jump between the outer leg and the local geodesic."""
    ctx = context or junction_context(k, jv, cfg)
    out, loc = _G_parts(k, theta, ctx, cfg)
    v_loc = loc.arc.velocities[0] if loc.arc is not None else np.zeros(2)
    if k % 2:
        dv = out.arc.velocities[-1] - v_loc
    else:
        # the local geodesic is run from p towards p-tilde; reversing it gives the incoming velocity
        dv = -v_loc - out.arc.velocities[0]
    return cfg.R / SQRT2 * float(dv @ tangent(theta))


def boundary_variation_derivative(k: int, jv: JunctionVector, cfg: PotentialConfig,
                                  context: JunctionContext | None = None) -> float:
    """Derivative of G_k when junction ``k`` moves along the circle towards its paired junction."""
    towards = math.copysign(1.0, wrap_angle(jv.angles[partner(k)] - jv.angles[k]))
    return towards * grad_G(k, jv.angles[k], jv, cfg, context)


# --------------------------------------------------------------------------- minimization

@dataclass
class JunctionReport:
    index: int
    mismatch: list
    mismatch_norm: float
    tangential_mismatch: float
    radial_in: float
    radial_out: float
    speed_mismatch: float
    radial_sign_ok: bool
    gradient: float
    margin: float


@dataclass
class GlueReport:
    junctions: list
    F: float
    grad_norm: float
    c1_verdict: bool
    c1_tolerance: float = C1_TOLERANCE
    converged: bool = False
    constraint_active: bool = False
    iterations: int = 0
    F_history: list = field(default_factory=list)
    uniqueness_deviation: float | None = None
    uniqueness_ok: bool | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "F": self.F, "grad_norm": self.grad_norm, "c1_verdict": self.c1_verdict,
            "c1_tolerance": self.c1_tolerance, "converged": self.converged,
            "constraint_active": self.constraint_active, "iterations": self.iterations,
            "uniqueness_deviation": self.uniqueness_deviation, "uniqueness_ok": self.uniqueness_ok,
            "message": self.message,
            "junctions": [j.__dict__ for j in self.junctions],
        }


def _project(angles: np.ndarray, beta: float) -> np.ndarray:
    a = angles.copy()
    for j in range(len(a) // 2):
        d = wrap_angle(a[2 * j + 1] - a[2 * j])
        if abs(d) > beta:
            excess = 0.5 * (abs(d) - beta) * math.copysign(1.0, d)
            a[2 * j] += excess
            a[2 * j + 1] -= excess
    return a


def _active(angles, beta, k, slack=1e-12):
    d = wrap_angle(angles[partner(k)] - angles[k])
    return abs(d) >= beta - slack, d


def _projected(g: np.ndarray, angles, beta) -> np.ndarray:
    out = g.copy()
    for k in range(len(g)):
        act, d = _active(angles, beta, k)
        # descent direction -g; blocked if it increases the distance to the partner
        if act and -g[k] * d < 0:
            out[k] = 0.0
    return out


def _line_junction(solver, legs, jv, k, g_k, cfg, beta, h_est):
    """A few safeguarded secant steps on dF/dtheta_k with the other junctions fixed."""
    F = legs.F
    th = jv.angles[k]
    lo = jv.angles[partner(k)] - beta
    hi = jv.angles[partner(k)] + beta
    # keep the branch of the partner angle
    lo, hi = th + wrap_angle(lo - th), th + wrap_angle(hi - th)
    lo, hi = min(lo, hi), max(lo, hi)
    for _ in range(4):
        if abs(g_k) <= GRAD_TOL:
            break
        step = -g_k / h_est if h_est > 0 else -math.copysign(1e-3, g_k)
        step = max(min(step, 0.05), -0.05)
        t_new = min(max(th + step, lo), hi)
        if t_new == th:
            break
        jv_new = jv.with_angle(k, t_new)
        try:
            legs_new = solver.update(legs, jv_new, k)
        except Exception:
            break
        F_new = legs_new.F
        g_new = junction_gradient(legs_new, jv_new, k, cfg.R)
        if F_new > F + F_NOISE * abs(F):
            step *= 0.5
            break
        if t_new != th and g_new != g_k:
            h_sec = (g_new - g_k) / (t_new - th)
            if h_sec > 0:
                h_est = h_sec
        jv, legs, F, th, g_k = jv_new, legs_new, F_new, t_new, g_new
    return jv, legs


def _hessian(solver, legs, jv, cfg, h=1e-6):
    m = 2 * jv.n
    H = np.zeros((m, m))
    for k in range(m):
        cols = []
        for s in (+1, -1):
            jv_s = jv.with_angle(k, jv.angles[k] + s * h)
            legs_s = solver.update(legs, jv_s, k)
            cols.append(gradient(legs_s, jv_s, cfg.R))
        H[:, k] = (cols[0] - cols[1]) / (2 * h)
    solver.update(legs, jv, k)  # restore warm starts at the current point
    return 0.5 * (H + H.T)


def minimize_F(initial: JunctionVector, cfg: PotentialConfig, tol: float = GRAD_TOL, max_iter: int = 60,
               gauss_seidel_sweeps: int = 3, solver: LegSolver | None = None):
    """Projected block-coordinate descent followed by a projected Newton polish.

    Returns ``(jv, report)``.  ``report.converged`` is false when the
    iteration budget is exhausted; ``report.constraint_active`` marks a
    minimizer with some chord equal to delta.
    """
    if not is_feasible(initial, cfg):
        raise ConstraintError("initial junctions violate the chord constraint")
    solver = solver or LegSolver(cfg)
    beta = cfg.chord_angle
    R = cfg.R
    jv = initial
    legs = solver.all(jv)
    history = [legs.F]
    m = 2 * jv.n
    g = gradient(legs, jv, R)
    # block-coordinate sweeps: even junctions, then odd
    h_est = np.full(m, 1.0)
    for _ in range(gauss_seidel_sweeps):
        for k in list(range(0, m, 2)) + list(range(1, m, 2)):
            g_k = junction_gradient(legs, jv, k, R)
            jv, legs = _line_junction(solver, legs, jv, k, g_k, cfg, beta, h_est[k])
            history.append(legs.F)
        g = gradient(legs, jv, R)
        if np.max(np.abs(_projected(g, jv.angles, beta))) <= tol:
            break
    radius = 0.02
    it = 0
    converged = False
    message = ""
    while it < max_iter:
        gp = _projected(g, jv.angles, beta)
        if np.max(np.abs(gp)) <= tol:
            converged = True
            break
        it += 1
        try:
            H = _hessian(solver, legs, jv, cfg)
            legs = solver.all(jv)
        except Exception as exc:
            message = f"Hessian probe failed: {exc}"
            break
        w, U = np.linalg.eigh(H)
        w = np.maximum(np.abs(w), 1e-8 * max(1.0, np.abs(w).max()))
        free = np.array([not (_active(jv.angles, beta, k)[0] and gp[k] == 0.0) for k in range(m)])
        step = -(U @ ((U.T @ gp) / w))
        step[~free] = 0.0
        accepted = False
        while radius > 1e-14:
            s = step * min(1.0, radius / max(np.max(np.abs(step)), 1e-300))
            trial = _project(np.array(jv.angles) + s, beta)
            jv_t = jv.with_angles(trial)
            try:
                legs_t = solver.all(jv_t)
            except Exception:
                legs = solver.all(jv)
                radius *= 0.25
                continue
            g_t = gradient(legs_t, jv_t, R)
            F_t = legs_t.F
            better = F_t < legs.F or (F_t <= legs.F + F_NOISE * abs(legs.F)
                                      and np.max(np.abs(_projected(g_t, trial, beta))) < np.max(np.abs(gp)))
            if better:
                full = np.max(np.abs(s)) >= np.max(np.abs(step)) * (1 - 1e-12)
                jv, legs, g = jv_t, legs_t, g_t
                history.append(legs.F)
                radius = radius if full else 2.0 * radius
                accepted = True
                break
            legs = solver.all(jv)
            radius *= 0.25
        if not accepted:
            message = "trust region collapsed"
            break
    else:
        message = "iteration budget exhausted"
    gp = _projected(g, jv.angles, beta)
    margins = interior_margin(jv, cfg)
    active = any(mg <= 1e-12 for mg in margins)
    report = check_C1(jv, cfg, legs=legs, probe_uniqueness=False)
    report.converged = converged
    report.constraint_active = active
    report.iterations = it
    report.F_history = history
    report.grad_norm = float(np.max(np.abs(gp)))
    report.message = message or ("converged on the constraint boundary" if active and converged else "")
    return jv, report


# --------------------------------------------------------------------------- verification

def _sup_distance(a: Arc, b: Arc) -> float:
    t = np.union1d(a.times, b.times)
    t = t[t <= min(a.duration, b.duration)]
    return float(np.max(np.linalg.norm(a.position_at(t) - b.position_at(t), axis=1)))


def uniqueness_probe(jv: JunctionVector, cfg: PotentialConfig, legs: Legs, shifts=(1e-3, -1e-3)) -> float:
    """Largest deviation of inner legs re-solved from perturbed starts (and from a cold start)."""
    worst = 0.0
    n = jv.n
    a = jv.angles
    for j in range(n):
        ref = legs.inner[j]
        p1, p2 = boundary_point(a[2 * j + 1], cfg.R), boundary_point(a[(2 * j + 2) % (2 * n)], cfg.R)
        trials = []
        for s in shifts:
            trials.append(solve_inner(p1, p2, jv.partitions[j], cfg, SHOOT_TOL, alpha_guess=ref.alpha + s,
                                      ref_length=ref.length))
        trials.append(solve_inner(p1, p2, jv.partitions[j], cfg, SHOOT_TOL))
        for t in trials:
            worst = max(worst, _sup_distance(ref.arc, t.arc), abs(t.arc.duration - ref.arc.duration))
    return worst


def check_C1(jv: JunctionVector, cfg: PotentialConfig, c1_tolerance: float = C1_TOLERANCE,
             legs: Legs | None = None, probe_uniqueness: bool = True) -> GlueReport:
    """Velocity matching at every junction, split into tangential, speed and radial parts."""
    legs = legs or LegSolver(cfg).all(jv)
    R = cfg.R
    margins = interior_margin(jv, cfg)
    rows = []
    for k in range(2 * jv.n):
        v_in = legs.incoming(k).velocities[-1]
        v_out = legs.outgoing(k).velocities[0]
        x = jv.point(k, R)
        e = x / np.linalg.norm(x)
        tau = tangent(jv.angles[k])
        dv = v_in - v_out
        r_in, r_out = float(v_in @ e), float(v_out @ e)
        # odd junctions: both arcs move inwards; even junctions: both outwards
        sign_ok = (r_in < 0 and r_out < 0) if k % 2 else (r_in > 0 and r_out > 0)
        rows.append(JunctionReport(
            k, dv.tolist(), float(np.linalg.norm(dv)), float(dv @ tau), r_in, r_out,
            abs(float(np.linalg.norm(v_in) - np.linalg.norm(v_out))), sign_ok,
            R / SQRT2 * float(dv @ tau), margins[k]))
    g = np.array([r.gradient for r in rows])
    verdict = all(r.mismatch_norm <= c1_tolerance and r.radial_sign_ok for r in rows)
    report = GlueReport(rows, legs.F, float(np.max(np.abs(g))), verdict, c1_tolerance)
    if probe_uniqueness:
        try:
            dev = uniqueness_probe(jv, cfg, legs)
            report.uniqueness_deviation = dev
            report.uniqueness_ok = dev <= 1e-6
        except Exception as exc:
            report.uniqueness_ok = False
            report.message = f"uniqueness probe failed: {exc}"
    return report


# --------------------------------------------------------------------------- trajectory

@dataclass
class GluedTrajectory:
    arcs: list
    junction_times: list
    period: float
    closure_error: float
    max_position_jump: float
    max_velocity_jump: float

    @property
    def closed(self) -> bool:
        return self.closure_error <= 1e-8

    def to_csv(self) -> str:
        """Rows ``t, x, y, vx, vy, kind, arc_id, junction_flag``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "x", "y", "vx", "vy", "kind", "arc_id", "junction_flag"))
        for i, (arc, t0) in enumerate(zip(self.arcs, self.junction_times)):
            last = len(arc.times) - 1
            for q, (t, x, v) in enumerate(zip(arc.times, arc.positions, arc.velocities)):
                flag = 1 if q in (0, last) else 0
                w.writerow([repr(float(t + t0)), repr(float(x[0])), repr(float(x[1])),
                            repr(float(v[0])), repr(float(v[1])), arc.kind, i, flag])
        return buf.getvalue()


def build_trajectory(jv: JunctionVector, cfg: PotentialConfig, legs: Legs | None = None) -> GluedTrajectory:
    """Concatenate outer and inner legs with cumulative junction times."""
    legs = legs or LegSolver(cfg).all(jv)
    arcs = []
    for o, i in zip(legs.outer, legs.inner):
        arcs += [o.arc, i.arc]
    times = [0.0]
    for a in arcs[:-1]:
        times.append(times[-1] + a.duration)
    period = times[-1] + arcs[-1].duration
    pos_jump = max(float(np.linalg.norm(a.positions[-1] - b.positions[0])) for a, b in zip(arcs, arcs[1:]))
    vel_jump = max(float(np.linalg.norm(a.velocities[-1] - b.velocities[0]))
                   for a, b in zip(arcs, arcs[1:] + arcs[:1]))
    closure = float(np.linalg.norm(arcs[-1].positions[-1] - arcs[0].positions[0]))
    return GluedTrajectory(arcs, times, period, closure, max(pos_jump, closure), vel_jump)
