"""Exterior arcs between two points of the gluing circle, and the arrival angular-speed sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .integrator import Arc, IntegrationError, _make_arc, _raise_for, shoot
from .potential import PotentialConfig, angular_speed, boundary_point, wrap_angle

SHOOT_TOL = 1e-10


class OuterSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundaryPoint:
    theta: float
    R: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % (2 * math.pi))

    @property
    def position(self) -> np.ndarray:
        return boundary_point(self.theta, self.R)


@dataclass
class OuterSolution:
    arc: Arc
    departure: BoundaryPoint
    arrival: BoundaryPoint
    alpha: float  # departure direction measured from the outward normal
    arrival_error: float

    @property
    def T_ext(self) -> float:
        return self.arc.duration

    @property
    def length(self) -> float:
        return self.arc.jacobi_length

    @property
    def terminal_angular_speed(self) -> float:
        return terminal_angular_speed(self)


def _initial_state(theta_a: float, alpha: float, cfg: PotentialConfig) -> np.ndarray:
    x = boundary_point(theta_a, cfg.R)
    s = math.sqrt(2.0 * (K.potential(x[0], x[1], *cfg.kernel_args()) - 1.0))
    psi = theta_a + alpha
    return np.array([x[0], x[1], s * math.cos(psi), s * math.sin(psi), 0.0])


def _arrival_residual(theta_a, theta_b, alpha, cfg, tol):
    s0 = _initial_state(theta_a, alpha, cfg)
    status, t, s, *_ = shoot(s0, cfg.R, -1, cfg, tol=tol, max_time=10.0)
    if status != K.EVENT:
        if status == K.REACHED_TMAX:
            raise IntegrationError("outer arc did not return to the circle")
        _raise_for(status, t, s, cfg)
    return wrap_angle(math.atan2(s[1], s[0]) - theta_b)


def solve_outer(p_a: BoundaryPoint, p_b: BoundaryPoint, cfg: PotentialConfig,
                tol: float = SHOOT_TOL, alpha_guess: float | None = None,
                energy_tol: float = 1e-9) -> OuterSolution:
    """Shoot from ``p_a`` over the departure angle to arrive at ``p_b``.

    The bracket is grown from the radial direction towards the side of the
    target, which selects the short exterior arc (swept angle below pi).
    """
    ta, tb = p_a.theta, p_b.theta
    gap = wrap_angle(tb - ta)
    if gap == 0.0:
        raise ValueError("p_a and p_b coincide")

    def f(a):
        return _arrival_residual(ta, tb, a, cfg, energy_tol)

    lim = 0.5 * math.pi - 1e-9
    warm = alpha_guess is not None and abs(alpha_guess) < lim
    a_lo = alpha_guess if warm else 0.0
    f_lo = f(a_lo)
    # the arrival angle increases with alpha across the admissible range
    direction = -1.0 if f_lo > 0 else 1.0
    step = 1e-6 if warm else 1e-3
    a_hi, f_hi = a_lo, f_lo
    while f_lo != 0:
        a_hi = min(max(a_lo + direction * step, -lim), lim)
        f_hi = f(a_hi)
        if f_hi == 0 or (f_hi > 0) != (f_lo > 0):
            break
        if abs(a_hi) >= lim:
            raise OuterSolveError("shooting bracket failed")
        a_lo, f_lo = a_hi, f_hi
        step *= 2.0
    if f_lo == 0:
        alpha = a_lo
    elif f_hi == 0:
        alpha = a_hi
    else:
        alpha = brentq(f, min(a_lo, a_hi), max(a_lo, a_hi), xtol=1e-15,
                       rtol=4 * np.finfo(float).eps, maxiter=200)
    s0 = _initial_state(ta, alpha, cfg)
    status, t, s, ts, states, n = shoot(s0, cfg.R, -1, cfg, tol=energy_tol, max_time=10.0, store=True)
    if status != K.EVENT:
        _raise_for(status, t, s, cfg)
    arc = _make_arc(ts, states, n, cfg, "outer", energy_tol)
    err = float(np.linalg.norm(arc.positions[-1] - p_b.position))
    if err > tol:
        raise OuterSolveError(f"arrival error {err:.3g} exceeds {tol:.3g}")
    return OuterSolution(arc, p_a, p_b, alpha, err)


def terminal_angular_speed(sol: OuterSolution) -> float:
    return angular_speed(sol.arc.positions[-1], sol.arc.velocities[-1])


@dataclass
class C1Row:
    epsilon: float
    min_abs_theta_dot: float
    max_abs_theta_dot: float
    argmin_pair: tuple[float, float]
    n_ok: int
    errors: list[str] = field(default_factory=list)


@dataclass
class C1Report:
    delta: float
    rows: list[C1Row]
    C2: float | None

    def C1(self, epsilon: float) -> float:
        for r in self.rows:
            if r.epsilon == epsilon:
                return r.min_abs_theta_dot
        raise KeyError(epsilon)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "C2": self.C2,
            "rows": [
                {"epsilon": r.epsilon, "min_abs_theta_dot": r.min_abs_theta_dot,
                 "max_abs_theta_dot": r.max_abs_theta_dot, "argmin_pair": list(r.argmin_pair),
                 "n_ok": r.n_ok, "errors": r.errors}
                for r in self.rows
            ],
        }


def chord_pairs(delta: float, R: float, n_pairs: int) -> list[tuple[float, float]]:
    """Ordered pairs at chord ``delta``; stratified midpoint angles, both orientations."""
    half = math.asin(delta / (2 * R))
    out = []
    for i in range(n_pairs):
        mid = 2 * math.pi * (i + 0.5) / n_pairs
        out.append((mid - half, mid + half))
        out.append((mid + half, mid - half))
    return out


def c1_sweep(delta: float, epsilons, n_pairs: int, cfg: PotentialConfig,
             tol: float = SHOOT_TOL) -> C1Report:
    """min over chord-``delta`` pairs of |theta-dot| at the outer arrival, per epsilon."""
    if n_pairs < 16:
        raise ValueError("n_pairs must be >= 16")
    base = PotentialConfig(cfg.centres, cfg.epsilon, cfg.R, delta)
    pairs = chord_pairs(delta, cfg.R, n_pairs)
    rows = []
    for eps in epsilons:
        c = base.with_epsilon(eps)
        vals, errs = [], []
        for ta, tb in pairs:
            try:
                sol = solve_outer(BoundaryPoint(ta, c.R), BoundaryPoint(tb, c.R), c, tol)
                vals.append((abs(terminal_angular_speed(sol)), (ta % (2 * math.pi), tb % (2 * math.pi))))
            except Exception as exc:  # recorded, the sweep continues
                errs.append(f"pair ({ta:.6f}, {tb:.6f}): {exc}")
        if vals:
            i = int(np.argmin([v for v, _ in vals]))
            rows.append(C1Row(float(eps), vals[i][0], max(v for v, _ in vals), vals[i][1], len(vals), errs))
        else:
            rows.append(C1Row(float(eps), math.nan, math.nan, (math.nan, math.nan), 0, errs))
    C2 = next((r.min_abs_theta_dot for r in rows if r.epsilon == 0.0), None)
    if C2 is None:
        ta, tb = pairs[0]
        c0 = base.with_epsilon(0.0)
        C2 = abs(terminal_angular_speed(solve_outer(BoundaryPoint(ta, c0.R), BoundaryPoint(tb, c0.R), c0, tol)))
    return C1Report(delta, rows, C2)
