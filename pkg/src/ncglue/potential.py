"""N-centre potential, Jacobi weight and polar helpers at fixed energy -1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K

ENERGY = -1.0


class SingularityError(ValueError):
    """Raised when a quantity is evaluated at (or too near) a centre."""

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"evaluation at centre {index}")


class HillBoundaryError(ValueError):
    """The point lies outside the open Hill region {V > 1}."""


class OriginError(ValueError):
    pass


@dataclass(frozen=True)
class Centre:
    base_position: tuple[float, float]
    mass: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("centre mass must be positive")
        if math.hypot(*self.base_position) > 1.0 + 1e-12:
            raise ValueError("|base_position| must be <= 1")


@dataclass(frozen=True)
class PotentialConfig:
    """Centres, scale ``epsilon`` and the gluing geometry (``R``, ``delta``).

    Effective centre positions are ``epsilon * base_position``.
    """

    centres: tuple[Centre, ...]
    epsilon: float = 0.05
    R: float = 0.4
    delta: float = 0.08
    energy: float = field(default=ENERGY, init=False)

    def __post_init__(self):
        object.__setattr__(self, "centres", tuple(self.centres))
        problems = self.validation_errors()
        if problems:
            raise ValueError("; ".join(problems))
        pos = np.array([c.base_position for c in self.centres], dtype=float) * self.epsilon
        object.__setattr__(self, "_cx", np.ascontiguousarray(pos[:, 0]))
        object.__setattr__(self, "_cy", np.ascontiguousarray(pos[:, 1]))
        object.__setattr__(self, "_m", np.array([c.mass for c in self.centres], dtype=float))

    def validation_errors(self) -> list[str]:
        errs = []
        if not self.centres:
            errs.append("at least one centre is required")
        total = sum(c.mass for c in self.centres)
        if abs(total - 1.0) > 1e-9:
            errs.append(f"masses must sum to 1 (got {total:.12g})")
        if not self.epsilon >= 0:
            errs.append("epsilon must be >= 0")
        if not self.R > 0:
            errs.append("R must be positive")
        elif not 0 < self.delta < 2 * self.R:
            errs.append("delta must satisfy 0 < delta < 2R")
        if self.R > 0 and not self.epsilon < self.R / 2:
            errs.append("epsilon must be < R/2")
        return errs

    @property
    def positions(self) -> np.ndarray:
        """Effective centre positions, shape (N, 2)."""
        return np.column_stack([self._cx, self._cy])

    @property
    def masses(self) -> np.ndarray:
        return self._m.copy()

    @property
    def collision_radius(self) -> float:
        return self.epsilon / 10.0

    @property
    def chord_angle(self) -> float:
        """Angular separation on the circle of radius R matching chord ``delta``."""
        return 2.0 * math.asin(self.delta / (2.0 * self.R))

    def with_epsilon(self, epsilon: float) -> "PotentialConfig":
        return PotentialConfig(self.centres, epsilon, self.R, self.delta)

    def kernel_args(self):
        return self._cx, self._cy, self._m


def symmetric_pair(epsilon: float = 0.05, R: float = 0.4, delta: float = 0.08) -> PotentialConfig:
    """Two equal masses at ``epsilon * (+-1, 0)``."""
    return PotentialConfig((Centre((-1.0, 0.0), 0.5), Centre((1.0, 0.0), 0.5)), epsilon, R, delta)


def triangle(epsilon: float = 0.05, R: float = 0.4, delta: float = 0.08,
             phase: float = math.pi / 2) -> PotentialConfig:
    """Three equal masses on the unit circle (scaled by epsilon), 120 degrees apart."""
    cs = tuple(Centre((math.cos(phase + 2 * math.pi * k / 3), math.sin(phase + 2 * math.pi * k / 3)), 1 / 3)
               for k in range(3))
    return PotentialConfig(cs, epsilon, R, delta)


def square(epsilon: float = 0.05, R: float = 0.4, delta: float = 0.08) -> PotentialConfig:
    cs = tuple(Centre((math.cos(math.pi / 4 + k * math.pi / 2), math.sin(math.pi / 4 + k * math.pi / 2)), 0.25)
               for k in range(4))
    return PotentialConfig(cs, epsilon, R, delta)


def _check_centres(x, y, cfg: PotentialConfig):
    d = np.hypot(x - cfg._cx, y - cfg._cy)
    i = int(np.argmin(d))
    if d[i] == 0.0:
        raise SingularityError(i)


def eval_potential(x: Sequence[float], cfg: PotentialConfig) -> float:
    """V(x) = sum_i m_i / |x - epsilon c_i|."""
    x0, x1 = float(x[0]), float(x[1])
    _check_centres(x0, x1, cfg)
    return K.potential(x0, x1, *cfg.kernel_args())


def eval_gradient(x: Sequence[float], cfg: PotentialConfig) -> np.ndarray:
    x0, x1 = float(x[0]), float(x[1])
    _check_centres(x0, x1, cfg)
    return np.array(K.gradient(x0, x1, *cfg.kernel_args()))


def eval_hessian(x: Sequence[float], cfg: PotentialConfig) -> np.ndarray:
    x0, x1 = float(x[0]), float(x[1])
    _check_centres(x0, x1, cfg)
    hxx, hxy, hyy = K.hessian(x0, x1, *cfg.kernel_args())
    return np.array([[hxx, hxy], [hxy, hyy]])


def jacobi_weight(x: Sequence[float], cfg: PotentialConfig) -> float:
    """Conformal factor sqrt(V - 1) of the Jacobi metric."""
    v = eval_potential(x, cfg)
    if v <= 1.0:
        raise HillBoundaryError(f"V = {v!r} <= 1 at {tuple(x)}")
    return math.sqrt(v - 1.0)


def speed_from_energy(x: Sequence[float], cfg: PotentialConfig) -> float:
    """|v| on the energy shell: sqrt(2 (V - 1))."""
    return math.sqrt(2.0) * jacobi_weight(x, cfg)


def angular_speed(x: Sequence[float], v: Sequence[float]) -> float:
    """theta-dot of the polar decomposition, (x1 v2 - x2 v1) / |x|^2."""
    r2 = x[0] * x[0] + x[1] * x[1]
    if r2 == 0.0:
        raise OriginError("angular speed undefined at the origin")
    return (x[0] * v[1] - x[1] * v[0]) / r2


@dataclass(frozen=True)
class PolarState:
    r: float
    theta: float
    r_dot: float
    theta_dot: float

    @classmethod
    def from_cartesian(cls, x, v) -> "PolarState":
        r = math.hypot(x[0], x[1])
        if r == 0.0:
            raise OriginError("polar state undefined at the origin")
        return cls(r, math.atan2(x[1], x[0]), (x[0] * v[0] + x[1] * v[1]) / r, angular_speed(x, v))

    def to_cartesian(self) -> tuple[np.ndarray, np.ndarray]:
        e = np.array([math.cos(self.theta), math.sin(self.theta)])
        ie = np.array([-e[1], e[0]])
        return self.r * e, self.r_dot * e + self.r * self.theta_dot * ie


def boundary_point(theta: float, R: float) -> np.ndarray:
    return np.array([R * math.cos(theta), R * math.sin(theta)])


def tangent(theta: float) -> np.ndarray:
    """Unit counter-clockwise tangent (-sin, cos) of the circle at angle theta."""
    return np.array([-math.sin(theta), math.cos(theta)])


def wrap_angle(a: float) -> float:
    """Map to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi
