import math

import numpy as np
import pytest

from ncglue.integrator import (CollisionError, NoCrossingError, State, arcs_to_csv, integrate,
                               integrate_until_crossing, jacobi_length_of_arc)
from ncglue.potential import speed_from_energy, symmetric_pair


def kepler():
    return symmetric_pair(epsilon=0.0)


def test_circular_orbit_period():
    # E = -1 with V = 1/r: the circular orbit has r = 1/2, speed sqrt(2), period pi / sqrt(2)
    cfg = kepler()
    period = math.pi / math.sqrt(2)
    arc = integrate(State(np.array([0.5, 0.0]), np.array([0.0, math.sqrt(2.0)])), period, cfg)
    assert np.allclose(arc.positions[-1], [0.5, 0.0], atol=1e-9)
    assert np.allclose(np.hypot(*arc.positions.T), 0.5, atol=1e-10)
    assert arc.max_energy_residual <= 1e-8


def test_radial_jacobi_length_quadrature():
    # outward radial motion: length = int sqrt(1/r - 1) dr, antiderivative sqrt(r(1-r)) + asin(sqrt(r))
    cfg = kepler()
    r0, r1 = 0.1, 0.4
    start = State(np.array([r0, 0.0]), np.array([speed_from_energy((r0, 0.0), cfg), 0.0]))
    arc, ev = integrate_until_crossing(start, r1, "outward", cfg)
    F = lambda r: math.sqrt(r * (1 - r)) + math.asin(math.sqrt(r))
    assert arc.jacobi_length == pytest.approx(F(r1) - F(r0), rel=1e-9)
    assert ev.time == pytest.approx(arc.duration)
    assert jacobi_length_of_arc(arc, cfg) == pytest.approx(arc.jacobi_length, rel=1e-6)


def test_time_reversal():
    cfg = symmetric_pair(0.05)
    x = np.array([0.3, 0.1])
    v = speed_from_energy(x, cfg) * np.array([0.2, 1.0]) / math.hypot(0.2, 1.0)
    arc = integrate(State(x, v), 0.4, cfg)
    back = integrate(arc.end.reversed(), arc.duration, cfg)
    assert np.allclose(back.positions[-1], x, atol=1e-9)
    rev = arc.reversed()
    assert np.allclose(rev.positions[0], arc.positions[-1])
    assert rev.jacobi_length == pytest.approx(arc.jacobi_length)


def test_collision_detected():
    cfg = symmetric_pair(0.05)
    # on the symmetry axis the motion stays on the axis and runs into the right-hand centre
    x = np.array([0.3, 0.0])
    v = speed_from_energy(x, cfg) * np.array([-1.0, 0.0])
    with pytest.raises(CollisionError):
        integrate(State(x, v), 2.0, cfg)


def test_off_shell_start_rejected():
    with pytest.raises(ValueError, match="energy"):
        integrate(State(np.array([0.3, 0.0]), np.array([0.0, 0.1])), 1.0, kepler())


def test_no_crossing():
    cfg = kepler()
    with pytest.raises(NoCrossingError):
        integrate_until_crossing(State(np.array([0.5, 0.0]), np.array([0.0, math.sqrt(2.0)])), 0.9, "outward", cfg,
                                 max_time=3.0)


def test_csv_header_and_rows():
    cfg = kepler()
    arc = integrate(State(np.array([0.5, 0.0]), np.array([0.0, math.sqrt(2.0)])), 0.1, cfg)
    text = arcs_to_csv([arc])
    lines = text.splitlines()
    assert lines[0] == "t,x,y,vx,vy,kind,arc_id"
    assert len(lines) == len(arc) + 1
