import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ncglue.integrator import jacobi_length_of_arc
from ncglue.outer_arcs import BoundaryPoint, c1_sweep, chord_pairs, solve_outer, terminal_angular_speed
from ncglue.potential import symmetric_pair, triangle

# Kepler arc through two points at radius R, chord delta, apocentre midway; frozen from the closed form
C2_KEPLER = 0.36089439661326916


def kepler_theta_dot(R=0.4, delta=0.08):
    half = math.asin(delta / (2 * R))
    a = 0.5
    e = brentq(lambda e: a * (1 - e * e) - R * (1 - e * math.cos(half)), 0.9, 1 - 1e-15, xtol=1e-17)
    return math.sqrt(a * (1 - e * e)) / R ** 2


def test_frozen_kepler_constant():
    assert kepler_theta_dot() == pytest.approx(C2_KEPLER, rel=1e-13)


def test_outer_arc_matches_kepler_closed_form():
    cfg = symmetric_pair(0.0)
    ta, tb = chord_pairs(cfg.delta, cfg.R, 16)[0]
    sol = solve_outer(BoundaryPoint(ta), BoundaryPoint(tb), cfg)
    assert abs(terminal_angular_speed(sol)) == pytest.approx(C2_KEPLER, rel=1e-9)
    assert sol.arc.max_energy_residual <= 1e-8
    assert sol.arrival_error <= 1e-10


@pytest.mark.parametrize("phi", [0.0, 1.1, 2.9, 4.4])
def test_rotation_invariance_at_zero_epsilon(phi):
    cfg = symmetric_pair(0.0)
    half = 0.5 * cfg.chord_angle
    base = solve_outer(BoundaryPoint(-half), BoundaryPoint(half), cfg)
    rot = solve_outer(BoundaryPoint(phi - half), BoundaryPoint(phi + half), cfg)
    assert rot.T_ext == pytest.approx(base.T_ext, abs=1e-7)
    assert rot.length == pytest.approx(base.length, abs=1e-7)
    assert abs(terminal_angular_speed(rot)) == pytest.approx(abs(terminal_angular_speed(base)), abs=1e-7)


def test_reflection_symmetry_of_pair():
    # the x-axis reflection maps the pair onto itself and reverses orientation
    cfg = symmetric_pair(0.05)
    a = solve_outer(BoundaryPoint(0.3), BoundaryPoint(0.45), cfg)
    b = solve_outer(BoundaryPoint(-0.3), BoundaryPoint(-0.45), cfg)
    assert a.length == pytest.approx(b.length, rel=1e-10)
    assert terminal_angular_speed(a) == pytest.approx(-terminal_angular_speed(b), rel=1e-9)


def test_endpoint_derivative_matches_velocity():
    cfg = triangle(0.05)
    h = 1e-5
    tb = 0.6
    f = lambda t: solve_outer(BoundaryPoint(0.5), BoundaryPoint(t), cfg).length
    sol = solve_outer(BoundaryPoint(0.5), BoundaryPoint(tb), cfg)
    fd = (f(tb + h) - f(tb - h)) / (2 * h)
    tau = np.array([-math.sin(tb), math.cos(tb)])
    analytic = cfg.R / math.sqrt(2) * float(sol.arc.velocities[-1] @ tau)
    assert fd == pytest.approx(analytic, rel=1e-4)
    assert jacobi_length_of_arc(sol.arc, cfg) == pytest.approx(sol.length, rel=1e-6)


def test_sweep_structure_and_positive_constant():
    cfg = triangle(0.05)
    rep = c1_sweep(cfg.delta, [0.05, 0.0], 16, cfg)
    assert [r.epsilon for r in rep.rows] == [0.05, 0.0]
    assert rep.C2 == pytest.approx(C2_KEPLER, rel=1e-8)
    assert rep.C1(0.05) > 0
    assert rep.rows[0].n_ok == 32
    with pytest.raises(ValueError):
        c1_sweep(cfg.delta, [0.05], 8, cfg)


def test_coincident_points_rejected():
    with pytest.raises(ValueError):
        solve_outer(BoundaryPoint(1.0), BoundaryPoint(1.0), symmetric_pair(0.05))
