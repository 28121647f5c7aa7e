import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncglue.potential import (Centre, HillBoundaryError, OriginError, PolarState, PotentialConfig,
                              SingularityError, angular_speed, eval_gradient, eval_hessian, eval_potential,
                              jacobi_weight, speed_from_energy, symmetric_pair, tangent, triangle, wrap_angle)

points = st.tuples(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4)).filter(lambda p: math.hypot(*p) > 0.02)


def test_kepler_limit_is_one_over_r():
    cfg = symmetric_pair(epsilon=0.0)
    assert eval_potential((0.3, 0.4), cfg) == pytest.approx(2.0, rel=1e-15)


def test_singularity_raises_with_index():
    cfg = symmetric_pair(0.05)
    with pytest.raises(SingularityError) as info:
        eval_potential((0.05, 0.0), cfg)
    assert info.value.index == 1


def test_hill_boundary():
    cfg = symmetric_pair(0.05)
    with pytest.raises(HillBoundaryError):
        jacobi_weight((1.5, 0.0), cfg)


@pytest.mark.parametrize("masses, message", [((0.5, 0.4), "masses must sum to 1")])
def test_mass_sum_validation(masses, message):
    with pytest.raises(ValueError, match=message):
        PotentialConfig((Centre((-1, 0), masses[0]), Centre((1, 0), masses[1])), 0.05)


def test_delta_and_epsilon_validation():
    with pytest.raises(ValueError, match="delta"):
        symmetric_pair(0.05, R=0.4, delta=0.8)
    with pytest.raises(ValueError, match="R/2"):
        symmetric_pair(0.25, R=0.4)


@settings(max_examples=60, deadline=None)
@given(points)
def test_gradient_matches_finite_differences(p):
    cfg = triangle(0.05)
    h = 1e-6
    fd = np.array([(eval_potential((p[0] + h, p[1]), cfg) - eval_potential((p[0] - h, p[1]), cfg)) / (2 * h),
                   (eval_potential((p[0], p[1] + h), cfg) - eval_potential((p[0], p[1] - h), cfg)) / (2 * h)])
    g = eval_gradient(p, cfg)
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-6 * np.abs(g).max())


@settings(max_examples=40, deadline=None)
@given(points)
def test_hessian_is_symmetric_and_harmonic(p):
    # each 1/|x| term is superharmonic in the plane: trace of its Hessian is 1/|x|^3
    cfg = symmetric_pair(0.05)
    H = eval_hessian(p, cfg)
    assert H[0, 1] == H[1, 0]
    expected = sum(m / np.linalg.norm(np.asarray(p) - c) ** 3 for m, c in zip(cfg.masses, cfg.positions))
    assert np.trace(H) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(points, st.floats(-3, 3), st.floats(-3, 3))
def test_polar_roundtrip(p, vx, vy):
    ps = PolarState.from_cartesian(p, (vx, vy))
    x, v = ps.to_cartesian()
    assert np.allclose(x, p, atol=1e-14) and np.allclose(v, (vx, vy), atol=1e-12)
    assert ps.theta_dot == pytest.approx(angular_speed(p, (vx, vy)), rel=1e-12, abs=1e-14)


def test_origin_angular_speed():
    with pytest.raises(OriginError):
        angular_speed((0.0, 0.0), (1.0, 0.0))


def test_speed_law_and_tangent():
    cfg = symmetric_pair(0.05)
    x = (0.1, 0.2)
    assert speed_from_energy(x, cfg) ** 2 == pytest.approx(2 * (eval_potential(x, cfg) - 1))
    assert tangent(0.0) @ np.array([1.0, 0.0]) == 0.0


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
