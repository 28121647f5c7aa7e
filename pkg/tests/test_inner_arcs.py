import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncglue.grid_oracle import grid_shortest_path
from ncglue.inner_arcs import (CollisionProximityError, ConvexNeighborhood, GeodesicPath,
                               InfeasiblePartitionError, Partition, TruncationError, UnitMetric,
                               candidate_seeds, inner_geodesic, local_geodesic, make_neighborhood,
                               minimize_geodesic, path_class, reparametrize_maupertuis, restriction_distance,
                               separates, solve_inner, truncation_point, winding_numbers)
from ncglue.potential import Centre, PotentialConfig, boundary_point, square, symmetric_pair, triangle

R = 0.4


@pytest.fixture(scope="module")
def pair():
    return symmetric_pair(0.05)


@pytest.fixture(scope="module")
def vertical(pair):
    # crossing from the top of the circle to the bottom, between the two centres
    P = Partition(frozenset({0}), 2)
    p1, p2 = boundary_point(math.pi / 2, R), boundary_point(-math.pi / 2, R)
    return P, p1, p2, solve_inner(p1, p2, P, pair)


@pytest.mark.parametrize("n, count", [(2, 1), (3, 3), (4, 7)])
def test_partition_count(n, count):
    parts = Partition.all(n)
    assert len(parts) == count == len(set(parts))


def test_partition_is_unordered():
    assert Partition(frozenset({0}), 3) == Partition(frozenset({1, 2}), 3)
    assert Partition(frozenset({0}), 3).label() == "0|12"
    with pytest.raises(ValueError):
        Partition(frozenset({0, 1, 2}), 3)


def test_winding_with_closure():
    # straight path along the x axis closed by the lower half of the circle
    path = np.linspace([R, 0.0], [-R, 0.0], 11)
    w = winding_numbers(path, np.array([[0.0, -0.1], [0.0, 0.1]]), R)
    assert list(w % 2) == [1, 0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.25, 0.25), st.floats(-0.25, 0.25)), min_size=1, max_size=5),
       st.floats(0, 2 * math.pi), st.floats(0.2, 6.0))
def test_separation_is_orientation_free(waypoints, a, gap):
    cfg = triangle(0.05)
    path = np.vstack([boundary_point(a, R), np.array(waypoints), boundary_point(a + gap, R)])
    if min(np.linalg.norm(path[:, None, :] - cfg.positions[None], axis=-1).ravel()) < 1e-3:
        return
    forward = path_class(path, cfg)
    backward = path_class(path[::-1], cfg)
    assert forward ^ backward == frozenset(range(3)) or forward == backward == frozenset()
    for P in Partition.all(3):
        assert separates(path, P, cfg) == separates(path[::-1], P, cfg)


def test_unit_metric_gives_chord():
    p1, p2 = np.array([0.0, 0.0]), np.array([1.0, 0.5])
    t = np.linspace(0, 1, 33)[:, None]
    seed = p1 + t * (p2 - p1) + 0.05 * np.sin(np.pi * t) * np.array([[-0.5, 1.0]])
    g = minimize_geodesic(GeodesicPath(seed, 0.0), None, metric=UnitMetric(), refine_tol=1e-9)
    assert g.jacobi_length == pytest.approx(math.hypot(1.0, 0.5), rel=1e-12)


def test_seeds_separate(pair):
    P = Partition(frozenset({0}), 2)
    for s in candidate_seeds(boundary_point(2.0, R), boundary_point(-1.0, R), P, pair):
        assert separates(s.vertices, P, pair)


def test_symmetric_crossing(pair, vertical):
    P, p1, p2, sol = vertical
    disc = inner_geodesic(p1, p2, P, pair, refine_tol=1e-6)
    assert sol.length == pytest.approx(disc.richardson_length, rel=1e-6)
    # the y axis is invariant, so the arc leaves radially
    assert abs(sol.initial_angular_speed) < 1e-8
    assert np.abs(sol.arc.positions[:, 0]).max() < 1e-8
    assert sol.arc.max_energy_residual <= 1e-8


def test_grid_oracle_two_centres(pair):
    P = Partition(frozenset({0}), 2)
    p1, p2 = boundary_point(2.2, R), boundary_point(-0.7, R)
    disc = inner_geodesic(p1, p2, P, pair, refine_tol=1e-5)
    grid = grid_shortest_path(p1, p2, P, pair, spacing=R / 200)
    assert disc.jacobi_length == pytest.approx(grid.length, rel=1e-2)
    assert grid.length >= disc.jacobi_length * (1 - 1e-3)


def test_collision_class(pair):
    P = Partition(frozenset({0}), 2)
    with pytest.raises(CollisionProximityError):
        inner_geodesic(boundary_point(0.3, R), boundary_point(0.5, R), P, pair)


def test_coincident_centres_infeasible():
    cfg = PotentialConfig((Centre((1.0, 0.0), 0.5), Centre((1.0, 0.0), 0.5)), 0.05)
    with pytest.raises(InfeasiblePartitionError):
        candidate_seeds(boundary_point(1.0, R), boundary_point(-1.0, R), Partition(frozenset({0}), 2), cfg)


@pytest.mark.parametrize("a, b", [(math.pi / 2, -math.pi / 2), (2.2, -0.7)])
def test_reparametrization_contract(pair, a, b):
    P = Partition(frozenset({0}), 2)
    disc = inner_geodesic(boundary_point(a, R), boundary_point(b, R), P, pair, refine_tol=1e-6)
    arc, resid = reparametrize_maupertuis(disc, pair)
    assert resid <= 1e-4
    assert arc.max_energy_residual <= 1e-6
    assert arc.jacobi_length == pytest.approx(disc.jacobi_length, rel=1e-5)


def test_local_geodesic_restricts_inner_arc(pair, vertical):
    P, p1, p2, sol = vertical
    nb = make_neighborhood(p1, pair)
    tp = truncation_point(sol.arc, nb, pair)
    loc = local_geodesic(p1, tp.point, nb, pair)
    assert restriction_distance(loc, sol.arc, tp.t_star) <= 1e-5
    assert loc.jacobi_length == pytest.approx(tp.jacobi_length, rel=1e-7)
    assert loc.arc.max_energy_residual <= 1e-8


def test_truncation_requires_start_at_centre(pair, vertical):
    sol = vertical[3]
    nb = ConvexNeighborhood(np.array([0.0, -R]), 0.04)
    with pytest.raises(TruncationError):
        truncation_point(sol.arc, nb, pair)


@pytest.mark.parametrize("a, b", [(0.1, 3.3), (0.5, 2.0), (1.0, 4.0)])
def test_square_layout_seeds_every_partition(a, b):
    cfg = square(0.05)
    for P in Partition.all(4):
        seeds = candidate_seeds(boundary_point(a, R), boundary_point(b, R), P, cfg)
        assert seeds and all(separates(s.vertices, P, cfg) for s in seeds)
