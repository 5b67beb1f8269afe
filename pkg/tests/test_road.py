"""Road geometry and obstacle tests.

Oracles: closed-form circles for constant curvature, straight-line
geometry, and an independently integrated clothoid (fine RK4 on the
heading ODE) for curvature ramps.
"""

import numpy as np
import pytest

from safelane.road import (
    Obstacle,
    Road,
    RoadError,
    estimate_passing_time,
    reference_at_arclength,
)


def simple_road(length=1000.0, lane_width=3.7):
    return Road.from_segments(lane_width, [("straight", length, None)])


def arc_road(radius=1800.0, length=2000.0, lane_width=3.7):
    k = 1.0 / radius
    return Road(lane_width, [0.0, length], [k, k])


def mixed_road():
    return Road.from_segments(3.7, [
        ("straight", 200.0, None),
        ("ramp", 100.0, 1.0 / 1800.0),
        ("arc", 700.0, 1.0 / 1800.0),
    ])


def test_straight_road_geometry():
    road = simple_road()
    assert road.heading(123.0) == 0.0
    assert np.allclose(road.position(123.0), [123.0, 0.0], atol=1e-12)
    assert road.curvature(999.0) == 0.0


def test_arc_road_is_exact_circle():
    R = 1800.0
    road = arc_road(R)
    for s in (0.0, 100.0, 777.7, 1999.0):
        p = road.position(s)
        # Circle center is at (0, R): distance must equal R exactly.
        assert np.hypot(p[0], p[1] - R) == pytest.approx(R, abs=1e-9)
        assert road.heading(s) == pytest.approx(s / R, abs=1e-15)


def test_reference_yaw_rate_example():
    road = arc_road(1800.0)
    _, psi_dot = reference_at_arclength(road, 500.0, 20.0)
    assert psi_dot == pytest.approx(20.0 / 1800.0, abs=1e-15)
    assert psi_dot == pytest.approx(0.011111, abs=1e-6)


def test_ramp_matches_independent_ode_integration():
    road = mixed_road()
    # Oracle: integrate [X', Y', psi'] = [cos psi, sin psi, kappa(s)] with
    # fine RK4 over the ramp region.
    def kappa(s):
        if s <= 200.0:
            return 0.0
        if s <= 300.0:
            return (s - 200.0) / 100.0 / 1800.0
        return 1.0 / 1800.0

    def f(si, zi):
        return np.array([np.cos(zi[2]), np.sin(zi[2]), kappa(si)])

    z = np.zeros(3)
    ds = 0.01
    for i in range(40000):
        s = i * ds
        k1 = f(s, z)
        k2 = f(s + ds / 2, z + ds / 2 * k1)
        k3 = f(s + ds / 2, z + ds / 2 * k2)
        k4 = f(s + ds, z + ds * k3)
        z = z + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert road.heading(400.0) == pytest.approx(z[2], abs=1e-10)
    assert np.allclose(road.position(400.0), z[:2], atol=1e-8)


def test_heading_is_curvature_integral():
    road = mixed_road()
    # Finite-difference d(heading)/ds equals curvature away from knots.
    for s in (57.0, 250.0, 600.0):
        h = 1e-5
        fd = (road.heading(s + h) - road.heading(s - h)) / (2 * h)
        assert fd == pytest.approx(road.curvature(s), abs=1e-9)


def test_domain_errors():
    road = simple_road(100.0)
    with pytest.raises(RoadError):
        road.position(101.0)
    with pytest.raises(RoadError):
        road.heading(-1.0)


def test_invalid_construction():
    with pytest.raises(RoadError):
        Road(3.7, [0.0, 10.0, 5.0], [0.0, 0.0, 0.0])
    with pytest.raises(RoadError):
        Road(-1.0, [0.0, 10.0], [0.0, 0.0])
    with pytest.raises(RoadError):
        Road.from_segments(3.7, [("straight", 100.0, None),
                                 ("arc", 100.0, 0.01)])  # curvature jump


def test_curvature_bounds_helpers():
    road = mixed_road()
    assert road.max_abs_curvature() == pytest.approx(1.0 / 1800.0)
    assert road.max_abs_curvature_slope() == pytest.approx(1.0 / 1800.0 / 100.0)


# --- obstacle ----------------------------------------------------------------

def test_obstacle_placement_straight_road():
    road = simple_road()
    obs = Obstacle(arc_position=300.0, radius=1.5, edge_offset=0.5,
                   detect_distance=40.0).place(road)
    # Center: 1.0 m right of the centerline (edge 0.5 left, radius 1.5).
    assert np.allclose(obs.center, [300.0, -1.0], atol=1e-12)
    assert obs.squared_distance(297.0, 4.0) == pytest.approx(
        9.0 + 25.0 - 2.25, abs=1e-12)


def test_squared_distance_spec_example():
    road = simple_road()
    obs = Obstacle(arc_position=100.0, radius=1.0, edge_offset=0.0,
                   detect_distance=40.0).place(road)
    # Car at (103, 4): dx = 3, dy = 4 (center at (100, -1)): hmm dy = 5.
    assert obs.squared_distance(103.0, -1.0 + 4.0) == pytest.approx(
        3.0 ** 2 + 4.0 ** 2 - 1.0, abs=1e-12)


def test_detect_threshold_relation():
    obs = Obstacle(arc_position=10.0, radius=1.5, edge_offset=0.5,
                   detect_distance=40.0)
    # When centers are exactly detect_distance apart, d equals the squared
    # threshold.
    d_at_trigger = 40.0 ** 2 - 1.5 ** 2
    assert obs.detect_threshold ** 2 == pytest.approx(d_at_trigger, abs=1e-9)
    assert obs.detect_threshold > obs.radius


def test_obstacle_convention_checks():
    with pytest.raises(RoadError):
        Obstacle(10.0, 1.5, 1.6, 40.0)     # center would cross centerline
    with pytest.raises(RoadError):
        Obstacle(10.0, -1.0, 0.0, 40.0)
    with pytest.raises(RoadError):
        Obstacle(10.0, 1.5, 0.5, 2.0)      # detection inside the disk


# --- passing time ------------------------------------------------------------

def test_passing_time_straight_exact():
    road = simple_road(2000.0)
    assert estimate_passing_time(road, 100.0, 140.0, 20.0) == pytest.approx(
        2.0, abs=2e-6)
    assert estimate_passing_time(road, 0.0, 15.0, 20.0) == pytest.approx(
        0.75, abs=2e-6)


def test_passing_time_arc_slightly_longer():
    road = arc_road(1800.0, length=2000.0)
    T = estimate_passing_time(road, 100.0, 140.0, 20.0)
    assert 2.0 < T < 2.0005


def test_passing_time_rejects_behind():
    road = simple_road()
    with pytest.raises(RoadError):
        estimate_passing_time(road, 100.0, 90.0, 20.0)
