"""Barrier pair: frozen values, algebraic identities, Lie terms vs FD."""

import numpy as np
import pytest

from flowtools import FlowOracle, sample_states
from safelane.barriers import (BarrierPair, gain_floor,
                               lane_expansion_for_sharing, smooth_step)
from safelane.road import Obstacle, Road
from safelane.vehicle import VehicleParams, lateral_matrices

PARS = VehicleParams(mass=1600.0, yaw_inertia=2500.0, dist_front=1.2,
                     dist_rear=1.4, cornering_front=80000.0,
                     cornering_rear=80000.0, speed=20.0)
LANE_W = 3.7


def make_pair(edge_offset=0.5, radius=1.5, detect=15.0, expansion=None):
    road = Road.from_segments(LANE_W, [("straight", 600.0, 0.0)])
    obs = Obstacle(arc_position=300.0, radius=radius,
                   edge_offset=edge_offset, detect_distance=detect)
    obs.place(road)
    if expansion is None:
        expansion = 0.5 * LANE_W + edge_offset   # sharing regime
    return BarrierPair(PARS, LANE_W, expansion, obs)


# --- smooth step ---------------------------------------------------------

def test_smooth_step_frozen_values():
    T = 222.75
    assert smooth_step(T, T)[0] == 0.0
    assert smooth_step(2 * T, T)[0] == 0.0
    assert smooth_step(0.0, T)[0] == 1.0
    assert smooth_step(-3.0, T)[0] == 1.0
    # value at the midpoint is exactly exp(-1)
    phi_mid = smooth_step(0.5 * T, T)[0]
    assert phi_mid == pytest.approx(np.exp(-1.0), rel=1e-15)


def test_smooth_step_monotone_and_c1_at_outer_join():
    T = 10.0
    grid = np.linspace(1e-9, T - 1e-9, 400)
    vals = [smooth_step(d, T)[0] for d in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # approaching the outer join the value and slope both vanish
    phi, dphi, _ = smooth_step(T * (1.0 - 1e-6), T)
    assert phi < 1e-300 or phi == 0.0
    assert abs(dphi) < 1e-290


def test_smooth_step_derivatives_match_fd():
    T = 222.75
    for d in [0.2 * T, 0.5 * T, 0.55 * T, 0.8 * T]:
        phi, dphi, d2phi = smooth_step(d, T)
        eps = 1e-6 * T
        pp = smooth_step(d + eps, T)[0]
        pm = smooth_step(d - eps, T)[0]
        fd1 = (pp - pm) / (2 * eps)
        fd2 = (pp - 2 * phi + pm) / (eps * eps)
        assert dphi == pytest.approx(fd1, rel=1e-6)
        assert d2phi == pytest.approx(fd2, rel=1e-4)


# --- algebraic identities -------------------------------------------------

def test_pair_sums_to_lane_width_in_sharing_regime():
    pair = make_pair()
    rng = np.random.default_rng(11)
    oracle = FlowOracle(PARS, 0.0)
    states = (sample_states(rng, pair, 400, "middle")
              + sample_states(rng, pair, 300, "outer")
              + sample_states(rng, pair, 300, "inner"))
    for z in states:
        ev = pair.evaluate(z[:4], z[4], z[5], z[6], oracle.psi_dot_ref)
        assert ev.h_left + ev.h_right == pytest.approx(LANE_W, abs=1e-12)
        assert abs(ev.lf_left + ev.lf_right) <= 1e-12 * max(
            1.0, abs(ev.lf_left))
        assert abs(ev.lf2_left + ev.lf2_right) <= 1e-11 * max(
            1.0, abs(ev.lf2_left))
        assert abs(ev.lglf_left + ev.lglf_right) <= 1e-12 * max(
            1.0, abs(ev.lglf_left))


def test_far_field_reduces_to_lane_clearances():
    pair = make_pair()
    _, B, _ = lateral_matrices(PARS)
    # far from the obstacle, heading aligned: pure lane distances
    z = np.array([0.8, 0.3, 0.0, 0.05, 0.0, 50.0, 0.0])
    ev = pair.evaluate(z[:4], z[4], z[5], z[6], 0.0)
    assert ev.phi == 0.0 and ev.d > pair.threshold_sq
    assert ev.h_left == pytest.approx(LANE_W / 2 - 0.8, abs=1e-14)
    assert ev.h_right == pytest.approx(LANE_W / 2 + 0.8, abs=1e-14)
    assert ev.lglf_left == pytest.approx(-B[1], rel=1e-14)
    assert ev.lglf_right == pytest.approx(B[1], rel=1e-14)


def test_contact_level_zeroes_right_barrier():
    pair = make_pair(edge_offset=0.5)
    # inside contact (Phi = 1) with body offset on the obstacle edge
    e2 = 0.15
    e1 = 0.5 / np.cos(e2)
    z = np.array([e1, 0.0, e2, 0.0, pair.cx + 0.5, pair.cy, -e2])
    ev = pair.evaluate(z[:4], z[4], z[5], z[6], 0.0)
    assert ev.phi == 1.0
    assert ev.h_right == pytest.approx(0.0, abs=1e-12)
    assert ev.h_left == pytest.approx(LANE_W, abs=1e-12)


def test_no_obstacle_pair_matches_far_field():
    plain = BarrierPair(PARS, LANE_W, 2.35, None)
    pair = make_pair()
    rng = np.random.default_rng(3)
    for z in sample_states(rng, pair, 50, "outer"):
        ev_p = plain.evaluate(z[:4], z[4], z[5], z[6], 0.11)
        ev_o = pair.evaluate(z[:4], z[4], z[5], z[6], 0.11)
        assert ev_p.d == np.inf
        for name in ("h_left", "h_right", "lf_left", "lf_right",
                     "lf2_left", "lf2_right", "lglf_left", "lglf_right"):
            assert getattr(ev_p, name) == pytest.approx(
                getattr(ev_o, name), abs=1e-13)


# --- Lie derivatives vs finite differences --------------------------------

def test_first_lie_derivative_matches_flow_fd():
    pair = make_pair()
    for kappa in (0.0, 1.0 / 1800.0):
        oracle = FlowOracle(PARS, kappa)
        rng = np.random.default_rng(21)
        states = (sample_states(rng, pair, 140, "middle")
                  + sample_states(rng, pair, 30, "outer")
                  + sample_states(rng, pair, 30, "inner"))
        for z in states:
            fd = oracle.fd_first(pair, z)
            an = oracle.barrier_first(pair, z)
            for a, f in zip(an, fd):
                assert abs(a - f) <= 1e-6 * max(1.0, abs(a))


def test_second_lie_derivative_matches_flow_fd():
    pair = make_pair()
    for kappa in (0.0, 1.0 / 1800.0):
        oracle = FlowOracle(PARS, kappa)
        rng = np.random.default_rng(22)
        states = (sample_states(rng, pair, 140, "middle")
                  + sample_states(rng, pair, 30, "outer")
                  + sample_states(rng, pair, 30, "inner"))
        for z in states:
            fd = oracle.fd_second_chained(pair, z, u=0.0)
            ev = pair.evaluate(z[:4], z[4], z[5], z[6], oracle.psi_dot_ref)
            an = np.array([ev.lf2_left, ev.lf2_right])
            for a, f in zip(an, fd):
                assert abs(a - f) <= 1e-4 * max(1.0, abs(a))


def test_input_direction_matches_state_perturbation_fd():
    pair = make_pair()
    oracle = FlowOracle(PARS, 1.0 / 1800.0)
    rng = np.random.default_rng(23)
    states = (sample_states(rng, pair, 150, "middle")
              + sample_states(rng, pair, 50, "outer"))
    for z in states:
        fd = oracle.fd_input_direction(pair, z)
        ev = pair.evaluate(z[:4], z[4], z[5], z[6], oracle.psi_dot_ref)
        an = np.array([ev.lglf_left, ev.lglf_right])
        for a, f in zip(an, fd):
            assert abs(a - f) <= 1e-6 * max(1.0, abs(a))


def test_constant_input_flow_composes_lf2_and_lglf():
    # second derivative along a driven flow is lf2 + lglf * u; checked on
    # two routes that must stay distinct: chained first differences of the
    # analytic L_f h (tight), and pure second differences of the raw
    # barrier value, whose truncation floor from the smooth step's large
    # higher flow derivatives caps the attainable agreement near 1e-3.
    pair = make_pair()
    oracle = FlowOracle(PARS, 0.0)
    rng = np.random.default_rng(24)
    for z in sample_states(rng, pair, 60, "middle"):
        for u in (-0.3, 0.45):
            ev = pair.evaluate(z[:4], z[4], z[5], z[6], 0.0)
            an = np.array([ev.lf2_left + ev.lglf_left * u,
                           ev.lf2_right + ev.lglf_right * u])
            fd_tight = oracle.fd_second_chained(pair, z, u=u)
            fd_raw = oracle.fd_second(pair, z, u=u)
            for a, ft, fr in zip(an, fd_tight, fd_raw):
                assert abs(a - ft) <= 1e-4 * max(1.0, abs(a))
                assert abs(a - fr) <= 1e-3 * max(1.0, abs(a))


# --- helpers ---------------------------------------------------------------

def test_lane_expansion_for_sharing_contract():
    assert lane_expansion_for_sharing(3.7, -1.0) == pytest.approx(0.85)
    with pytest.raises(ValueError):
        lane_expansion_for_sharing(3.7, 0.5)    # edge not right of center
    with pytest.raises(ValueError):
        lane_expansion_for_sharing(3.7, -2.0)   # expansion not positive


def test_gain_floor():
    assert gain_floor(2.0, 1.0) == 0.0
    assert gain_floor(2.0, -3.0) == pytest.approx(1.5)
    assert gain_floor(0.0, -1.0) == np.inf


def test_unplaced_obstacle_rejected():
    obs = Obstacle(arc_position=10.0, radius=1.5, edge_offset=0.5,
                   detect_distance=15.0)
    with pytest.raises(ValueError):
        BarrierPair(PARS, LANE_W, 2.35, obs)
