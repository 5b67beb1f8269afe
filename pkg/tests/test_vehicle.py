"""Vehicle model tests.

The steady-state oracle is an independent force/moment balance: in steady
cornering the axle forces follow from m*v*psi_dot split by lever arms, the
slip angles from the axle stiffnesses, and the steering angle from Ackermann
geometry plus the slip difference. The model formulas must reproduce it.
"""

import numpy as np
import pytest

from safelane.vehicle import (
    VehicleParams,
    discretize_zoh,
    lateral_matrices,
    pose_rates,
    rear_slip_per_yaw_rate,
    steady_state,
    steady_state_gains,
    steady_state_residual,
    understeer_gradient,
)


def steering_oracle(p, psi_dot):
    """Steady cornering steer angle from force balance (independent route)."""
    L = p.wheelbase
    front_force = p.mass * p.speed * psi_dot * p.dist_rear / L
    rear_force = p.mass * p.speed * psi_dot * p.dist_front / L
    slip_front = front_force / p.cornering_front
    slip_rear = rear_force / p.cornering_rear
    curvature = psi_dot / p.speed
    return L * curvature + slip_front - slip_rear


def random_params(rng):
    return VehicleParams(
        mass=float(rng.uniform(800.0, 2500.0)),
        yaw_inertia=float(rng.uniform(1000.0, 4000.0)),
        dist_front=float(rng.uniform(0.8, 1.8)),
        dist_rear=float(rng.uniform(0.8, 1.8)),
        cornering_front=float(rng.uniform(3e4, 1.5e5)),
        cornering_rear=float(rng.uniform(3e4, 1.5e5)),
        speed=float(rng.uniform(5.0, 40.0)),
    )


def test_structure_of_matrices():
    A, B, G = lateral_matrices(VehicleParams())
    assert np.array_equal(A[0], [0.0, 1.0, 0.0, 0.0])
    assert np.array_equal(A[2], [0.0, 0.0, 0.0, 1.0])
    assert B[0] == 0.0 and B[2] == 0.0
    assert G[0] == 0.0 and G[2] == 0.0
    assert A[0, 0] == 0.0 and A[:, 0].sum() == 0.0  # e1 drives nothing


def test_steady_state_is_exact_equilibrium_default_params():
    assert steady_state_residual(VehicleParams(), 0.0111) <= 1e-9


def test_steady_state_matches_force_balance_oracle():
    rng = np.random.default_rng(17)
    for _ in range(50):
        p = random_params(rng)
        psi_dot = float(rng.uniform(-0.2, 0.2))
        u_s, _ = steady_state(p, psi_dot)
        assert u_s == pytest.approx(steering_oracle(p, psi_dot),
                                    rel=1e-12, abs=1e-15)


def test_steady_state_structure_and_scaling():
    p = VehicleParams()
    u_bar, x_bar = steady_state_gains(p)
    assert x_bar[0] == 0.0 and x_bar[1] == 0.0 and x_bar[3] == 0.0
    assert x_bar[2] == pytest.approx(-p.dist_rear / p.speed
                                     + rear_slip_per_yaw_rate(p), abs=1e-15)
    u1, x1 = steady_state(p, 0.02)
    u2, x2 = steady_state(p, -0.04)
    assert u2 == pytest.approx(-2.0 * u1, rel=1e-14)
    assert np.allclose(x2, -2.0 * x1, rtol=1e-14)


def test_understeer_gradient_sign_flips_with_weight_split():
    nose_heavy = VehicleParams(dist_front=0.9, dist_rear=1.7)
    tail_heavy = VehicleParams(dist_front=1.7, dist_rear=0.9)
    assert understeer_gradient(nose_heavy) > 0.0
    assert understeer_gradient(tail_heavy) < 0.0


def test_residual_sweep_random_parameters():
    rng = np.random.default_rng(99)
    for _ in range(20):
        p = random_params(rng)
        for psi_dot in rng.uniform(-0.5, 0.5, size=10):
            assert steady_state_residual(p, float(psi_dot)) <= 1e-9


def test_zoh_nilpotent_exact():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    Ad, Bd, Gd = discretize_zoh(A, np.zeros(2), np.zeros(2), 0.1)
    assert np.allclose(Ad, [[1.0, 0.1], [0.0, 1.0]], atol=1e-15)
    assert np.allclose(Bd, 0.0) and np.allclose(Gd, 0.0)


def test_zoh_eigenvalue_mapping():
    p = VehicleParams()
    A, B, G = lateral_matrices(p)
    dt = 0.05
    Ad, _, _ = discretize_zoh(A, B, G, dt)
    ev_c = np.sort_complex(np.linalg.eigvals(A))
    ev_d = np.sort_complex(np.linalg.eigvals(Ad))
    assert np.allclose(np.sort_complex(np.exp(dt * ev_c)), ev_d, atol=1e-8)


def test_zoh_shrinks_to_identity():
    p = VehicleParams()
    A, B, G = lateral_matrices(p)
    Ad, Bd, Gd = discretize_zoh(A, B, G, 1e-6)
    assert np.allclose(Ad, np.eye(4), atol=1e-4)
    assert np.linalg.norm(Bd) < 1e-4 and np.linalg.norm(Gd) < 1e-4


def test_zoh_scalar_integrator_known_value():
    # x_dot = -x + u: A_d = exp(-dt), B_d = 1 - exp(-dt)
    Ad, Bd, Gd = discretize_zoh([[-1.0]], [1.0], [0.0], 0.3)
    assert Ad[0, 0] == pytest.approx(np.exp(-0.3), abs=1e-14)
    assert Bd[0] == pytest.approx(1.0 - np.exp(-0.3), abs=1e-14)


def test_discrete_equilibrium_is_fixed_point():
    # Holding the steady input at the steady state must reproduce it
    # exactly after one ZOH step, for any sampling time.
    p = VehicleParams()
    A, B, G = lateral_matrices(p)
    psi_dot = 0.0111
    u_s, x_s = steady_state(p, psi_dot)
    for dt in (0.01, 0.05, 0.5):
        Ad, Bd, Gd = discretize_zoh(A, B, G, dt)
        x_next = Ad @ x_s + Bd * u_s + Gd * psi_dot
        assert np.allclose(x_next, x_s, atol=1e-12)


def test_pose_rates_pure_lateral_motion():
    p = VehicleParams()
    # e2 = 0, psi_road = 0, e1_dot = 1: the world Y rate is exactly 1.
    xdot, ydot = pose_rates(p, np.array([0.0, 1.0, 0.0, 0.0]), 0.0)
    assert ydot == pytest.approx(1.0, abs=1e-15)
    assert xdot == pytest.approx(p.speed, abs=1e-15)


def test_pose_rates_heading_rotation():
    p = VehicleParams()
    x = np.array([0.0, 0.0, 0.1, 0.0])
    xdot, ydot = pose_rates(p, x, 0.2)
    heading = 0.3
    vy = -p.speed * 0.1
    assert xdot == pytest.approx(p.speed * np.cos(heading) - vy * np.sin(heading))
    assert ydot == pytest.approx(p.speed * np.sin(heading) + vy * np.cos(heading))


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        VehicleParams(mass=-1.0)
    with pytest.raises(ValueError):
        VehicleParams(speed=0.0)
