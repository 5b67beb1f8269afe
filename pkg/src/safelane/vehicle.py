"""Linear single-track lateral dynamics in road-error coordinates.

State x = [e1, e1_dot, e2, e2_dot]:
    e1  lateral offset of the c.g. from the lane centerline [m]
    e2  heading error relative to the road tangent [rad]
The input u is the front steering angle [rad]; the road enters through the
reference yaw rate psi_dot_ref = v * kappa(s) [rad/s]:

    x_dot = A x + B u + G psi_dot_ref

At constant psi_dot_ref the model has an exact equilibrium (x_s, u_s)
proportional to psi_dot_ref; `steady_state_residual` checks that property
and guards the coefficient formulas below against sign mistakes.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import matrix_exponential


@dataclass(frozen=True)
class VehicleParams:
    """Single-track parameters; stiffnesses are per axle."""
    mass: float = 1600.0            # [kg]
    yaw_inertia: float = 2500.0     # [kg m^2]
    dist_front: float = 1.2         # c.g. to front axle [m]
    dist_rear: float = 1.4          # c.g. to rear axle [m]
    cornering_front: float = 80000.0  # [N/rad]
    cornering_rear: float = 80000.0   # [N/rad]
    speed: float = 20.0             # constant longitudinal speed [m/s]

    def __post_init__(self):
        for name in ("mass", "yaw_inertia", "dist_front", "dist_rear",
                     "cornering_front", "cornering_rear", "speed"):
            if getattr(self, name) <= 0.0:
                raise ValueError("%s must be positive" % name)

    @property
    def wheelbase(self):
        return self.dist_front + self.dist_rear


def lateral_matrices(p):
    """Continuous (A, B, G) of the error-coordinate single-track model.

    Rows 1 and 3 are pure selectors (e1_dot, e2_dot); B and G act only on
    the velocity rows, so b11 = b31 = 0.
    """
    m, iz, v = p.mass, p.yaw_inertia, p.speed
    lf, lr = p.dist_front, p.dist_rear
    cf, cr = p.cornering_front, p.cornering_rear
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -(cf + cr) / (m * v), (cf + cr) / m, (cr * lr - cf * lf) / (m * v)],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, (cr * lr - cf * lf) / (iz * v), (cf * lf - cr * lr) / iz,
         -(cf * lf ** 2 + cr * lr ** 2) / (iz * v)],
    ])
    B = np.array([0.0, cf / m, 0.0, cf * lf / iz])
    G = np.array([0.0, (cr * lr - cf * lf) / (m * v) - v, 0.0,
                  -(cf * lf ** 2 + cr * lr ** 2) / (iz * v)])
    return A, B, G


def understeer_gradient(p):
    """k_v such that u_s = psi_dot_ref (L/v + k_v v) [rad s^2/m]."""
    L = p.wheelbase
    return p.mass * p.dist_rear / (p.cornering_front * L) \
        - p.mass * p.dist_front / (p.cornering_rear * L)


def rear_slip_per_yaw_rate(p):
    """Rear-axle slip angle per unit yaw rate in steady cornering."""
    return p.mass * p.speed * p.dist_front / (p.cornering_rear * p.wheelbase)


def steady_state_gains(p):
    """(u_bar, x_bar): steady state per unit reference yaw rate.

    u_s = psi_dot_ref * u_bar and x_s = psi_dot_ref * x_bar; only the
    heading-error component of x_bar is nonzero.
    """
    u_bar = p.wheelbase / p.speed + understeer_gradient(p) * p.speed
    x_bar = np.array([0.0, 0.0,
                      -p.dist_rear / p.speed + rear_slip_per_yaw_rate(p),
                      0.0])
    return u_bar, x_bar


def steady_state(p, psi_dot_ref):
    """Equilibrium input and state for a constant reference yaw rate."""
    u_bar, x_bar = steady_state_gains(p)
    return psi_dot_ref * u_bar, psi_dot_ref * x_bar


def steady_state_residual(p, psi_dot_ref):
    """Infinity norm of A x_s + B u_s + G psi_dot_ref (0 for an equilibrium)."""
    A, B, G = lateral_matrices(p)
    u_s, x_s = steady_state(p, psi_dot_ref)
    return float(np.linalg.norm(A @ x_s + B * u_s + G * psi_dot_ref, np.inf))


def discretize_zoh(A, B, G, dt):
    """Zero-order-hold discretization via one augmented matrix exponential.

    exp([[A, [B G]], [0, 0]] dt) holds A_d in the top-left block and the
    held-input responses [B_d G_d] in the top-right columns.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    BG = np.column_stack([np.asarray(B, dtype=float).reshape(n, -1),
                          np.asarray(G, dtype=float).reshape(n, -1)])
    m = BG.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A * dt
    aug[:n, n:] = BG * dt
    E = matrix_exponential(aug)
    Ad = E[:n, :n]
    Bd = E[:n, n:n + m - 1].ravel() if m == 2 else E[:n, n:n + BG.shape[1] - 1]
    Gd = E[:n, n + m - 1]
    return Ad, Bd, Gd


def pose_rates(p, x, psi_road):
    """(X_dot, Y_dot) of the c.g. in world coordinates.

    The body-frame lateral velocity is e1_dot - v e2; the heading is the
    road tangent plus the heading error.
    """
    heading = x[2] + psi_road
    vy = x[1] - p.speed * x[2]
    c, s = np.cos(heading), np.sin(heading)
    return p.speed * c - vy * s, p.speed * s + vy * c
