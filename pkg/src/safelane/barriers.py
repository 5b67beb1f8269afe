"""Lane-keeping / obstacle-avoidance barrier pair and its Lie derivatives.

Both barriers blend a lane-edge clearance with an obstacle-edge clearance
through a smooth step Phi driven by the squared obstacle distance d:

    h_left  = w/2 + e_v Phi(d) - e1 cos(e2)
    h_right = w/2 + e1 cos(e2) - (w/2 + e_edge) Phi(d)

With the sharing expansion e_v = w/2 + e_edge the pair sums to the lane
width identically, and the input directions cancel: L_gL_f h_left =
-L_gL_f h_right.

Both barriers have relative degree two: the steering input shows up in the
second time derivative only. First and second drift derivatives are
implemented in closed form over the extended state (error states, world
pose, road heading) and are cross-checked against finite differences in
the test suite; the mixed term L_gL_f h is the hand-derived closed form.
"""

from dataclasses import dataclass
from math import cos, exp, inf, sin

from .vehicle import lateral_matrices


def smooth_step(d, threshold_sq):
    """Phi(d): 0 beyond the detection level, 1 at contact, C1 blend between.

    Returns (phi, dphi_dd, d2phi_dd2). The middle branch is
    exp(1 - T/(T - d)) with T = threshold_sq; its derivative vanishes at
    the outer join d = T, which makes the blend C1 there. At d = 0 the
    value reaches 1 continuously (the derivative does not vanish, but
    d <= 0 already means contact).
    """
    T = threshold_sq
    if d >= T:
        return 0.0, 0.0, 0.0
    if d <= 0.0:
        return 1.0, 0.0, 0.0
    q = T - d
    phi = exp(1.0 - T / q)
    dphi = -phi * T / (q * q)
    d2phi = phi * T * (2.0 * d - T) / (q ** 4)
    return phi, dphi, d2phi


def lane_expansion_for_sharing(lane_width, edge_offset):
    """Sharing expansion e_v = w/2 + edge_offset for the Lemma regime.

    This keeps the literal contract of the sharing construction: the
    obstacle edge must be strictly right of the centerline (negative
    offset) and the expansion strictly positive. Scenario configs that
    place the obstacle edge across the centerline compute the same
    arithmetic without the sign restriction (see scenarios).
    """
    if edge_offset >= 0.0:
        raise ValueError("sharing expansion expects the obstacle edge "
                         "right of the centerline (edge_offset < 0)")
    e_v = 0.5 * lane_width + edge_offset
    if e_v <= 0.0:
        raise ValueError("expansion is not positive: obstacle spans the "
                         "whole right half-lane")
    return e_v


def gain_floor(h, lf_h):
    """Lower admissibility bound for the slow gain: max(0, -L_f h / h)."""
    if h <= 0.0:
        return inf
    return max(0.0, -lf_h / h)


@dataclass
class BarrierEval:
    """Barrier pair and Lie terms at one instant."""
    d: float
    phi: float
    h_left: float
    h_right: float
    lf_left: float
    lf_right: float
    lf2_left: float
    lf2_right: float
    lglf_left: float
    lglf_right: float


class BarrierPair:
    """Evaluator bound to a vehicle, lane width, expansion, and obstacle.

    ``obstacle`` may be None (pure lane keeping: Phi stays 0 and d is
    reported as +inf).
    """

    def __init__(self, params, lane_width, expansion, obstacle=None):
        A, B, G = lateral_matrices(params)
        self.speed = params.speed
        self.b2 = float(B[1])
        self.b4 = float(B[3])
        self.a22, self.a23, self.a24 = (float(A[1, j]) for j in (1, 2, 3))
        self.a42, self.a43, self.a44 = (float(A[3, j]) for j in (1, 2, 3))
        self.g2 = float(G[1])
        self.g4 = float(G[3])
        self.half_width = 0.5 * lane_width
        self.lane_width = lane_width
        self.expansion = float(expansion)
        self.obstacle = obstacle
        if obstacle is not None:
            if obstacle.center is None:
                raise ValueError("obstacle must be placed on a road first")
            self.cx = float(obstacle.center[0])
            self.cy = float(obstacle.center[1])
            self.radius_sq = obstacle.radius ** 2
            self.threshold_sq = obstacle.detect_threshold ** 2
            # Lateral level h_right compares against at Phi = 1.
            self.right_level = self.half_width + obstacle.edge_offset

    def squared_distance(self, X, Y):
        if self.obstacle is None:
            return inf
        dx = X - self.cx
        dy = Y - self.cy
        return dx * dx + dy * dy - self.radius_sq

    def evaluate(self, state, X, Y, psi_road, psi_dot_ref):
        """All barrier terms at one extended state.

        state is (e1, e1_dot, e2, e2_dot); psi_road is the road tangent at
        the current arc length and psi_dot_ref the local reference yaw
        rate (it enters the drift, not the barrier itself).
        """
        e1, e1d, e2, e2d = float(state[0]), float(state[1]), \
            float(state[2]), float(state[3])
        v = self.speed
        c2, s2 = cos(e2), sin(e2)
        proj = e1 * c2                          # lateral offset along body
        proj_d = e1d * c2 - e1 * s2 * e2d

        if self.obstacle is None:
            h_l = self.half_width - proj
            h_r = self.half_width + proj
            f2 = self.a22 * e1d + self.a23 * e2 + self.a24 * e2d \
                + self.g2 * psi_dot_ref
            f4 = self.a42 * e1d + self.a43 * e2 + self.a44 * e2d \
                + self.g4 * psi_dot_ref
            proj_dd = f2 * c2 - 2.0 * e1d * s2 * e2d - e1 * c2 * e2d * e2d \
                - e1 * s2 * f4
            u_coeff = self.b2 * c2 - self.b4 * e1 * s2
            return BarrierEval(inf, 0.0, h_l, h_r, -proj_d, proj_d,
                               -proj_dd, proj_dd, -u_coeff, u_coeff)

        chi = e2 + psi_road
        cchi, schi = cos(chi), sin(chi)
        vy = e1d - v * e2
        Xd = v * cchi - vy * schi
        Yd = v * schi + vy * cchi
        dx = X - self.cx
        dy = Y - self.cy
        d = dx * dx + dy * dy - self.radius_sq
        phi, dphi, d2phi = smooth_step(d, self.threshold_sq)

        h_l = self.half_width + self.expansion * phi - proj
        h_r = self.half_width + proj - self.right_level * phi

        d_dot = 2.0 * (dx * Xd + dy * Yd)
        lf_l = self.expansion * dphi * d_dot - proj_d
        lf_r = proj_d - self.right_level * dphi * d_dot

        # Drift accelerations (u = 0); the input contribution lives in the
        # L_gL_f terms below.
        f2 = self.a22 * e1d + self.a23 * e2 + self.a24 * e2d \
            + self.g2 * psi_dot_ref
        f4 = self.a42 * e1d + self.a43 * e2 + self.a44 * e2d \
            + self.g4 * psi_dot_ref
        chi_d = e2d + psi_dot_ref
        vy_d = f2 - v * e2d
        Xdd = -v * schi * chi_d - vy_d * schi - vy * cchi * chi_d
        Ydd = v * cchi * chi_d + vy_d * cchi - vy * schi * chi_d
        d_ddot = 2.0 * (Xd * Xd + Yd * Yd + dx * Xdd + dy * Ydd)
        proj_dd = f2 * c2 - 2.0 * e1d * s2 * e2d - e1 * c2 * e2d * e2d \
            - e1 * s2 * f4
        bump = d2phi * d_dot * d_dot + dphi * d_ddot
        lf2_l = self.expansion * bump - proj_dd
        lf2_r = proj_dd - self.right_level * bump

        # Steering direction: P contributes b2 cos e2 - b4 e1 sin e2, the
        # pose rates contribute through d_ddot with -2 b2 dphi (dx sin chi
        # - dy cos chi).
        u_coeff = self.b2 * c2 - self.b4 * e1 * s2
        bracket = dx * schi - dy * cchi
        mixing = -2.0 * self.b2 * dphi * bracket
        lglf_l = -u_coeff + self.expansion * mixing
        lglf_r = u_coeff - self.right_level * mixing

        return BarrierEval(d, phi, h_l, h_r, lf_l, lf_r, lf2_l, lf2_r,
                           lglf_l, lglf_r)
