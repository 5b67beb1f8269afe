"""High-level safety overrides and the scalar safety-filter QP.

Four override families act on the relative-degree-two barrier pair:

* exponential: constant-gain second-order barrier condition
  L_f^2 h + (c1+c2) L_f h + c1 c2 h + L_gL_f h u >= 0.
* prescribed_time: the gains grow along a blow-up schedule mu2 so the
  constraint tightens toward a chosen terminal time; the schedule's own
  rate adds a c1_dot h term.
* input_constrained: the constraint above cannot always be met under
  |u| <= u_max, so a margin barrier b2 subtracts the worst-case input
  contribution and is itself filtered through a first-order condition
  L_f b2 + L_g b2 u + c3 b2 >= 0.
* prescribed_time_input_constrained: the margin construction with the
  scheduled gains inside b2 (the time dependence enters its total
  derivative).

The admissible set per instant is an interval (plus an optional input
box); the filter is the closed-form projection of the nominal input onto
it, with the lane side softened under a quadratic penalty when the
interval is empty so the obstacle side always stays hard.
"""

import warnings
from dataclasses import dataclass, field
from math import exp, sqrt

import numpy as np

from .numerics import rk4_step

LANE_MODES = ("exponential", "input_constrained")
OBSTACLE_MODES = ("exponential", "prescribed_time", "input_constrained",
                  "prescribed_time_input_constrained")
PT_MODES = ("prescribed_time", "prescribed_time_input_constrained")
IC_MODES = ("input_constrained", "prescribed_time_input_constrained")


class FilterError(ValueError):
    """Invalid filter configuration or evaluation outside a domain."""


class SingularityError(FilterError):
    """Input direction vanished: the override value is undefined."""


@dataclass(frozen=True)
class FilterConfig:
    """Gains and mode selection for the two-sided safety filter.

    The left (lane-edge) constraint supports the constant-gain and
    input-constrained modes; the right (obstacle) constraint additionally
    supports the prescribed-time schedules. u_max is the input box used
    by the input-constrained modes (None = unconstrained, only valid
    when neither side uses a margin barrier).
    """
    lane_mode: str = "exponential"
    obstacle_mode: str = "exponential"
    lane_c1: float = 15.0
    lane_c2: float = 15.0
    lane_c3: float = 0.0
    obstacle_c1: float = 15.0
    obstacle_c2: float = 15.0
    obstacle_c3: float = 0.0
    u_max: float = None
    mu_max: float = 1e4
    tau_ramp: float = 1.0
    eps_lg: float = 1e-6
    soft_penalty: float = 1e6

    def __post_init__(self):
        if self.lane_mode not in LANE_MODES:
            raise FilterError(f"unknown lane mode {self.lane_mode!r}")
        if self.obstacle_mode not in OBSTACLE_MODES:
            raise FilterError(
                f"unknown obstacle mode {self.obstacle_mode!r}")
        for name in ("lane_c1", "lane_c2", "obstacle_c1", "obstacle_c2"):
            if getattr(self, name) <= 0.0:
                raise FilterError(f"{name} must be positive")
        for side in ("lane", "obstacle"):
            if getattr(self, side + "_mode") in IC_MODES:
                if getattr(self, side + "_c3") <= 0.0:
                    raise FilterError(
                        f"{side}_c3 must be positive in input-constrained "
                        "modes")
                if self.u_max is None:
                    raise FilterError("input-constrained modes need u_max")
        if self.u_max is not None and self.u_max <= 0.0:
            raise FilterError("u_max must be positive when given")
        if self.mu_max <= 1.0:
            raise FilterError("mu_max must exceed 1")
        if self.tau_ramp <= 0.0:
            raise FilterError("tau_ramp must be positive")
        if self.eps_lg <= 0.0 or self.soft_penalty <= 0.0:
            raise FilterError("eps_lg and soft_penalty must be positive")


@dataclass(frozen=True)
class PrescribedTime:
    """Blow-up schedule window: activation instant and duration."""
    t_obs: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0.0:
            raise FilterError("prescribed-time duration must be positive")

    def mu2(self, t):
        """(1 - tau/T)^-2 on [t_obs, t_obs + T); 1 at activation."""
        tau = t - self.t_obs
        if tau < 0.0 or tau >= self.duration:
            raise FilterError("time outside the prescribed window")
        return (1.0 - tau / self.duration) ** -2

    def mu2_dot(self, t):
        tau = t - self.t_obs
        if tau < 0.0 or tau >= self.duration:
            raise FilterError("time outside the prescribed window")
        return (2.0 / self.duration) * (1.0 - tau / self.duration) ** -3

    @property
    def t_end(self):
        return self.t_obs + self.duration


def ptsf_gains(pt, c1_0, c2_0, t, mu_max=1e4):
    """Scheduled gains (c1, c2, c1_dot) inside the blow-up window.

    c_j(t) = c_j^0 * min(mu2, mu_max); once the cap binds the schedule is
    frozen, so c1_dot drops to zero there.
    """
    mu = pt.mu2(t)
    if mu >= mu_max:
        return c1_0 * mu_max, c2_0 * mu_max, 0.0
    return c1_0 * mu, c2_0 * mu, c1_0 * pt.mu2_dot(t)


def gain_schedule(c1_0, c2_0, pt=None, mu_max=1e4):
    """Total-time gain evaluator t -> (c1, c2, c1_dot).

    Constant gains when pt is None; otherwise constant before activation,
    the blow-up schedule inside the window, and held at the cap from the
    window end on (the filter hands control back around then, the hold
    only keeps the evaluator total).
    """
    if pt is None:
        return lambda t: (c1_0, c2_0, 0.0)

    def scheduled(t):
        if t < pt.t_obs:
            return c1_0, c2_0, 0.0
        if t >= pt.t_end:
            return c1_0 * mu_max, c2_0 * mu_max, 0.0
        return ptsf_gains(pt, c1_0, c2_0, t, mu_max)

    return scheduled


# --- second-order barrier constraints --------------------------------------

def _side_terms(ev, side):
    if side == "left":
        return ev.h_left, ev.lf_left, ev.lf2_left, ev.lglf_left
    if side == "right":
        return ev.h_right, ev.lf_right, ev.lf2_right, ev.lglf_right
    raise FilterError(f"unknown barrier side {side!r}")


def constraint_terms(ev, side, c1, c2, c1_dot=0.0):
    """Affine constraint offset + gain * u >= 0 for one side."""
    h, lf, lf2, lglf = _side_terms(ev, side)
    offset = lf2 + (c1 + c2) * lf + (c1_dot + c1 * c2) * h
    return offset, lglf


def exponential_override(ev, side, c1, c2, eps_lg=1e-6):
    """Boundary input of the constant-gain constraint, -offset/gain."""
    offset, gain = constraint_terms(ev, side, c1, c2)
    if abs(gain) <= eps_lg:
        raise SingularityError(f"{side} input direction below {eps_lg}")
    return -offset / gain


def prescribed_time_override(ev, side, c1, c2, c1_dot, eps_lg=1e-6):
    """Boundary input with scheduled gains; c1_dot = 0 recovers the
    constant-gain override exactly."""
    offset, gain = constraint_terms(ev, side, c1, c2, c1_dot)
    if abs(gain) <= eps_lg:
        raise SingularityError(f"{side} input direction below {eps_lg}")
    return -offset / gain


def sharing_gap(lane_width, c1, c2, lglf_left, c1_dot=0.0):
    """Predicted override gap u_left - u_right in the sharing regime.

    With the expansion matched to the obstacle edge the pair sums to the
    lane width and the input directions cancel, which collapses the two
    override laws to a single gap -(c1_dot + c1 c2) w / L_gL_f h_left.
    """
    return -(c1_dot + c1 * c2) * lane_width / lglf_left


# --- input-constrained margin construction ---------------------------------

_ABS_SMOOTH = 1e-9


def _smooth_abs(x):
    return sqrt(x * x + _ABS_SMOOTH * _ABS_SMOOTH)


def margin_barrier(ev, side, c1, c2, u_max, c1_dot=0.0):
    """b2: the second-order constraint offset minus the worst-case input
    term u_max |L_gL_f h| (smoothed absolute value)."""
    offset, gain = constraint_terms(ev, side, c1, c2, c1_dot)
    return offset - u_max * _smooth_abs(gain)


def drift_rhs(pair, z, psi_dot_ref, u=0.0):
    """Extended-state rate (e1, e1', e2, e2', X, Y, psi_road) with the
    local reference yaw rate frozen."""
    e1, e1d, e2, e2d, _, _, psi = z
    v = pair.speed
    chi = e2 + psi
    vy = e1d - v * e2
    return np.array([
        e1d,
        pair.a22 * e1d + pair.a23 * e2 + pair.a24 * e2d
        + pair.g2 * psi_dot_ref + pair.b2 * u,
        e2d,
        pair.a42 * e1d + pair.a43 * e2 + pair.a44 * e2d
        + pair.g4 * psi_dot_ref + pair.b4 * u,
        v * np.cos(chi) - vy * np.sin(chi),
        v * np.sin(chi) + vy * np.cos(chi),
        psi_dot_ref,
    ])


def drift_flow_step(pair, z, psi_dot_ref, dt, u=0.0):
    return rk4_step(lambda t, zz: drift_rhs(pair, zz, psi_dot_ref, u),
                    0.0, z, dt)


def _margin_at(pair, z, psi_dot_ref, side, c1, c2, u_max, c1_dot):
    ev = pair.evaluate(z[:4], z[4], z[5], z[6], psi_dot_ref)
    return margin_barrier(ev, side, c1, c2, u_max, c1_dot)


def margin_constraint(pair, z, psi_dot_ref, t, side, gains, c3, u_max,
                      delta=1e-6):
    """Affine row (offset, gain, b2) of the margin-barrier condition.

    offset = d/dt b2 along the drift (including the gain schedule's own
    time dependence) + c3 b2; gain = input direction of b2. Both
    derivatives are central finite differences of b2 along the
    closed-form dynamics rather than third-order hand formulas.
    """
    c1, c2, c1_dot = gains(t)
    b2 = _margin_at(pair, z, psi_dot_ref, side, c1, c2, u_max, c1_dot)

    zp = drift_flow_step(pair, z, psi_dot_ref, delta)
    zm = drift_flow_step(pair, z, psi_dot_ref, -delta)
    cp = gains(t + delta)
    cm = gains(t - delta)
    bp = _margin_at(pair, zp, psi_dot_ref, side, cp[0], cp[1], u_max, cp[2])
    bm = _margin_at(pair, zm, psi_dot_ref, side, cm[0], cm[1], u_max, cm[2])
    b2_dot = (bp - bm) / (2.0 * delta)

    g = np.zeros(7)
    g[1] = pair.b2
    g[3] = pair.b4
    bgp = _margin_at(pair, z + delta * g, psi_dot_ref, side, c1, c2,
                     u_max, c1_dot)
    bgm = _margin_at(pair, z - delta * g, psi_dot_ref, side, c1, c2,
                     u_max, c1_dot)
    lg_b2 = (bgp - bgm) / (2.0 * delta)

    return b2_dot + c3 * b2, lg_b2, b2


def _iterated_margin(pair, z, psi_dot_ref, t, side, gains, u_max,
                     extra_gains, delta):
    """Margin value after iterating the construction len(extra_gains)
    times: each round replaces b with db/dt - u_max |L_g b| + c b."""
    if not extra_gains:
        c1, c2, c1_dot = gains(t)
        return _margin_at(pair, z, psi_dot_ref, side, c1, c2, u_max, c1_dot)
    c_here = extra_gains[-1]
    rest = extra_gains[:-1]

    def level(zz, tt):
        return _iterated_margin(pair, zz, psi_dot_ref, tt, side, gains,
                                u_max, rest, delta)

    zp = drift_flow_step(pair, z, psi_dot_ref, delta)
    zm = drift_flow_step(pair, z, psi_dot_ref, -delta)
    b_dot = (level(zp, t + delta) - level(zm, t - delta)) / (2.0 * delta)
    g = np.zeros(7)
    g[1] = pair.b2
    g[3] = pair.b4
    lg = (level(z + delta * g, t) - level(z - delta * g, t)) / (2.0 * delta)
    return b_dot - u_max * _smooth_abs(lg) + c_here * level(z, t)


def validate_margin_barrier(pair, side, gains, c3, u_max, rng,
                            n_samples=10000, time_range=(0.0,),
                            extra_gains=(), delta=1e-6):
    """Sampled invalidation test for a margin-barrier candidate.

    Draws random extended states around the obstacle, keeps those in the
    candidate's claimed safe region (h >= 0 and b >= 0), and minimizes
    d/dt b + u_max |L_g b| + c3 b (best-case input) over them. A negative
    minimum invalidates the candidate; the sign is informational. The
    report carries the minimum, its witness (state, time), and counts.
    extra_gains iterates the construction once per entry (coarser FD).
    """
    if pair.obstacle is None:
        raise FilterError("margin validation needs an obstacle")
    step = delta if not extra_gains else 1e-4
    T = pair.threshold_sq
    r_sq = pair.radius_sq
    best = np.inf
    witness = None
    kept = 0
    times = np.asarray(time_range, dtype=float)
    for _ in range(n_samples):
        d = rng.uniform(-0.9 * r_sq, 2.0 * T)
        rho = sqrt(d + r_sq)
        theta = rng.uniform(-np.pi, np.pi)
        z = np.array([
            rng.uniform(-2.0, 2.0), rng.uniform(-3.0, 3.0),
            rng.uniform(-0.35, 0.35), rng.uniform(-1.0, 1.0),
            pair.cx + rho * np.cos(theta), pair.cy + rho * np.sin(theta),
            rng.uniform(-np.pi, np.pi)])
        t = float(times[rng.integers(len(times))])
        psi_dot_ref = 0.0
        ev = pair.evaluate(z[:4], z[4], z[5], z[6], psi_dot_ref)
        h = ev.h_left if side == "left" else ev.h_right
        if h < 0.0:
            continue
        b_here = _iterated_margin(pair, z, psi_dot_ref, t, side, gains,
                                  u_max, extra_gains, step)
        if b_here < 0.0:
            continue
        kept += 1
        if not extra_gains:
            offset, lg, b2 = margin_constraint(
                pair, z, psi_dot_ref, t, side, gains, 0.0, u_max, step)
            value = offset + u_max * abs(lg) + c3 * b2
        else:
            def level(zz, tt):
                return _iterated_margin(pair, zz, psi_dot_ref, tt, side,
                                        gains, u_max, extra_gains, step)
            zp = drift_flow_step(pair, z, psi_dot_ref, step)
            zm = drift_flow_step(pair, z, psi_dot_ref, -step)
            b_dot = (level(zp, t + step) - level(zm, t - step)) / (2 * step)
            g = np.zeros(7)
            g[1] = pair.b2
            g[3] = pair.b4
            lg = (level(z + step * g, t) - level(z - step * g, t)) \
                / (2 * step)
            value = b_dot + u_max * abs(lg) + c3 * b_here
        if value < best:
            best = value
            witness = (z.copy(), t)
    return {"min_value": best, "witness": witness, "n_samples": n_samples,
            "n_in_region": kept, "iterations": len(extra_gains)}


# --- scalar QP assembly ------------------------------------------------------

@dataclass(frozen=True)
class ConstraintRow:
    """One affine admissibility row offset + gain * u >= 0."""
    side: str            # 'left' (lane, softenable) or 'right' (obstacle)
    offset: float
    gain: float
    soft: bool = False


@dataclass
class FilterDecision:
    """Outcome of one filter solve."""
    u_safe: float
    override_left: float = np.nan
    override_right: float = np.nan
    active_left: bool = False
    active_right: bool = False
    feasible: bool = True
    slack: float = 0.0
    singular_sides: tuple = field(default_factory=tuple)


def assemble_and_solve_filter_qp(u_nominal, rows, u_max=None, eps_lg=1e-6,
                                 soft_penalty=1e6, sharing=None):
    """Project the nominal input onto the admissible interval.

    Each row with positive gain is a lower bound -offset/gain, negative
    gain an upper bound; |gain| <= eps_lg drops the row for this instant
    and records the side as singular. u_max adds a hard input box. The
    feasible solve is the closed-form clamp. When bounds cross, soft
    (lane) rows yield under a quadratic penalty on the slack measured in
    input units, hard rows never yield; if hard rows conflict among
    themselves (obstacle bound outside the box) the result is the box
    point nearest the obstacle bound, with the miss reported as slack and
    the feasibility flag cleared.

    sharing = (lane_width, c1, c2, c1_dot) turns on the internal
    consistency check that the two overrides differ by the closed-form
    sharing gap (requires both sides present with equal gains).
    """
    lo, lo_src = -np.inf, None
    up, up_src = np.inf, None
    lo_hard = -np.inf
    up_hard = np.inf
    lo_soft = -np.inf
    up_soft = np.inf
    singular = []
    overrides = {}
    for row in rows:
        if abs(row.gain) <= eps_lg:
            singular.append(row.side)
            continue
        bound = -row.offset / row.gain
        overrides[row.side] = bound
        if row.gain > 0.0:
            if bound > lo:
                lo, lo_src = bound, row
            if row.soft:
                lo_soft = max(lo_soft, bound)
            else:
                lo_hard = max(lo_hard, bound)
        else:
            if bound < up:
                up, up_src = bound, row
            if row.soft:
                up_soft = min(up_soft, bound)
            else:
                up_hard = min(up_hard, bound)
    if u_max is not None:
        if -u_max > lo:
            lo, lo_src = -u_max, None
        if u_max < up:
            up, up_src = u_max, None
        lo_hard = max(lo_hard, -u_max)
        up_hard = min(up_hard, u_max)

    decision = FilterDecision(u_safe=u_nominal,
                              singular_sides=tuple(singular))
    decision.override_left = overrides.get("left", np.nan)
    decision.override_right = overrides.get("right", np.nan)

    if sharing is not None and "left" in overrides and "right" in overrides:
        w_l, c1, c2, c1_dot = sharing
        lglf_left = next(r.gain for r in rows if r.side == "left")
        gap = overrides["left"] - overrides["right"]
        want = sharing_gap(w_l, c1, c2, lglf_left, c1_dot)
        if abs(gap - want) > 1e-8 * max(1.0, abs(gap)):
            raise FilterError(
                "control-sharing identity violated: gap "
                f"{gap!r} vs predicted {want!r}")

    if lo <= up:
        u = min(max(u_nominal, lo), up)
        decision.u_safe = u
        if u != u_nominal:
            src = lo_src if u == lo else up_src
            if src is not None:
                if src.side == "left":
                    decision.active_left = True
                else:
                    decision.active_right = True
        return decision

    decision.feasible = False
    decision.active_left = "left" in overrides
    decision.active_right = "right" in overrides
    rho = soft_penalty
    if lo_hard <= up_hard:
        # soft (lane) bounds cross the hard interval: penalized projection
        # with slack in input units, then clamp back into the hard range
        if np.isfinite(up_soft) and np.isfinite(lo_soft) \
                and up_soft < lo_soft:
            target = (u_nominal + rho * (up_soft + lo_soft)) / (1 + 2 * rho)
        elif np.isfinite(up_soft) and up_soft < lo_hard:
            target = (u_nominal + rho * up_soft) / (1.0 + rho)
        else:
            target = (u_nominal + rho * lo_soft) / (1.0 + rho)
        u = min(max(target, lo_hard), up_hard)
    else:
        # hard rows conflict (obstacle bound outside the box): take the
        # least-violation midpoint, never leaving the physical input box
        u = 0.5 * (lo_hard + up_hard)
        if u_max is not None:
            u = min(max(u, -u_max), u_max)
        decision.slack = lo_hard - up_hard
        decision.u_safe = u
        return decision
    slack = 0.0
    if np.isfinite(up_soft):
        slack += max(0.0, u - up_soft)
    if np.isfinite(lo_soft):
        slack += max(0.0, lo_soft - u)
    decision.u_safe = u
    decision.slack = slack
    return decision


# --- post-passing handoff ----------------------------------------------------

def ramp_sigma(theta):
    """Smooth 0 -> 1 ramp with flat ends, exp(-1/x) bump quotient."""
    if theta <= 0.0:
        return 0.0
    if theta >= 1.0:
        return 1.0
    a = exp(-1.0 / theta)
    b = exp(-1.0 / (1.0 - theta))
    return a / (a + b)


def post_passing_handoff(t, pt, tau_ramp, u_filtered, u_lk_filtered):
    """Blend from the frozen full filter to lane-keeping-only filtering.

    Before the window end the full filter output passes through. During
    the ramp, u_filtered must be the value frozen at the window end; the
    result slides from it to the current lane-keeping-only value. After
    the ramp the lane-keeping-only value stands alone.
    """
    t_end = pt.t_end
    if t < t_end:
        return u_filtered
    sigma = ramp_sigma((t - t_end) / tau_ramp)
    return sigma * u_lk_filtered + (1.0 - sigma) * u_filtered


def check_gain_admissibility(ev, side, c1):
    """Warn when the slow gain is below the activation-time floor."""
    h, lf, _, _ = _side_terms(ev, side)
    if h <= 0.0:
        warnings.warn(f"{side} barrier not positive at activation; the "
                      "gain condition cannot hold", stacklevel=2)
        return False
    floor = max(0.0, -lf / h)
    if c1 <= floor:
        warnings.warn(
            f"{side} slow gain {c1} is not above the activation floor "
            f"{floor:.6g}; forward invariance is not guaranteed",
            stacklevel=2)
        return False
    return True
