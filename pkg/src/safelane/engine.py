"""Closed-loop simulation: fine-step plant, sampled MPC, continuous filter.

The plant is the lateral error model plus world pose, integrated with RK4
at the fine step. The tracking MPC recomputes at its own period and its
move is held between samples; the safety filter is a continuous feedback
law evaluated inside every integrator stage (and logged once per fine
step), so barrier invariance holds to integrator accuracy rather than
sample-and-hold accuracy. Saturation is a separate final stage so the
same filter runs clipped and unclipped. Detection latching, gain-schedule
construction, and the handoff freeze happen at fine-step boundaries.
"""

import io
from dataclasses import dataclass, field
from math import cos, sin, isnan

import numpy as np

from .barriers import BarrierPair
from .filters import (ConstraintRow, PrescribedTime,
                      assemble_and_solve_filter_qp, check_gain_admissibility,
                      constraint_terms, gain_schedule, margin_constraint,
                      post_passing_handoff)
from .mpc import DiscreteModel, MpcTracker
from .numerics import rk4_step
from .road import estimate_passing_time
from .vehicle import lateral_matrices

SECOND_ORDER_MODES = ("exponential", "prescribed_time")
PRESCRIBED_MODES = ("prescribed_time", "prescribed_time_input_constrained")

COLUMNS = ("t", "X", "Y", "s", "e1", "ė1", "e2", "ė2", "ψ_r", "ψ̇_ref",
           "u_s", "u_mpc", "u_override_ℓ", "u_override_r", "u_safe",
           "u_applied", "h_ℓ", "h_r", "d", "Φ", "μ₂", "detected",
           "feasible_mpc", "feasible_filter", "slack", "singularity_count")
_INT_COLUMNS = ("detected", "feasible_mpc", "feasible_filter",
                "singularity_count")


class EngineError(RuntimeError):
    """Simulation setup or integration fault."""


@dataclass(frozen=True)
class SimConfig:
    """Run-level knobs: horizon, rates, saturation, start state."""
    label: str = "scenario"
    duration: float = 30.0
    dt_fine: float = 1e-3
    mpc_period: float = 0.05
    saturation: str = "none"              # "none" | "hard_clip"
    initial_errors: tuple = (0.0, 0.0, 0.0, 0.0)
    initial_arclength: float = 0.0
    filter_enabled: bool = True
    seed: int = None                      # carried for sampled tests only

    def __post_init__(self):
        if self.duration <= 0.0:
            raise EngineError("duration must be positive")
        if self.dt_fine <= 0.0:
            raise EngineError("fine step must be positive")
        ratio = self.mpc_period / self.dt_fine
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise EngineError("MPC period must be an integer multiple of "
                              "the fine step")
        if self.saturation not in ("none", "hard_clip"):
            raise EngineError(f"unknown saturation mode {self.saturation!r}")
        if len(self.initial_errors) != 4:
            raise EngineError("initial error state needs 4 components")


@dataclass
class SimLog:
    """Column store of one run plus a small metadata record."""
    data: dict
    meta: dict = field(default_factory=dict)

    @property
    def rows(self):
        return len(self.data["t"])

    def __getitem__(self, column):
        return self.data[column]

    def summary(self):
        d = self.data
        lane_offset = np.abs(d["e1"] * np.cos(d["e2"]))
        detect = d["t"][d["detected"] > 0.5]
        return {
            "rows": self.rows,
            "min_h_left": float(np.min(d["h_ℓ"])),
            "min_h_right": float(np.min(d["h_r"])),
            "min_d": float(np.min(d["d"])),
            "peak_override": float(np.max(np.abs(d["u_safe"] - d["u_mpc"]))),
            "max_lane_offset": float(np.max(lane_offset)),
            "max_slack": float(np.max(d["slack"])),
            "mpc_infeasible_rows": int(np.sum(d["feasible_mpc"] < 0.5)),
            "filter_infeasible_rows": int(np.sum(d["feasible_filter"] < 0.5)),
            "singularities": int(d["singularity_count"][-1]),
            "detected_time": float(detect[0]) if detect.size else None,
        }

    def to_csv(self, path):
        body = np.column_stack([self.data[c] for c in COLUMNS])
        fmt = ["%d" if c in _INT_COLUMNS else "%.9g" for c in COLUMNS]
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(COLUMNS) + "\n")
            np.savetxt(f, body, fmt=fmt, delimiter=",", newline="\n")

    @classmethod
    def from_csv(cls, path):
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            if header.split(",") != list(COLUMNS):
                raise EngineError(f"unexpected log header in {path}")
            rest = f.read()
        if not rest.strip():
            return cls({c: np.empty(0) for c in COLUMNS}, {"label": path})
        body = np.loadtxt(io.StringIO(rest), delimiter=",", ndmin=2)
        if body.shape[1] != len(COLUMNS):
            raise EngineError(f"wrong column count in {path}")
        return cls({c: body[:, i].copy() for i, c in enumerate(COLUMNS)},
                   {"label": path})


def _second_order_row(ev, side, gains, soft):
    c1, c2, c1_dot = gains
    offset, gain = constraint_terms(ev, side, c1, c2, c1_dot)
    return ConstraintRow(side, offset, gain, soft)


def _margin_row(pair, z7, psi_dot_ref, t, side, gains_fn, c3, u_max, soft):
    offset, gain, _ = margin_constraint(pair, z7, psi_dot_ref, t, side,
                                        gains_fn, c3, u_max)
    return ConstraintRow(side, offset, gain, soft)


def scenario_pair(params, road, obstacle, expansion="auto"):
    """Barrier pair for a scenario, placing the obstacle if needed.

    ``expansion`` "auto" matches the sharing construction (half width
    plus obstacle edge offset). Replay of a finished log must use the
    pair built this same way.
    """
    half = 0.5 * road.lane_width
    if obstacle is not None and obstacle.center is None:
        obstacle.place(road)
    if expansion == "auto":
        e_v = half + obstacle.edge_offset if obstacle is not None else half
    else:
        e_v = float(expansion)
    return BarrierPair(params, road.lane_width, e_v, obstacle)


def simulate_scenario(cfg, params, road, obstacle, filter_cfg, mpc_cfg,
                      expansion="auto", terminal_set=None):
    """Run the closed loop and return the per-fine-step SimLog.

    ``obstacle`` may be None (pure lane keeping). ``expansion`` "auto"
    matches the sharing construction (half width plus obstacle edge
    offset). MPC and filter infeasibility are logged events, never
    aborts; only setup inconsistencies raise.
    """
    if abs(mpc_cfg.dt - cfg.mpc_period) > 1e-12:
        raise EngineError("MPC discretization step must equal the MPC "
                          "period")
    v = params.speed
    pair = scenario_pair(params, road, obstacle, expansion)

    model = DiscreteModel.from_vehicle(params, mpc_cfg.dt)
    tracker = MpcTracker(model, mpc_cfg, terminal_set=terminal_set)

    A, B, G = lateral_matrices(params)
    a22, a23, a24 = A[1, 1], A[1, 2], A[1, 3]
    a42, a43, a44 = A[3, 1], A[3, 2], A[3, 3]
    b2, b4 = B[1], B[3]
    g2, g4 = G[1], G[3]
    curvature = road.curvature

    def plant_rhs(_t, z, u):
        e1, e1d, e2, e2d, _X, _Y, psi_r, s = z
        pdr = v * curvature(s)
        chi = e2 + psi_r
        vy = e1d - v * e2
        return np.array([
            e1d,
            a22 * e1d + a23 * e2 + a24 * e2d + g2 * pdr + b2 * u,
            e2d,
            a42 * e1d + a43 * e2 + a44 * e2d + g4 * pdr + b4 * u,
            v * cos(chi) - vy * sin(chi),
            v * sin(chi) + vy * cos(chi),
            pdr,
            v,
        ])

    fc = filter_cfg
    lane_gains = gain_schedule(fc.lane_c1, fc.lane_c2)
    right_gains = gain_schedule(fc.obstacle_c1, fc.obstacle_c2)
    lane_is_margin = fc.lane_mode == "input_constrained"
    right_is_margin = fc.obstacle_mode in (
        "input_constrained", "prescribed_time_input_constrained")
    sharing_geometry = obstacle is None or pair.expansion == pair.right_level

    def build_rows(at_pair, z7, pdr, ev, t):
        rows = []
        if lane_is_margin:
            rows.append(_margin_row(at_pair, z7, pdr, t, "left", lane_gains,
                                    fc.lane_c3, fc.u_max, soft=True))
        else:
            rows.append(_second_order_row(ev, "left", lane_gains(t),
                                          soft=True))
        if right_is_margin:
            rows.append(_margin_row(at_pair, z7, pdr, t, "right",
                                    right_gains, fc.obstacle_c3, fc.u_max,
                                    soft=False))
        else:
            rows.append(_second_order_row(ev, "right", right_gains(t),
                                          soft=False))
        sharing = None
        if not lane_is_margin and not right_is_margin and sharing_geometry:
            gl, gr = lane_gains(t), right_gains(t)
            if gl == gr:
                sharing = (road.lane_width, gl[0], gl[1], gl[2])
        return rows, sharing

    n_steps = int(round(cfg.duration / cfg.dt_fine))
    if abs(n_steps * cfg.dt_fine - cfg.duration) > 1e-9:
        raise EngineError("duration must be an integer number of fine steps")
    mpc_every = int(round(cfg.mpc_period / cfg.dt_fine))
    horizon_idx = np.arange(mpc_cfg.horizon + 1)

    cols = {c: np.zeros(n_steps + 1) for c in COLUMNS}
    z = np.empty(8)
    z[:4] = cfg.initial_errors
    s0 = cfg.initial_arclength
    start = road.position(s0) + road.left_normal(s0) * z[0]
    z[4], z[5] = start
    z[6] = road.heading(s0)
    z[7] = s0

    # Latched records shared by the logging loop and the integrator stages.
    u_mpc = 0.0
    feasible_mpc = True
    detected = False
    pt = None
    u_frozen = None
    singularities = 0
    sat = mpc_cfg.u_max if cfg.saturation == "hard_clip" else None

    handoff_mode = fc.obstacle_mode in PRESCRIBED_MODES

    def filter_output(t, z_now):
        """Safety-filter feedback at (t, state) under the latched records.

        Both constraint rows stay in the program for the whole run: once
        the disk falls behind, the proximity weight decays and the right
        row turns back into plain right-edge lane keeping. Prescribed-time
        schedules are held at their gain cap past the passing time; there
        the nominal input ramps from the frozen boundary value back to the
        tracker command over tau_ramp, with the program still filtering the
        blend, so the barrier rows are never bypassed.
        """
        pdr_now = v * curvature(z_now[7])
        z7 = z_now[:7]
        u_nom = u_mpc
        if handoff_mode and pt is not None and t >= pt.t_end \
                and u_frozen is not None:
            u_nom = post_passing_handoff(t, pt, fc.tau_ramp, u_frozen,
                                         u_mpc)
        ev_now = pair.evaluate(z_now[:4], z_now[4], z_now[5],
                               z_now[6], pdr_now)
        rows, sharing = build_rows(pair, z7, pdr_now, ev_now, t)
        dec = assemble_and_solve_filter_qp(
            u_nom, rows, u_max=fc.u_max, eps_lg=fc.eps_lg,
            soft_penalty=fc.soft_penalty, sharing=sharing)
        return dec.u_safe, dec

    def closed_loop_rhs(t, z_now):
        if cfg.filter_enabled:
            u, _ = filter_output(t, z_now)
        else:
            u = u_mpc
        if sat is not None:
            u = min(max(u, -sat), sat)
        return plant_rhs(t, z_now, u)

    for k in range(n_steps + 1):
        t = k * cfg.dt_fine
        s = z[7]
        pdr = v * curvature(s)

        if k % mpc_every == 0:
            preview = np.array([v * curvature(s + v * mpc_cfg.dt * i)
                                for i in horizon_idx])
            step = tracker.step(z[:4], preview)
            u_mpc = step.u
            feasible_mpc = step.feasible

        ev = pair.evaluate(z[:4], z[4], z[5], z[6], pdr)
        if (obstacle is not None and not detected
                and ev.d <= pair.threshold_sq):
            detected = True
            duration = estimate_passing_time(
                road, s, obstacle.pass_end_arclength, v)
            pt = PrescribedTime(t, duration)
            if fc.obstacle_mode in PRESCRIBED_MODES:
                right_gains = gain_schedule(fc.obstacle_c1, fc.obstacle_c2,
                                            pt=pt, mu_max=fc.mu_max)
            if cfg.filter_enabled:
                check_gain_admissibility(ev, "left", lane_gains(t)[0])
                check_gain_admissibility(ev, "right", right_gains(t)[0])

        if not cfg.filter_enabled:
            u_safe = u_mpc
            ov_l = ov_r = np.nan
            feasible_filter = True
            slack = 0.0
        else:
            u_safe, dec = filter_output(t, z)
            ov_l, ov_r = dec.override_left, dec.override_right
            feasible_filter = dec.feasible
            slack = dec.slack
            singularities += len(dec.singular_sides)

        # Freeze the blend source before the step that crosses the window
        # end so every later evaluation (stages included) sees it.
        if (handoff_mode and pt is not None and u_frozen is None
                and t + cfg.dt_fine >= pt.t_end):
            u_frozen = u_safe

        u_applied = u_safe if sat is None else min(max(u_safe, -sat), sat)

        if detected and fc.obstacle_mode in PRESCRIBED_MODES:
            mu = right_gains(t)[0] / fc.obstacle_c1
        else:
            mu = np.nan

        row = (t, z[4], z[5], s, z[0], z[1], z[2], z[3], z[6], pdr,
               model.u_gain * pdr, u_mpc, ov_l, ov_r, u_safe, u_applied,
               ev.h_left, ev.h_right, ev.d, ev.phi, mu, float(detected),
               float(feasible_mpc), float(feasible_filter), slack,
               float(singularities))
        for c, value in zip(COLUMNS, row):
            cols[c][k] = value

        if k < n_steps:
            z = rk4_step(closed_loop_rhs, t, z, cfg.dt_fine)
            if not np.all(np.isfinite(z)):
                raise EngineError(f"integration diverged at t={t:.3f}")

    meta = {
        "label": cfg.label,
        "detected": detected,
        "t_obs": pt.t_obs if pt is not None else None,
        "passing_duration": pt.duration if pt is not None else None,
        "mpc_infeasible_count": tracker.infeasible_count,
    }
    return SimLog(cols, meta)


def replay_check(log, pair, sharing=None, rel_tol=1e-6, abs_tol=1e-7):
    """Recompute barrier columns from logged states; list mismatches.

    ``pair`` must be built from the same vehicle, lane, expansion, and
    obstacle as the run. ``sharing`` = (c1, c2, c1_dot) additionally
    checks the override-gap identity on rows where both overrides are
    finite (constant equal gains only). Tolerances allow for the 9
    significant digits kept by the CSV round trip.
    """
    d = log.data
    violations = []
    for i in range(log.rows):
        state = (d["e1"][i], d["ė1"][i], d["e2"][i], d["ė2"][i])
        ev = pair.evaluate(state, d["X"][i], d["Y"][i], d["ψ_r"][i],
                           d["ψ̇_ref"][i])
        checks = [("h_ℓ", ev.h_left), ("h_r", ev.h_right), ("Φ", ev.phi),
                  ("d", ev.d)]
        for column, value in checks:
            logged = d[column][i]
            if np.isinf(logged) and np.isinf(value):
                continue
            if abs(logged - value) > abs_tol + rel_tol * abs(value):
                violations.append((i, column, float(logged), float(value)))
        if sharing is not None:
            ov_l, ov_r = d["u_override_ℓ"][i], d["u_override_r"][i]
            if not (isnan(ov_l) or isnan(ov_r)):
                c1, c2, c1_dot = sharing
                want = -(c1_dot + c1 * c2) * pair.lane_width / ev.lglf_left
                if abs((ov_l - ov_r) - want) > abs_tol + rel_tol * abs(want):
                    violations.append((i, "sharing_gap",
                                       float(ov_l - ov_r), float(want)))
    return violations
