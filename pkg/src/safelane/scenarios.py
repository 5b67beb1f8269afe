"""Scenario files: schema, audits, and construction of runnable bundles.

A scenario is a YAML document (version 1) bundling the vehicle, road,
optional obstacle, filter, tracker, and simulation settings. Parsing is
strict: unknown keys anywhere are rejected, every field is type-checked,
and the cross-module audits (reference bounds, road length vs. horizon,
sampling ratios) run before anything is simulated.
"""

import importlib.resources
from dataclasses import dataclass

import numpy as np
import yaml

from .engine import SimConfig
from .filters import FilterConfig
from .mpc import (DiscreteModel, MpcConfig, admissible_move_set,
                  disturbance_box, mica_terminal_set, terminal_ingredients)
from .road import Obstacle, Road
from .vehicle import VehicleParams


class ScenarioError(ValueError):
    """Schema violation or failed audit in a scenario file."""


SCHEMA_VERSION = 1

_VEHICLE_KEYS = {"mass", "yaw_inertia", "dist_front", "dist_rear",
                 "cornering_front", "cornering_rear", "speed"}
_SEGMENT_KEYS = {"kind", "length", "curvature"}
_ROAD_KEYS = {"lane_width", "segments"}
_OBSTACLE_KEYS = {"arc_position", "radius", "edge_offset", "detect_distance"}
_FILTER_KEYS = {"lane_mode", "obstacle_mode", "lane_c1", "lane_c2", "lane_c3",
                "obstacle_c1", "obstacle_c2", "obstacle_c3", "u_max",
                "mu_max", "tau_ramp", "eps_lg", "soft_penalty"}
_MPC_KEYS = {"horizon", "q_diag", "r", "beta", "dt", "u_max", "c_psi",
             "c_dpsi", "terminal"}
_SIM_KEYS = {"duration", "dt_fine", "mpc_period", "saturation",
             "initial_errors", "initial_arclength", "filter_enabled", "seed"}
_COMPARISON_KEYS = {"peak_override_ratio_max"}
_TOP_KEYS = {"version", "label", "vehicle", "road", "obstacle", "expansion",
             "filter", "mpc", "sim", "comparison"}


def _check_keys(mapping, allowed, where):
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{where} must be a mapping")
    unknown = set(mapping) - allowed
    if unknown:
        raise ScenarioError(
            f"{where}: unknown key(s) {sorted(unknown)}; allowed keys are "
            f"{sorted(allowed)}")


def _number(mapping, key, where, default=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ScenarioError(f"{where}.{key} is required")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


def _integer(mapping, key, where, required=False, default=None):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ScenarioError(f"{where}.{key} is required")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{where}.{key} must be an integer, got "
                            f"{value!r}")
    return int(value)


def _string(mapping, key, where, default=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ScenarioError(f"{where}.{key} is required")
        return default
    value = mapping[key]
    if not isinstance(value, str):
        raise ScenarioError(f"{where}.{key} must be a string, got {value!r}")
    return value


def _boolean(mapping, key, where, default):
    if key not in mapping or mapping[key] is None:
        return default
    value = mapping[key]
    if not isinstance(value, bool):
        raise ScenarioError(f"{where}.{key} must be a boolean, got {value!r}")
    return value


def _number_list(mapping, key, where, length, default):
    if key not in mapping or mapping[key] is None:
        return default
    value = mapping[key]
    if (not isinstance(value, list) or len(value) != length
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   for v in value)):
        raise ScenarioError(
            f"{where}.{key} must be a list of {length} numbers")
    return [float(v) for v in value]


@dataclass
class Scenario:
    """A fully constructed, audited scenario ready to simulate."""
    label: str
    params: VehicleParams
    road: Road
    obstacle: Obstacle            # or None
    filter_cfg: FilterConfig
    mpc_cfg: MpcConfig
    sim_cfg: SimConfig
    expansion: object             # "auto" or float
    terminal_set: object          # Polytope or None
    comparison: dict              # or None


def _build_vehicle(doc):
    block = doc.get("vehicle")
    if block is None:
        raise ScenarioError("vehicle block is required")
    _check_keys(block, _VEHICLE_KEYS, "vehicle")
    kwargs = {k: _number(block, k, "vehicle", required=True)
              for k in _VEHICLE_KEYS}
    return VehicleParams(**kwargs)


def _build_road(doc):
    block = doc.get("road")
    if block is None:
        raise ScenarioError("road block is required")
    _check_keys(block, _ROAD_KEYS, "road")
    lane_width = _number(block, "lane_width", "road", required=True)
    raw = block.get("segments")
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("road.segments must be a non-empty list")
    segments = []
    for i, seg in enumerate(raw):
        where = f"road.segments[{i}]"
        _check_keys(seg, _SEGMENT_KEYS, where)
        kind = _string(seg, "kind", where, required=True)
        length = _number(seg, "length", where, required=True)
        curvature = _number(seg, "curvature", where, default=0.0)
        segments.append((kind, length, curvature))
    return Road.from_segments(lane_width, segments)


def _build_obstacle(doc):
    block = doc.get("obstacle")
    if block is None:
        return None
    _check_keys(block, _OBSTACLE_KEYS, "obstacle")
    kwargs = {k: _number(block, k, "obstacle", required=True)
              for k in _OBSTACLE_KEYS}
    return Obstacle(**kwargs)


def _build_filter(doc):
    block = doc.get("filter") or {}
    _check_keys(block, _FILTER_KEYS, "filter")
    kwargs = {}
    for key in ("lane_mode", "obstacle_mode"):
        value = _string(block, key, "filter")
        if value is not None:
            kwargs[key] = value
    for key in ("lane_c1", "lane_c2", "lane_c3", "obstacle_c1",
                "obstacle_c2", "obstacle_c3", "u_max", "mu_max",
                "tau_ramp", "eps_lg", "soft_penalty"):
        value = _number(block, key, "filter")
        if value is not None:
            kwargs[key] = value
    return FilterConfig(**kwargs)


def _build_mpc(doc, params):
    block = doc.get("mpc")
    if block is None:
        raise ScenarioError("mpc block is required")
    _check_keys(block, _MPC_KEYS, "mpc")
    horizon = _integer(block, "horizon", "mpc", required=True)
    q_diag = _number_list(block, "q_diag", "mpc", 4, None)
    if q_diag is None:
        raise ScenarioError("mpc.q_diag is required")
    r = _number(block, "r", "mpc", required=True)
    beta = _number(block, "beta", "mpc", required=True)
    dt = _number(block, "dt", "mpc", required=True)
    u_max = _number(block, "u_max", "mpc", required=True)
    c_psi = _number(block, "c_psi", "mpc", required=True)
    c_dpsi = _number(block, "c_dpsi", "mpc", required=True)
    terminal = _string(block, "terminal", "mpc", default="scaled_cost")
    if terminal not in ("scaled_cost", "hard_set"):
        raise ScenarioError(
            f"mpc.terminal must be 'scaled_cost' or 'hard_set', got "
            f"{terminal!r}")
    model = DiscreteModel.from_vehicle(params, dt)
    Q = np.diag(q_diag)
    P, K = terminal_ingredients(model, Q, r)
    cfg = MpcConfig(horizon=horizon, Q=Q, R=r, P=P, beta=beta, K=K, dt=dt,
                    u_max=u_max, c_psi=c_psi, c_dpsi=c_dpsi,
                    terminal_mode=terminal)
    terminal_set = None
    if terminal == "hard_set":
        v_bar = admissible_move_set(model.u_gain, u_max, c_psi)
        w_set = disturbance_box(model.disturbance_direction, c_dpsi)
        mica = mica_terminal_set(model, K, v_bar, w_set)
        if not mica.converged:
            raise ScenarioError("hard terminal set did not converge")
        terminal_set = mica.terminal_set
    else:
        # Run the audit even in scaled-cost mode: an empty correction-move
        # interval is a config error either way.
        admissible_move_set(model.u_gain, u_max, c_psi)
    return cfg, terminal_set


def _build_sim(doc, label):
    block = doc.get("sim")
    if block is None:
        raise ScenarioError("sim block is required")
    _check_keys(block, _SIM_KEYS, "sim")
    seed = _integer(block, "seed", "sim")
    errors = _number_list(block, "initial_errors", "sim", 4,
                          [0.0, 0.0, 0.0, 0.0])
    return SimConfig(
        label=label,
        duration=_number(block, "duration", "sim", required=True),
        dt_fine=_number(block, "dt_fine", "sim", default=1e-3),
        mpc_period=_number(block, "mpc_period", "sim", default=0.05),
        saturation=_string(block, "saturation", "sim", default="none"),
        initial_errors=tuple(errors),
        initial_arclength=_number(block, "initial_arclength", "sim",
                                  default=0.0),
        filter_enabled=_boolean(block, "filter_enabled", "sim", True),
        seed=seed,
    )


def _audit(sc):
    """Cross-module checks that individual constructors cannot see."""
    v = sc.params.speed
    cfg = sc.mpc_cfg
    sim = sc.sim_cfg
    if abs(cfg.dt - sim.mpc_period) > 1e-12:
        raise ScenarioError(
            f"mpc.dt ({cfg.dt}) must equal sim.mpc_period "
            f"({sim.mpc_period})")
    remainder = sim.duration / sim.dt_fine
    if abs(remainder - round(remainder)) > 1e-9:
        raise ScenarioError("sim.duration must be an integer number of "
                            "fine steps")

    # The tracker previews curvature up to horizon steps past the last
    # sample; the road must cover that.
    needed = (sim.initial_arclength
              + v * (sim.duration + (cfg.horizon + 1) * cfg.dt))
    if sc.road.length < needed:
        raise ScenarioError(
            f"road too short: length {sc.road.length:.1f} m < "
            f"{needed:.1f} m needed for duration plus preview horizon")

    # Reference bounds assumed by the move-set margins must actually hold
    # on this road.
    grid = np.linspace(0.0, sc.road.length, 2001)
    kappa = np.array([sc.road.curvature(s) for s in grid])
    peak_rate = float(np.max(np.abs(kappa))) * v
    if peak_rate > cfg.c_psi + 1e-12:
        raise ScenarioError(
            f"yaw-rate reference bound violated: max |v*kappa| = "
            f"{peak_rate:.6g} exceeds c_psi = {cfg.c_psi}")
    step = v * cfg.dt
    heads = np.arange(0.0, sc.road.length - step, step)
    jumps = np.array([abs(sc.road.curvature(s + step) - sc.road.curvature(s))
                      for s in heads]) * v
    if jumps.size and float(jumps.max()) > cfg.c_dpsi + 1e-12:
        raise ScenarioError(
            f"yaw-rate increment bound violated: max per-sample jump "
            f"{float(jumps.max()):.6g} exceeds c_dpsi = {cfg.c_dpsi}")

    if sc.obstacle is not None:
        obs = sc.obstacle
        if not (0.0 < obs.arc_position + obs.radius < sc.road.length):
            raise ScenarioError("obstacle lies outside the road")
        if obs.arc_position <= sim.initial_arclength:
            raise ScenarioError("obstacle must start ahead of the vehicle")
    if sc.expansion != "auto":
        if sc.expansion < 0.0:
            raise ScenarioError("expansion must be nonnegative")
    if sc.comparison is not None:
        ratio = sc.comparison["peak_override_ratio_max"]
        if ratio <= 0.0:
            raise ScenarioError(
                "comparison.peak_override_ratio_max must be positive")


def parse_scenario(doc, where="scenario"):
    """Build and audit a Scenario from a parsed YAML document."""
    if not isinstance(doc, dict):
        raise ScenarioError(f"{where}: top level must be a mapping")
    _check_keys(doc, _TOP_KEYS, where)
    version = _integer(doc, "version", where, required=True)
    if version != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported schema version {version} (expected "
            f"{SCHEMA_VERSION})")
    label = _string(doc, "label", where, required=True)

    params = _build_vehicle(doc)
    road = _build_road(doc)
    obstacle = _build_obstacle(doc)
    filter_cfg = _build_filter(doc)
    mpc_cfg, terminal_set = _build_mpc(doc, params)
    sim_cfg = _build_sim(doc, label)

    expansion = doc.get("expansion", "auto")
    if expansion != "auto":
        if isinstance(expansion, bool) or not isinstance(expansion,
                                                          (int, float)):
            raise ScenarioError(
                "expansion must be 'auto' or a number, got "
                f"{expansion!r}")
        expansion = float(expansion)

    comparison = doc.get("comparison")
    if comparison is not None:
        _check_keys(comparison, _COMPARISON_KEYS, "comparison")
        comparison = {"peak_override_ratio_max": _number(
            comparison, "peak_override_ratio_max", "comparison",
            required=True)}

    sc = Scenario(label=label, params=params, road=road, obstacle=obstacle,
                  filter_cfg=filter_cfg, mpc_cfg=mpc_cfg, sim_cfg=sim_cfg,
                  expansion=expansion, terminal_set=terminal_set,
                  comparison=comparison)
    _audit(sc)
    return sc


def load_scenario(path):
    """Parse, build, and audit a scenario YAML file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except yaml.YAMLError as err:
        raise ScenarioError(f"{path}: not valid YAML: {err}")
    return parse_scenario(doc, where=str(path))


def builtin_scenarios():
    """Names of the scenario files shipped inside the package."""
    root = importlib.resources.files("safelane") / "data" / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir()
                  if p.name.endswith(".yaml"))


def builtin_path(name):
    """Filesystem path of a shipped scenario by bare name."""
    root = importlib.resources.files("safelane") / "data" / "scenarios"
    candidate = root / f"{name}.yaml"
    if not candidate.is_file():
        known = ", ".join(builtin_scenarios())
        raise ScenarioError(
            f"no built-in scenario named {name!r} (known: {known})")
    return str(candidate)


def resolve_scenario(ref):
    """Load a scenario from a path, or by built-in name as a fallback."""
    text = str(ref)
    if text.endswith((".yaml", ".yml")) or "/" in text:
        return load_scenario(text)
    return load_scenario(builtin_path(text))
