"""Command-line front end: validate, run, compare, and plot scenarios.

Subcommands::

    safelane validate <scenario>...        build and audit only
    safelane validate --list               names of the shipped scenarios
    safelane run <scenario>... --out DIR   simulate, write CSV + summary
    safelane compare <scenA> <scenB>       paired safety metrics and ratio
    safelane plots <dir> [--out DIR]       render figures from CSV logs

A scenario reference is a YAML path, or the bare name of a shipped file.
Exit codes: 0 success, 1 a checked property failed (replay mismatch, or
override ratio above the configured bound), 2 configuration or input
errors.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .engine import (EngineError, replay_check, scenario_pair,
                     simulate_scenario)
from .filters import FilterError
from .mpc import MpcError
from .numerics import NumericsError
from .plots import PlotError, emit_plots
from .road import RoadError
from .scenarios import ScenarioError, builtin_scenarios, resolve_scenario

_CONFIG_ERRORS = (ScenarioError, EngineError, MpcError, RoadError,
                  FilterError, NumericsError, PlotError, OSError)

_SUMMARY_FLOATS = ("min_h_left", "min_h_right", "min_d", "peak_override",
                   "max_lane_offset", "max_slack")
_SUMMARY_COUNTS = ("mpc_infeasible_rows", "filter_infeasible_rows",
                   "singularities")
_COMPARE_KEYS = ("min_h_right", "min_d", "peak_override",
                 "mpc_infeasible_rows", "filter_infeasible_rows",
                 "singularities")


def _plain(value):
    """Recursively strip numpy scalar types for YAML output."""
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _simulate(sc):
    return simulate_scenario(sc.sim_cfg, sc.params, sc.road, sc.obstacle,
                             sc.filter_cfg, sc.mpc_cfg,
                             expansion=sc.expansion,
                             terminal_set=sc.terminal_set)


def _sharing_tuple(sc, pair):
    """Constant sharing gains when the cancellation identity applies."""
    fc = sc.filter_cfg
    if (sc.obstacle is not None
            and fc.lane_mode == "exponential"
            and fc.obstacle_mode == "exponential"
            and (fc.lane_c1, fc.lane_c2) == (fc.obstacle_c1, fc.obstacle_c2)
            and pair.expansion == pair.right_level):
        return (fc.lane_c1, fc.lane_c2, 0.0)
    return None


def _geometry_block(sc, pair):
    geom = {"lane_width": float(sc.road.lane_width),
            "expansion": float(pair.expansion)}
    if sc.obstacle is not None:
        cx, cy = sc.obstacle.center
        geom["obstacle"] = {
            "center_x": float(cx),
            "center_y": float(cy),
            "radius": float(sc.obstacle.radius),
            "detect_distance": float(sc.obstacle.detect_distance),
        }
    return geom


def _run_one(ref, out_dir):
    """Resolve, simulate, write CSV + sidecar; returns replay findings."""
    sc = resolve_scenario(ref)
    log = _simulate(sc)
    csv_path = os.path.join(out_dir, f"{sc.label}.csv")
    log.to_csv(csv_path)
    pair = scenario_pair(sc.params, sc.road, sc.obstacle, sc.expansion)
    violations = replay_check(log, pair, sharing=_sharing_tuple(sc, pair))
    summary = log.summary()
    sidecar = _plain({
        "label": sc.label,
        "summary": summary,
        "geometry": _geometry_block(sc, pair),
        "meta": log.meta,
        "replay_violations": len(violations),
    })
    with open(csv_path[:-4] + "_summary.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(sidecar, fh, sort_keys=True)
    return sc.label, csv_path, summary, violations


def _cmd_validate(args):
    if args.list:
        for name in builtin_scenarios():
            print(name)
        return 0
    if not args.scenarios:
        print("error: no scenarios given (try --list)", file=sys.stderr)
        return 2
    for ref in args.scenarios:
        sc = resolve_scenario(ref)
        print(f"{sc.label}: ok")
        print(f"  road: {sc.road.length:g} m long, lane "
              f"{sc.road.lane_width:g} m, speed {sc.params.speed:g} m/s")
        if sc.obstacle is None:
            print("  obstacle: none")
        else:
            print(f"  obstacle: s={sc.obstacle.arc_position:g} m, "
                  f"r={sc.obstacle.radius:g} m, "
                  f"detect={sc.obstacle.detect_distance:g} m")
        print(f"  filter: lane={sc.filter_cfg.lane_mode}, "
              f"obstacle={sc.filter_cfg.obstacle_mode}")
        print(f"  mpc: N={sc.mpc_cfg.horizon}, dt={sc.mpc_cfg.dt:g} s, "
              f"terminal={sc.mpc_cfg.terminal_mode}")
        print(f"  sim: {sc.sim_cfg.duration:g} s at "
              f"{sc.sim_cfg.dt_fine:g} s, "
              f"saturation={sc.sim_cfg.saturation}")
    return 0


def _cmd_run(args):
    os.makedirs(args.out, exist_ok=True)
    if args.jobs > 1 and len(args.scenarios) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_run_one, ref, args.out)
                       for ref in args.scenarios]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(ref, args.out) for ref in args.scenarios]

    failed = 0
    for label, csv_path, summary, violations in results:
        print(f"{label}: {summary['rows']} rows -> {csv_path}")
        for key in _SUMMARY_FLOATS:
            print(f"  {key} = {summary[key]:.9g}")
        counts = ", ".join(f"{k} = {summary[k]}" for k in _SUMMARY_COUNTS)
        print(f"  {counts}")
        t_obs = summary["detected_time"]
        print("  detected_time = "
              + ("none" if t_obs is None else f"{t_obs:.9g}"))
        if violations:
            failed += 1
            row, column, logged, recomputed = violations[0]
            print(f"  replay: {len(violations)} mismatches; first at row "
                  f"{row}, column {column}: logged {logged:.9g} vs "
                  f"recomputed {recomputed:.9g}")
        else:
            print("  replay: ok")
    return 1 if failed else 0


def _cmd_compare(args):
    sc_a = resolve_scenario(args.scenario_a)
    sc_b = resolve_scenario(args.scenario_b)
    sum_a = _simulate(sc_a).summary()
    sum_b = _simulate(sc_b).summary()

    width = max(len(sc_a.label), len(sc_b.label), 12) + 4
    print(f"{'metric':<24}{sc_a.label:>{width}}{sc_b.label:>{width}}")
    for key in _COMPARE_KEYS:
        print(f"{key:<24}{sum_a[key]:>{width}.6g}{sum_b[key]:>{width}.6g}")

    if sum_a["peak_override"] > 0.0:
        ratio = sum_b["peak_override"] / sum_a["peak_override"]
    else:
        ratio = float("inf")
    print(f"peak override ratio ({sc_b.label} / {sc_a.label}) = {ratio:.6g}")

    comparison = sc_b.comparison or sc_a.comparison
    if comparison is None:
        return 0
    bound = comparison["peak_override_ratio_max"]
    if ratio > bound:
        print(f"comparison FAILED: ratio {ratio:.6g} exceeds bound "
              f"{bound:g}")
        return 1
    print(f"comparison passed: ratio {ratio:.6g} within bound {bound:g}")
    return 0


def _cmd_plots(args):
    manifest = emit_plots(args.log_dir, out_dir=args.out)
    for name, path in sorted(manifest["files"].items()):
        print(f"{name}: {path}")
    for label, value in sorted(manifest["min_h_right"].items()):
        print(f"min h_r [{label}] = {value:.9g}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="safelane",
        description="Lane-keeping MPC with barrier-based safety filters.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p_val = sub.add_parser("validate",
                           help="build and audit scenarios without running")
    p_val.add_argument("scenarios", nargs="*",
                       help="YAML paths or built-in names")
    p_val.add_argument("--list", action="store_true",
                       help="print the shipped scenario names and exit")
    p_val.set_defaults(func=_cmd_validate)

    p_run = sub.add_parser("run", help="simulate scenarios and write logs")
    p_run.add_argument("scenarios", nargs="+",
                       help="YAML paths or built-in names")
    p_run.add_argument("--out", required=True,
                       help="directory for CSV logs and summaries")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="worker processes for batch runs (default 1)")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="run two scenarios and compare safety "
                                "metrics")
    p_cmp.add_argument("scenario_a")
    p_cmp.add_argument("scenario_b")
    p_cmp.set_defaults(func=_cmd_compare)

    p_plt = sub.add_parser("plots", help="render figures from CSV logs")
    p_plt.add_argument("log_dir", help="directory containing CSV logs")
    p_plt.add_argument("--out", default=None,
                       help="output directory (default: the log directory)")
    p_plt.set_defaults(func=_cmd_plots)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
