"""Static report figures rendered from simulation logs.

Reads the CSV logs (plus the geometry sidecars the run command writes next
to them) and produces vector figures: one world-frame trajectory per log
with lane boundaries and the obstacle disk, and one combined figure with
the steering commands over time and the obstacle-barrier trace, its
minimum marked. All validation happens before the first file is written,
so a bad log never leaves partial output behind.
"""

import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import yaml

from .engine import SimLog


class PlotError(RuntimeError):
    """Missing, empty, or malformed input to the plot writer."""


def _load_sidecar(csv_path):
    path = csv_path[:-4] + "_summary.yaml"
    if not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return doc if isinstance(doc, dict) else {}


def _centerline(log):
    """Centerline and left-normal unit vectors recovered from the log."""
    psi = log["ψ_r"]
    normal = np.column_stack([-np.sin(psi), np.cos(psi)])
    path = np.column_stack([log["X"], log["Y"]])
    center = path - log["e1"][:, None] * normal
    return center, normal


def plot_trajectory(log, out_path, geometry=None, title=None):
    """World-frame path with lane boundaries and the obstacle disk."""
    geometry = geometry or {}
    center, normal = _centerline(log)
    half = 0.5 * float(geometry.get("lane_width", 0.0))
    expansion = geometry.get("expansion")

    fig, ax = plt.subplots(figsize=(9.0, 4.0))
    if half > 0.0:
        for sign in (1.0, -1.0):
            edge = center + sign * half * normal
            ax.plot(edge[:, 0], edge[:, 1], color="0.55", lw=0.9,
                    label="lane edge" if sign > 0 else None)
        if expansion is not None and expansion > half:
            widened = center + float(expansion) * normal
            ax.plot(widened[:, 0], widened[:, 1], color="0.55", lw=0.9,
                    ls="--", label="expanded bound")
    ax.plot(center[:, 0], center[:, 1], color="0.8", lw=0.7, ls=":",
            label="centerline")
    ax.plot(log["X"], log["Y"], color="tab:blue", lw=1.6, label="vehicle")

    obstacle = geometry.get("obstacle")
    if obstacle:
        cx, cy = obstacle["center_x"], obstacle["center_y"]
        disk = plt.Circle((cx, cy), obstacle["radius"], color="tab:red",
                          alpha=0.55, label="obstacle")
        ax.add_patch(disk)
        ring = plt.Circle((cx, cy), obstacle["detect_distance"],
                          fill=False, color="tab:red", ls=":", lw=0.8)
        ax.add_patch(ring)

    ax.set_xlabel("X [m]")
    ax.set_ylabel("Y [m]")
    ax.set_title(title or log.meta.get("label", "trajectory"))
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_controls(logs, labels, out_path):
    """Steering commands and the obstacle barrier, minima marked.

    Returns the per-label minimum of the logged h_r column, which is what
    the markers in the lower panel show.
    """
    fig, (ax_u, ax_h) = plt.subplots(2, 1, figsize=(9.0, 6.0), sharex=True)
    minima = {}
    for log, label in zip(logs, labels):
        t = log["t"]
        line, = ax_u.plot(t, log["u_safe"], lw=1.3,
                          label=f"{label}: filtered")
        color = line.get_color()
        ax_u.plot(t, log["u_mpc"], lw=0.8, ls="--", color=color, alpha=0.7,
                  label=f"{label}: tracker")
        ax_u.fill_between(t, log["u_mpc"], log["u_safe"], color=color,
                          alpha=0.15)
        override = np.abs(log["u_safe"] - log["u_mpc"])
        peak = int(np.argmax(override))
        if override[peak] > 0.0:
            ax_u.plot(t[peak], log["u_safe"][peak], "v", color=color,
                      ms=7)
            ax_u.annotate(f"peak override {override[peak]:.3g}",
                          (t[peak], log["u_safe"][peak]),
                          textcoords="offset points", xytext=(6, 8),
                          fontsize=8, color=color)

        h_r = log["h_r"]
        ax_h.plot(t, h_r, lw=1.2, color=color, label=label)
        low = int(np.argmin(h_r))
        minima[label] = float(h_r[low])
        ax_h.plot(t[low], h_r[low], "o", color=color, ms=6)
        ax_h.annotate(f"min h_r = {h_r[low]:.6g}", (t[low], h_r[low]),
                      textcoords="offset points", xytext=(6, -12),
                      fontsize=8, color=color)

    ax_u.set_ylabel("steering [rad]")
    ax_u.legend(loc="best", fontsize=8)
    ax_u.grid(alpha=0.3)
    ax_h.axhline(0.0, color="0.4", lw=0.8)
    ax_h.set_ylabel("right barrier h_r")
    ax_h.set_xlabel("t [s]")
    ax_h.legend(loc="best", fontsize=8)
    ax_h.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return minima


def emit_plots(log_dir, out_dir=None):
    """Render every CSV log in a directory; returns a manifest.

    The manifest maps figure names to paths and carries the plotted
    minimum of h_r per log so callers can cross-check it against the CSV.
    """
    out_dir = out_dir or log_dir
    csv_paths = sorted(glob.glob(os.path.join(log_dir, "*.csv")))
    if not csv_paths:
        raise PlotError(f"no CSV logs found in {log_dir!r}")

    logs, labels, geometries = [], [], []
    for path in csv_paths:
        try:
            log = SimLog.from_csv(path)
        except Exception as err:
            raise PlotError(f"{path}: {err}") from err
        if log.rows == 0:
            raise PlotError(f"{path}: log has no rows")
        logs.append(log)
        labels.append(os.path.splitext(os.path.basename(path))[0])
        sidecar = _load_sidecar(path)
        geometries.append(sidecar.get("geometry") or {})

    os.makedirs(out_dir, exist_ok=True)
    manifest = {"files": {}, "min_h_right": {}}
    for log, label, geometry in zip(logs, labels, geometries):
        out_path = os.path.join(out_dir, f"{label}_trajectory.svg")
        plot_trajectory(log, out_path, geometry=geometry, title=label)
        manifest["files"][f"trajectory:{label}"] = out_path

    controls_path = os.path.join(out_dir, "controls.svg")
    minima = plot_controls(logs, labels, controls_path)
    manifest["files"]["controls"] = controls_path
    manifest["min_h_right"] = minima
    return manifest
