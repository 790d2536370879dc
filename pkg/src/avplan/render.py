"""Figure rendering. All output is SVG written with fixed hash salt and no
creation date, so identical inputs give byte-identical files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "avplan"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_lpt", "render_st"]


def _save(fig, out):
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)


def _fill_ring(ax, ring, **kw):
    ring = np.asarray(ring, dtype=float)
    ax.fill(ring[:, 0], ring[:, 1], **kw)


def render_lpt(lpt, out, path=None):
    """Planning task overview: borders, obstacles, penalty zones, target
    zone, start pose and (optionally) the solved path."""
    fig, ax = plt.subplots(figsize=(10, 5))
    ax.plot(lpt.left_border.points[:, 0], lpt.left_border.points[:, 1],
            color="tab:blue", lw=1.5, label="borders")
    ax.plot(lpt.right_border.points[:, 0], lpt.right_border.points[:, 1],
            color="tab:blue", lw=1.5)
    for z in lpt.penalty_zones:
        _fill_ring(ax, z.region.vertices, color="gold", alpha=0.3)
    for obs in lpt.obstacle_areas:
        _fill_ring(ax, obs.vertices, color="tab:red", alpha=0.6)
    _fill_ring(ax, lpt.target_zone.vertices, color="tab:orange", alpha=0.4)
    from .geometry import OrientedBox
    start_box = OrientedBox(lpt.start, lpt.ego_length, lpt.ego_width)
    _fill_ring(ax, start_box.corners(), color="tab:green", alpha=0.7)
    if path is not None:
        pts = path.polyline.points if hasattr(path, "polyline") else path.points
        ax.plot(pts[:, 0], pts[:, 1], color="black", lw=2.0, label="path")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, out)


_MODE_COLORS = {"GiveWay": "tab:red", "Follow": "tab:orange",
                "DriveAround": "tab:purple", "Ignore": "tab:gray"}


def render_st(entry, out):
    """Station-time diagram from one simulation log entry: blocked regions
    per agent plus the planned profile."""
    fig, ax = plt.subplots(figsize=(8, 5))
    seen = set()
    for region in entry.get("regions", []):
        color = _MODE_COLORS.get(region["mode"], "tab:gray")
        label = None
        if region["mode"] not in seen:
            label = region["mode"]
            seen.add(region["mode"])
        for ring in region["rings"]:
            ring = np.asarray(ring, dtype=float)  # stored as (s, t)
            ax.fill(ring[:, 1], ring[:, 0], color=color, alpha=0.45,
                    label=label)
            label = None
    profile = np.asarray(entry.get("profile", []), dtype=float)
    if profile.size:
        ax.plot(profile[:, 0], profile[:, 1], color="black", lw=2.0,
                label="plan")
    ax.set_xlim(0.0, entry.get("horizon", 8.0))
    ax.set_ylim(0.0, max(entry.get("path_length", 1.0), 1.0))
    ax.set_xlabel("t [s]")
    ax.set_ylabel("s [m]")
    if seen or profile.size:
        ax.legend(loc="upper left", fontsize=8)
    _save(fig, out)
