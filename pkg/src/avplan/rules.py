"""Rule-based interaction engine.

Classifies every agent into Ignore / DriveAround / GiveWay / Follow for a
candidate path, generates rule-derived geometry (drive-around areas,
oncoming strips), and keeps a per-agent audit trace of which rules fired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import shapely.geometry as sgeom
from shapely.prepared import prep

from .geometry import (
    OrientedBox,
    Point2,
    Polygon,
    Polyline,
    angle_between_directions,
    inflate_polygon,
    points_to_polyline_distance,
    polyline_box_sweep,
    project_to_polyline,
)
from .scene import (
    Agent,
    EgoState,
    TrafficScene,
    agent_is_ahead,
    is_stationary,
    overlaps_parking_slot,
)

__all__ = [
    "IGNORE",
    "DRIVE_AROUND",
    "GIVE_WAY",
    "FOLLOW",
    "RuleConfig",
    "RuleTrace",
    "Decision",
    "rule_drive_around_stationary",
    "rule_overtaking_ignore",
    "rule_arrival_gap_ignore",
    "rule_pedestrian_corridor",
    "rule_follow_or_give_way",
    "rule_oncoming_strip",
    "rule_far_obstacle_inflation",
    "classify_all",
]

IGNORE = "Ignore"
DRIVE_AROUND = "DriveAround"
GIVE_WAY = "GiveWay"
FOLLOW = "Follow"

PREDICTION_SAMPLE_DT = 0.25


@dataclass
class RuleConfig:
    """Every numeric threshold the rule set uses."""

    theta_path_deg: float = 55.0
    theta_orient_deg: float = 45.0
    arrival_gap_s: float = 2.0
    assertive_rule_enabled: bool = False
    inflate_beyond_m: float = 12.0
    inflate_amount_m: float = 0.25
    overtake_speed_margin_mps: float = 3.0
    v_eps: float = 0.3
    t_hold: float = 3.0
    pedestrian_side_extension_m: float = 0.5
    pedestrian_front_trim_m: float = 0.3
    strip_lateral_margin_m: float = 0.3
    drive_around_margin_m: float = 0.3
    oncoming_angle_deg: float = 150.0
    horizon_s: float = 8.0
    corridor_half_width_m: float = 1.8

    def __post_init__(self):
        if not (0 < self.theta_path_deg < 90 and 0 < self.theta_orient_deg < 90):
            raise ValueError("theta thresholds must lie in (0, 90)")
        for name in ("arrival_gap_s", "inflate_beyond_m", "inflate_amount_m",
                     "overtake_speed_margin_mps", "v_eps", "t_hold",
                     "strip_lateral_margin_m", "horizon_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RuleTrace:
    entries: list = field(default_factory=list)  # (rule, fired, reason)

    def add(self, rule: str, fired: bool, reason: str):
        self.entries.append((rule, fired, reason))

    def fired_rules(self):
        return [r for r, f, _ in self.entries if f]


@dataclass
class Decision:
    agent_id: str
    mode: str
    trace: RuleTrace
    generated_areas: list = field(default_factory=list)


class _PathContext:
    """Candidate-path geometry shared by all per-agent rule evaluations."""

    def __init__(self, ego: EgoState, path: Polyline):
        self.ego = ego
        self.path = path
        self.corridor = polyline_box_sweep(path, ego.length, ego.width)
        self._corridor_sh = self.corridor.as_shapely()
        self._prepared = prep(self._corridor_sh)
        self.ego_s = project_to_polyline(ego.pose.position, path).s

    def intersects_corridor(self, poly: sgeom.base.BaseGeometry) -> bool:
        return self._prepared.intersects(poly)

    def corridor_shapely(self):
        return self._corridor_sh


def _agent_box_at(agent: Agent, pose) -> sgeom.Polygon:
    return OrientedBox(pose, agent.footprint.length, agent.footprint.width) \
        .as_polygon().as_shapely()


def _first_conflict(ctx: _PathContext, agent: Agent, pred, horizon: float):
    """Earliest predicted time the agent footprint touches the ego corridor.

    Returns (t, s_on_path) or None.
    """
    ts = np.arange(0.0, horizon + PREDICTION_SAMPLE_DT / 2, PREDICTION_SAMPLE_DT)
    states = [pred.state_at(t) for t in ts]
    centers = np.array([st.pose.position.as_array() for st in states])
    # The box cannot reach the corridor when its center is farther from the
    # path than both half-diagonals combined, so skip those samples.
    reach = (math.hypot(ctx.ego.length, ctx.ego.width)
             + math.hypot(agent.footprint.length, agent.footprint.width)) / 2.0
    dists = points_to_polyline_distance(centers, ctx.path)
    for t, st, d in zip(ts, states, dists):
        if d > reach + 0.01:
            continue
        if ctx.intersects_corridor(_agent_box_at(agent, st.pose)):
            s = project_to_polyline(st.pose.position, ctx.path).s
            return float(t), s
    return None


def rule_drive_around_stationary(agent: Agent, lmap, cfg: RuleConfig):
    """DriveAround for stationary cars in marked areas or flagged by an operator."""
    if agent.kind != "vehicle":
        return None, "not a vehicle"
    if not is_stationary(agent, cfg.v_eps, cfg.t_hold):
        return None, "agent is not stationary"
    if agent.operator_drive_around_flag:
        area = inflate_polygon(agent.polygon(), cfg.drive_around_margin_m)
        return area, "stationary and operator-flagged"
    if overlaps_parking_slot(agent, lmap):
        area = inflate_polygon(agent.polygon(), cfg.drive_around_margin_m)
        return area, "stationary and overlapping a parking slot"
    return None, "stationary but in a live lane (no slot, no flag)"


def rule_overtaking_ignore(agent: Agent, ego: EgoState, path: Polyline,
                           cfg: RuleConfig):
    """Ignore a car ahead that is not braking and pulls away fast enough."""
    if agent.kind != "vehicle":
        return False, "not a vehicle"
    if not agent_is_ahead(ego, agent, path, cfg.corridor_half_width_m):
        return False, "agent is not ahead on the path"
    if agent.longitudinal_acceleration < 0:
        return False, "agent is braking"
    if agent.speed < ego.speed + cfg.overtake_speed_margin_mps:
        return False, "agent is not sufficiently faster than ego"
    return True, (f"ahead, a={agent.longitudinal_acceleration:.2f}>=0, "
                  f"v={agent.speed:.1f}>=ego {ego.speed:.1f}+{cfg.overtake_speed_margin_mps:.1f}")


def rule_arrival_gap_ignore(agent: Agent, ego: EgoState, ctx: _PathContext,
                            cfg: RuleConfig):
    """Ignore an agent ego beats to the conflict point by the arrival gap."""
    if not cfg.assertive_rule_enabled:
        return False, "assertive rule disabled"
    if agent.kind != "vehicle":
        return False, "not a vehicle"
    any_conflict = False
    worst_reason = ""
    for pred in agent.predictions:
        hit = _first_conflict(ctx, agent, pred, cfg.horizon_s)
        if hit is None:
            continue
        any_conflict = True
        t_agent, s_conflict = hit
        t_ego = max(0.0, s_conflict - ctx.ego_s) / max(ego.speed, 1.0)
        if not (t_ego + cfg.arrival_gap_s <= t_agent):
            return False, (f"gap {t_agent - t_ego:.2f} s < {cfg.arrival_gap_s:.1f} s "
                           f"(t_ego={t_ego:.2f}, t_agent={t_agent:.2f})")
        worst_reason = (f"ego arrives {t_agent - t_ego:.2f} s earlier "
                        f"(t_ego={t_ego:.2f}, t_agent={t_agent:.2f})")
    if not any_conflict:
        return False, "no predicted collision point"
    return True, worst_reason


def _area_under_av(ego: EgoState, cfg: RuleConfig) -> sgeom.Polygon:
    """Footprint widened sideways and trimmed at the front (Fig. 3 shape c)."""
    h = ego.pose.heading
    trim = cfg.pedestrian_front_trim_m
    length = max(0.2, ego.length - trim)
    # Trimming the front shifts the box center backward by trim/2.
    cx = ego.pose.x - math.cos(h) * trim / 2.0
    cy = ego.pose.y - math.sin(h) * trim / 2.0
    box = OrientedBox(
        ego.pose.__class__(Point2(cx, cy), h),
        length,
        ego.width + 2.0 * cfg.pedestrian_side_extension_m,
    )
    return box.as_polygon().as_shapely()


def rule_pedestrian_corridor(agent: Agent, ego: EgoState, ctx: _PathContext,
                             cfg: RuleConfig):
    """Ignore pedestrians whose only contact with the swept corridor stays
    inside the area under the AV."""
    if agent.kind != "pedestrian":
        return False, "not a pedestrian"
    area = _area_under_av(ego, cfg).buffer(0.02)
    corridor = ctx.corridor_shapely()
    for pred in agent.predictions:
        t = 0.0
        while t <= cfg.horizon_s + 1e-9:
            st = pred.state_at(t)
            fp = _agent_box_at(agent, st.pose)
            inter = fp.intersection(corridor)
            if not inter.is_empty and inter.area > 1e-9 and not inter.within(area):
                return False, (f"predicted contact with the corridor outside the "
                               f"under-AV area at t={t:.2f} s")
            t += PREDICTION_SAMPLE_DT
    return True, "all corridor contact (if any) stays under the AV"


def rule_follow_or_give_way(agent: Agent, ego: EgoState, ctx: _PathContext,
                            cfg: RuleConfig):
    """Angle rule: trajectory angle against 55 deg; off-path agents must also
    pass an orientation check against 45 deg."""
    on_path = ctx.intersects_corridor(agent.polygon().as_shapely())
    ego_heading = ego.pose.heading
    mode = FOLLOW
    detail = ""
    for pred in agent.predictions:
        if on_path:
            t_c, s_c = 0.0, project_to_polyline(
                agent.footprint.pose.position, ctx.path).s
        else:
            hit = _first_conflict(ctx, agent, pred, cfg.horizon_s)
            if hit is None:
                t_c = 0.0
                s_c = project_to_polyline(agent.footprint.pose.position, ctx.path).s
            else:
                t_c, s_c = hit
        path_tan = ctx.path.heading_at(s_c)
        u = (math.cos(path_tan), math.sin(path_tan))
        v = pred.tangent_at(t_c, agent.footprint.pose.heading)
        traj_angle = angle_between_directions(u, v)
        orient_angle = angle_between_directions(
            (math.cos(ego_heading), math.sin(ego_heading)),
            (math.cos(agent.footprint.pose.heading),
             math.sin(agent.footprint.pose.heading)))
        if on_path:
            follow = traj_angle < cfg.theta_path_deg
            detail = f"on path, traj angle {traj_angle:.1f} deg vs {cfg.theta_path_deg:.0f}"
        else:
            follow = (traj_angle < cfg.theta_path_deg
                      and orient_angle < cfg.theta_orient_deg)
            detail = (f"off path, traj angle {traj_angle:.1f} deg vs "
                      f"{cfg.theta_path_deg:.0f}, orientation {orient_angle:.1f} deg "
                      f"vs {cfg.theta_orient_deg:.0f}")
        # Worst case over predictions: any GiveWay wins.
        if not follow:
            return GIVE_WAY, detail
    return mode, detail


def _is_oncoming(agent: Agent, ctx: _PathContext, cfg: RuleConfig):
    if agent.kind != "vehicle" or agent.speed < cfg.v_eps:
        return False
    fr = project_to_polyline(agent.footprint.pose.position, ctx.path)
    if fr.s <= ctx.ego_s:
        return False
    path_tan = ctx.path.heading_at(fr.s)
    ang = angle_between_directions(
        (math.cos(path_tan), math.sin(path_tan)),
        (math.cos(agent.footprint.pose.heading),
         math.sin(agent.footprint.pose.heading)))
    return ang > cfg.oncoming_angle_deg


def rule_oncoming_strip(agent: Agent, ctx: _PathContext, left_border: Polyline,
                        right_border: Polyline, ego_width: float,
                        cfg: RuleConfig):
    """Strip along the left border sized so the residual corridor still
    admits the ego; spans from ego to the oncoming agent's extent.

    Returns (polygon or None, reason).
    """
    path = ctx.path
    fr = project_to_polyline(agent.footprint.pose.position, path)
    s_lo = max(0.0, ctx.ego_s)
    s_hi = min(path.length, fr.s + agent.footprint.length)
    if s_hi - s_lo < 1.0:
        return None, "oncoming agent extent too short to build a strip"

    stations = np.arange(s_lo, s_hi + 0.5, 1.0)
    outer, inner = [], []
    w_needed = agent.footprint.width + cfg.strip_lateral_margin_m
    margin = cfg.strip_lateral_margin_m
    any_width = False
    for s in stations:
        p = path.point_at(min(s, path.length)).as_array()
        nvec = path.normal_at(min(s, path.length))
        d_left = abs(project_to_polyline(Point2(*p), left_border).l)
        d_right = abs(project_to_polyline(Point2(*p), right_border).l)
        W = d_left + d_right
        w = min(w_needed, W - ego_width - 2.0 * margin)
        if w > 0.01:
            any_width = True
        w = max(0.0, w)
        outer.append(p + nvec * d_left)
        inner.append(p + nvec * (d_left - w))
    if not any_width:
        return None, "road too narrow to shift; zero-width strip"
    ring = np.vstack([outer, inner[::-1]])
    try:
        return Polygon(ring), "strip along left border"
    except ValueError:
        return None, "degenerate strip geometry"


def rule_far_obstacle_inflation(areas, ego: EgoState, cfg: RuleConfig):
    """Widen by inflate_amount every area strictly farther than the threshold."""
    ego_poly = ego.footprint().as_polygon()
    out = []
    for a in areas:
        if a.distance_to(ego_poly) > cfg.inflate_beyond_m:
            out.append(inflate_polygon(a, cfg.inflate_amount_m))
        else:
            out.append(a)
    return out


def classify_all(scene: TrafficScene, path: Polyline, cfg: RuleConfig,
                 left_border: Polyline = None,
                 right_border: Polyline = None) -> list:
    """Evaluate the rule set for every agent against a candidate path.

    Fixed priority: pedestrian-corridor ignore, overtaking ignore,
    arrival-gap ignore, stationary drive-around, oncoming strip,
    follow-or-give-way. The first firing rule decides the mode.
    """
    ctx = _PathContext(scene.ego, path)
    decisions = []
    for agent in sorted(scene.agents, key=lambda a: a.id):
        trace = RuleTrace()
        mode = None
        areas = []

        fired, reason = rule_pedestrian_corridor(agent, scene.ego, ctx, cfg)
        trace.add("pedestrian_corridor_ignore", fired, reason)
        if fired:
            mode = IGNORE

        if mode is None:
            fired, reason = rule_overtaking_ignore(agent, scene.ego, path, cfg)
            trace.add("overtaking_ignore", fired, reason)
            if fired:
                mode = IGNORE

        if mode is None:
            fired, reason = rule_arrival_gap_ignore(agent, scene.ego, ctx, cfg)
            trace.add("arrival_gap_ignore", fired, reason)
            if fired:
                mode = IGNORE

        if mode is None:
            area, reason = rule_drive_around_stationary(agent, scene.map, cfg)
            trace.add("stationary_drive_around", area is not None, reason)
            if area is not None:
                mode = DRIVE_AROUND
                areas.append(area)

        if mode is None and _is_oncoming(agent, ctx, cfg):
            if left_border is not None and right_border is not None:
                strip, reason = rule_oncoming_strip(
                    agent, ctx, left_border, right_border, scene.ego.width, cfg)
                trace.add("oncoming_strip", strip is not None, reason)
                if strip is not None:
                    areas.append(strip)
            else:
                trace.add("oncoming_strip", False, "no corridor borders available")
            # The agent stays GiveWay for velocity planning only while it still
            # converges on the candidate corridor.
            converging = any(
                _first_conflict(ctx, agent, pred, cfg.horizon_s) is not None
                for pred in agent.predictions)
            mode = GIVE_WAY if converging else IGNORE
            trace.add("oncoming_mode", True,
                      "converging -> GiveWay" if converging else "diverging -> Ignore")

        if mode is None:
            mode, reason = rule_follow_or_give_way(agent, scene.ego, ctx, cfg)
            trace.add("follow_or_give_way", True, f"{mode}: {reason}")

        decisions.append(Decision(agent.id, mode, trace, areas))
    return decisions
