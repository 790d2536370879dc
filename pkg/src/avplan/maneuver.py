"""Maneuver construction: strategic plan + rule outputs -> local planning task."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import shapely.geometry as sgeom
import shapely.ops

from .geometry import Point2, Polygon, Polyline, Pose2
from .scene import LaneletMap, TrafficScene
from .strategic import SlicedLaneGraph, StrategicPlan

logger = logging.getLogger(__name__)

__all__ = [
    "PenaltyZone",
    "LocalPlanningTask",
    "corridor_from_plan",
    "apply_solid_line_cuts",
    "build_lpt",
]

# Lane-change windows keep both lanes in the corridor this far around the
# change station [m].
CHANGE_WINDOW = 20.0
# Thin strip thickness for solid-line cuts [m].
SOLID_STRIP_THICKNESS = 0.1
TARGET_ZONE_LEN = 10.0


@dataclass(frozen=True)
class PenaltyZone:
    region: Polygon
    weight: float  # cost per meter of path inside

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("penalty weight must be > 0")


@dataclass
class LocalPlanningTask:
    start: Pose2
    ego_length: float
    ego_width: float
    target_zone: Polygon
    left_border: Polyline
    right_border: Polyline
    obstacle_areas: list
    penalty_zones: list
    reference_line: Polyline
    warnings: list = field(default_factory=list)

    def corridor_polygon(self) -> sgeom.Polygon:
        ring = np.vstack([self.left_border.points, self.right_border.points[::-1]])
        poly = sgeom.Polygon(ring)
        if not poly.is_valid:
            poly = poly.buffer(0)
        if poly.geom_type == "MultiPolygon":
            poly = max(poly.geoms, key=lambda g: g.area)
        return poly


def _active_sets(graph: SlicedLaneGraph, plan: StrategicPlan):
    """Per route node: set of lanelets the corridor spans there."""
    route = plan.route
    lmap = graph.map
    active = [{n[0]} for n in route]
    # Which edges are lane changes, and their direction.
    changes = []
    for idx, (a, b) in enumerate(zip(route, route[1:])):
        if a[0] == b[0]:
            continue
        kind = next(k for dst, _, k in graph.edges[a] if dst == b)
        if kind.startswith("change"):
            changes.append((idx, kind.split("-")[1], a[0], b[0]))
    win_nodes = max(1, int(round(CHANGE_WINDOW / graph.slice_len)))
    # Widen the corridor to the change pair over a window around the change.
    # The pair member is resolved per node so that longitudinally split lanes
    # contribute their own segment's neighbor, never another segment's id.
    opposite = {"left": "right", "right": "left"}
    rels = {"left": lmap.left_neighbor, "right": lmap.right_neighbor}
    for idx, dirn, _, _ in changes:
        for j in range(max(0, idx - win_nodes), min(len(route), idx + 1 + win_nodes)):
            side = dirn if j <= idx else opposite[dirn]
            nb = rels[side].get(route[j][0])
            if nb is not None:
                active[j].add(nb)
    # A change-left .. change-right bridge (or mirrored) keeps the departed
    # side in the corridor the whole way, so drive-around cuts stay visible.
    for (i1, d1, _, _), (i2, d2, _, _) in zip(changes, changes[1:]):
        back = {"left": graph.map.right_neighbor, "right": graph.map.left_neighbor}
        if (d1, d2) in (("left", "right"), ("right", "left")):
            rel = back[d1]
            for j in range(i1 + 1, i2 + 1):
                nb = rel.get(route[j][0])
                if nb is not None:
                    active[j].add(nb)
    return active


def _order_left_to_right(lids, lmap: LaneletMap):
    lids = set(lids)
    # Find the leftmost member by walking left while staying in the set.
    cur = sorted(lids)[0]
    while lmap.left_neighbor.get(cur) in lids:
        cur = lmap.left_neighbor[cur]
    ordered = [cur]
    while lmap.right_neighbor.get(cur) in lids:
        cur = lmap.right_neighbor[cur]
        ordered.append(cur)
    if set(ordered) != lids:
        # Disconnected set (should not happen on valid plans); keep sorted.
        ordered = sorted(lids)
    return ordered


def _boundary_slice(lane, boundary: Polyline, s0: float, s1: float) -> Polyline:
    """Slice a boundary over a centerline arc range, scaled by length ratio."""
    f0 = max(0.0, min(1.0, s0 / lane.length))
    f1 = max(0.0, min(1.0, s1 / lane.length))
    b0, b1 = f0 * boundary.length, f1 * boundary.length
    if b1 - b0 <= 1e-6:
        b1 = min(boundary.length, b0 + 1e-3)
        b0 = max(0.0, b1 - 1e-3)
    return boundary.slice(b0, b1)


def _append_polyline(acc: list, pts: np.ndarray):
    for p in pts:
        if acc and math.hypot(acc[-1][0] - p[0], acc[-1][1] - p[1]) < 1e-6:
            continue
        acc.append((float(p[0]), float(p[1])))


def corridor_from_plan(graph: SlicedLaneGraph, plan: StrategicPlan):
    """Borders and reference line for a strategic plan.

    Returns (left_border, right_border, reference_line). The corridor spans
    both lanes over lane-change windows; otherwise it equals the active
    lanelet's boundaries.
    """
    lmap = graph.map
    route = plan.route
    if not route:
        raise ValueError("plan has an empty route")
    for node in route:
        if node[0] not in lmap.lanelets:
            raise ValueError(f"plan references unknown lanelet {node[0]!r}")

    active = _active_sets(graph, plan)
    left_pts, right_pts, ref_pts = [], [], []

    # Group maximal runs with the same (route lanelet, active set).
    i = 0
    while i < len(route):
        j = i
        while (j + 1 < len(route) and route[j + 1][0] == route[i][0]
               and active[j + 1] == active[i]):
            j += 1
        lid = route[i][0]
        lane = lmap.lanelet(lid)
        step = lane.length / graph.n_slices[lid]
        s0 = route[i][1] * step
        s1 = (route[j][1] + 1) * step
        ordered = _order_left_to_right(active[i], lmap)
        left_lane = lmap.lanelet(ordered[0])
        right_lane = lmap.lanelet(ordered[-1])
        _append_polyline(left_pts,
                         _boundary_slice(left_lane, left_lane.left_boundary, s0, s1).points)
        _append_polyline(right_pts,
                         _boundary_slice(right_lane, right_lane.right_boundary, s0, s1).points)
        _append_polyline(ref_pts, lane.centerline.slice(
            max(0.0, min(s0, lane.length - 1e-3)),
            min(lane.length, s1)).points)
        i = j + 1

    return Polyline(left_pts), Polyline(right_pts), Polyline(ref_pts)


def _clip_to_corridor(geom, corridor) -> list:
    out = []
    inter = geom.intersection(corridor)
    if inter.is_empty:
        return out
    geoms = inter.geoms if inter.geom_type.startswith("Multi") or \
        inter.geom_type == "GeometryCollection" else [inter]
    for g in geoms:
        if g.geom_type == "Polygon" and g.area > 1e-6:
            out.append(Polygon.from_shapely(g))
    return out


def apply_solid_line_cuts(lpt: LocalPlanningTask, graph: SlicedLaneGraph,
                          plan: StrategicPlan) -> LocalPlanningTask:
    """Add thin strip obstacles along solid shared boundaries inside the corridor."""
    lmap = graph.map
    active = _active_sets(graph, plan)
    corridor = lpt.corridor_polygon()
    seen = set()
    for node, act in zip(plan.route, active):
        if len(act) < 2:
            continue
        for left_id in sorted(act):
            # Shared boundary between a lane and its right neighbor.
            right_id = lmap.right_neighbor.get(left_id)
            if right_id not in act:
                continue
            lane = lmap.lanelet(left_id)
            if lane.right_line_type != "solid":
                continue
            if left_id in seen:
                continue
            seen.add(left_id)
            line = lane.right_boundary.as_shapely()
            strip = line.buffer(SOLID_STRIP_THICKNESS / 2.0, cap_style="flat")
            for piece in _clip_to_corridor(strip, corridor):
                lpt.obstacle_areas.append(piece)
    return lpt


def _repair_start_overlap(lpt: LocalPlanningTask) -> None:
    from .geometry import OrientedBox

    start_poly = OrientedBox(lpt.start, lpt.ego_length, lpt.ego_width) \
        .as_polygon().as_shapely()
    repaired = []
    for area in lpt.obstacle_areas:
        g = area.as_shapely()
        if g.intersects(start_poly):
            depth = 2.0 * g.intersection(start_poly).area / max(1e-6, start_poly.length / 4.0)
            cut = g.difference(start_poly.buffer(max(0.2, depth)))
            lpt.warnings.append(
                f"obstacle overlaps start footprint; shrunk away by {max(0.2, depth):.2f} m")
            # Routine while the ego straddles a lane-marking strip mid-change;
            # only large carve-outs deserve attention.
            log = logger.warning if max(0.2, depth) > 0.3 else logger.debug
            log(lpt.warnings[-1])
            if cut.is_empty:
                continue
            if cut.geom_type == "MultiPolygon":
                repaired.extend(Polygon.from_shapely(p) for p in cut.geoms if p.area > 1e-6)
            elif cut.geom_type == "Polygon" and cut.area > 1e-6:
                repaired.append(Polygon.from_shapely(cut))
        else:
            repaired.append(area)
    lpt.obstacle_areas = repaired


def _extend_backward(border: Polyline, ext: float) -> Polyline:
    d = border.points[1] - border.points[0]
    n = np.linalg.norm(d)
    if n < 1e-9:
        return border
    first = border.points[0] - d / n * ext
    return Polyline(np.vstack([first, border.points]))


def _target_zone(reference: Polyline, half_width: float) -> Polygon:
    s1 = reference.length
    s0 = max(0.0, s1 - TARGET_ZONE_LEN)
    n = max(2, int(math.ceil((s1 - s0) / 1.0)) + 1)
    ss = np.linspace(s0, s1, n)
    left, right = [], []
    for s in ss:
        p = reference.point_at(s).as_array()
        nvec = reference.normal_at(s)
        left.append(p + nvec * half_width)
        right.append(p - nvec * half_width)
    ring = np.vstack([left, right[::-1]])
    return Polygon(ring)


def build_lpt(scene: TrafficScene, graph: SlicedLaneGraph, plan: StrategicPlan,
              decisions, rule_cfg=None, penalty_zones=None) -> LocalPlanningTask:
    """Assemble the local planning task for one candidate plan.

    ``decisions`` is the interaction_rules output for this candidate path:
    only DriveAround footprint areas and oncoming strips contribute obstacle
    geometry; GiveWay/Follow/Ignore agents are invisible here.
    """
    from .rules import RuleConfig, rule_far_obstacle_inflation

    cfg = rule_cfg or RuleConfig()
    left, right, ref = corridor_from_plan(graph, plan)
    # The corridor begins at a slice boundary, which can sit anywhere under
    # the ego footprint; extend it backward so the rear stays in free space.
    ext = scene.ego.length + 1.0
    left = _extend_backward(left, ext)
    right = _extend_backward(right, ext)
    target_lane = scene.map.lanelet(plan.route[-1][0])
    half_width = target_lane.width_at(target_lane.length) / 2.0

    lpt = LocalPlanningTask(
        start=scene.ego.pose,
        ego_length=scene.ego.length,
        ego_width=scene.ego.width,
        target_zone=_target_zone(ref, half_width),
        left_border=left,
        right_border=right,
        obstacle_areas=[],
        penalty_zones=list(penalty_zones or []),
        reference_line=ref,
    )
    apply_solid_line_cuts(lpt, graph, plan)

    corridor = lpt.corridor_polygon()
    raw_areas = list(scene.static_obstacles)
    strips = []
    for d in decisions:
        if d.mode == "DriveAround":
            raw_areas.extend(d.generated_areas)
        elif d.generated_areas:  # oncoming strips
            strips.extend(d.generated_areas)

    # The far-obstacle rule widens everything beyond its distance threshold.
    raw_areas = rule_far_obstacle_inflation(raw_areas, scene.ego, cfg)
    for area in raw_areas:
        lpt.obstacle_areas.extend(_clip_to_corridor(area.as_shapely(), corridor))
    for strip in strips:
        lpt.obstacle_areas.extend(_clip_to_corridor(strip.as_shapely(), corridor))

    _repair_start_overlap(lpt)
    return lpt
