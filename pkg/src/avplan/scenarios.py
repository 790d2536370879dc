"""Seed content: map builders, the ten regression scenarios, and the
shape-planner taskset."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Point2, Polygon, Polyline, Pose2
from .maneuver import LocalPlanningTask, PenaltyZone, _target_zone
from .scene import EgoState, Lanelet, LaneletMap
from .simulator import Scenario, ScriptedAgent

__all__ = ["lanelet_from_center", "straight_map", "two_lane_map",
           "t_junction_map", "seed_scenarios", "seed_taskset", "corridor_task"]

EGO_LEN = 4.0
EGO_WID = 2.0


def _offset_polyline(center: Polyline, offset: float) -> Polyline:
    pts = []
    n = max(2, int(math.ceil(center.length)) + 1)
    for s in np.linspace(0.0, center.length, n):
        p = center.point_at(s).as_array()
        pts.append(p + center.normal_at(s) * offset)
    return Polyline(pts)


def lanelet_from_center(lid: str, center_pts, width: float,
                        left_line: str = "dashed", right_line: str = "dashed",
                        speed_limit: float = 10.0) -> Lanelet:
    center = Polyline(center_pts)
    return Lanelet(
        id=lid,
        left_boundary=_offset_polyline(center, width / 2.0),
        right_boundary=_offset_polyline(center, -width / 2.0),
        centerline=center,
        left_line_type=left_line,
        right_line_type=right_line,
        speed_limit=speed_limit,
    )


def straight_map(length: float = 100.0, width: float = 3.5,
                 speed_limit: float = 10.0, lid: str = "lane",
                 parking_slots=None) -> LaneletMap:
    lane = lanelet_from_center(lid, [(0.0, 0.0), (length, 0.0)], width,
                               left_line="solid", right_line="solid",
                               speed_limit=speed_limit)
    return LaneletMap([lane], parking_slots=parking_slots)


def two_lane_map(length: float = 100.0, width: float = 3.5,
                 splits=None, solid_segments=(),
                 speed_limit: float = 10.0) -> LaneletMap:
    """Parallel right (ego) and left lanes, optionally split longitudinally.

    ``splits`` is a list of cut stations; ``solid_segments`` names the split
    index ranges whose shared boundary is solid.
    """
    cuts = [0.0] + sorted(splits or []) + [length]
    lanelets = []
    succ = {}
    left_nb = {}
    right_nb = {}
    for i, (x0, x1) in enumerate(zip(cuts, cuts[1:])):
        solid = i in solid_segments
        right = lanelet_from_center(
            f"R{i}", [(x0, 0.0), (x1, 0.0)], width,
            left_line="solid" if solid else "dashed", right_line="solid",
            speed_limit=speed_limit)
        left = lanelet_from_center(
            f"L{i}", [(x0, width), (x1, width)], width,
            left_line="solid", right_line="solid" if solid else "dashed",
            speed_limit=speed_limit)
        lanelets.extend([right, left])
        left_nb[f"R{i}"] = f"L{i}"
        right_nb[f"L{i}"] = f"R{i}"
        if i > 0:
            succ[f"R{i-1}"] = [f"R{i}"]
            succ[f"L{i-1}"] = [f"L{i}"]
    return LaneletMap(lanelets, successors=succ, left_neighbor=left_nb,
                      right_neighbor=right_nb)


def _arc_points(cx, cy, r, a0, a1, step=0.05):
    n = max(3, int(abs(a1 - a0) / step) + 1)
    return [(cx + r * math.cos(a), cy + r * math.sin(a))
            for a in np.linspace(a0, a1, n)]


def t_junction_map():
    """Ego route: northbound approach, left turn across the oncoming lane,
    westbound exit. Returns (map, ego start, goal id)."""
    width = 3.5
    approach = lanelet_from_center(
        "approach", [(1.75, -40.0), (1.75, 12.0)], width, speed_limit=8.0)
    # Quarter arc, radius 9.75, from (1.75, 12) heading north to (-8, 21.75)
    # heading west.
    arc = _arc_points(1.75 - 9.75, 12.0, 9.75, 0.0, math.pi / 2.0)
    turn = lanelet_from_center("turn", arc, width, speed_limit=6.0)
    exit_lane = lanelet_from_center(
        "exit", [(-8.0, 21.75), (-48.0, 21.75)], width, speed_limit=8.0)
    lmap = LaneletMap(
        [approach, turn, exit_lane],
        successors={"approach": ["turn"], "turn": ["exit"]})
    ego = EgoState(Pose2(Point2(1.75, -30.0), math.pi / 2.0), 0.0, 0.0,
                   EGO_LEN, EGO_WID)
    return lmap, ego, "exit"


def _ego(x, y, heading=0.0, v=0.0) -> EgoState:
    return EgoState(Pose2(Point2(x, y), heading), v, 0.0, EGO_LEN, EGO_WID)


def _box(cx, cy, length, width, heading=0.0) -> Polygon:
    from .geometry import OrientedBox
    return OrientedBox(Pose2(Point2(cx, cy), heading), length, width).as_polygon()


def scenario_lead_follow() -> Scenario:
    lmap = straight_map(120.0, 3.5)
    lead = ScriptedAgent("lead", "vehicle", 4.5, 1.9,
                         Polyline([(25.0, 0.0), (400.0, 0.0)]), 5.0)
    return Scenario("01_lead_follow", lmap, _ego(2.0, 0.0), "lane", [lead],
                    duration=45.0)


def scenario_pedestrian_crossing() -> Scenario:
    lmap = straight_map(80.0, 3.5)
    ped = ScriptedAgent("ped", "pedestrian", 0.6, 0.6,
                        Polyline([(40.0, -5.0), (40.0, 9.0)]), 1.4,
                        spawn_time=3.0)
    return Scenario("02_pedestrian_crossing", lmap, _ego(2.0, 0.0), "lane",
                    [ped], duration=45.0)


def scenario_ped_along_edge() -> Scenario:
    lmap = straight_map(80.0, 4.0)
    ped = ScriptedAgent("ped_edge", "pedestrian", 0.5, 0.5,
                        Polyline([(20.0, 1.6), (200.0, 1.6)]), 1.2)
    return Scenario("03_ped_along_edge_overtake", lmap, _ego(2.0, 0.0), "lane",
                    [ped], duration=35.0)


def scenario_ped_ahead_follow() -> Scenario:
    lmap = straight_map(60.0, 3.0)
    # Walks down the middle, then steps aside and off the road.
    script = Polyline([(15.0, 0.0), (35.0, 0.0), (38.0, 6.0)])
    ped = ScriptedAgent("ped_mid", "pedestrian", 0.5, 0.5, script, 1.2)
    return Scenario("04_ped_ahead_follow", lmap, _ego(2.0, 0.0), "lane",
                    [ped], duration=50.0)


def scenario_crossing_vehicle() -> Scenario:
    lmap = straight_map(100.0, 3.5)
    car = ScriptedAgent("crosser", "vehicle", 4.5, 1.9,
                        Polyline([(50.0, 45.0), (50.0, -40.0)]), 8.0)
    return Scenario("05_crossing_vehicle_giveway", lmap, _ego(2.0, 0.0),
                    "lane", [car], duration=45.0)


def scenario_overtaking_ignore() -> Scenario:
    lmap = straight_map(120.0, 3.5)
    fast = ScriptedAgent("fast", "vehicle", 4.5, 1.9,
                         Polyline([(15.0, 0.0), (500.0, 0.0)]), 14.0)
    return Scenario("06_overtaking_ignore", lmap, _ego(2.0, 0.0), "lane",
                    [fast], duration=40.0)


def scenario_parked_drive_around() -> Scenario:
    slots = [Polygon([(30.0, -2.6), (42.0, -2.6), (42.0, -0.6), (30.0, -0.6)])]
    lmap = straight_map(90.0, 5.0, parking_slots=slots)
    parked = ScriptedAgent("parked", "vehicle", 4.5, 1.9,
                           Polyline([(36.0, -1.3), (41.0, -1.3)]), 0.0,
                           initial_stationary_s=30.0)
    return Scenario("07_parked_drive_around", lmap, _ego(2.0, 0.0), "lane",
                    [parked], duration=45.0)


def scenario_solid_line_block() -> Scenario:
    lmap = two_lane_map(100.0, 3.5, splits=[30.0, 60.0], solid_segments={1})
    block = _box(45.0, 0.0, 26.0, 3.2)
    return Scenario("08_solid_line_block", lmap, _ego(2.0, 0.0), "R2", [],
                    duration=50.0, static_obstacles=[block])


def scenario_right_angle_border() -> Scenario:
    # Bridge support carves a right-angle notch out of the right border.
    center = Polyline([(0.0, 0.0), (90.0, 0.0)])
    left = Polyline([(0.0, 2.5), (90.0, 2.5)])
    right = Polyline([(0.0, -2.5), (40.0, -2.5), (40.0, -0.9), (48.0, -0.9),
                      (48.0, -2.5), (90.0, -2.5)])
    lane = Lanelet("lane", left, right, center, "solid", "solid", 8.0)
    lmap = LaneletMap([lane])
    return Scenario("09_right_angle_border", lmap, _ego(2.0, 0.4), "lane", [],
                    duration=45.0)


def scenario_oncoming_pull_away() -> Scenario:
    lmap = straight_map(90.0, 6.0, speed_limit=8.0)
    oncoming = ScriptedAgent("oncoming", "vehicle", 4.5, 1.9,
                             Polyline([(95.0, 1.3), (-40.0, 1.3)]), 7.0)
    return Scenario("10_oncoming_pull_away", lmap, _ego(2.0, -1.0), "lane",
                    [oncoming], duration=45.0)


def seed_scenarios() -> list:
    return [
        scenario_lead_follow(),
        scenario_pedestrian_crossing(),
        scenario_ped_along_edge(),
        scenario_ped_ahead_follow(),
        scenario_crossing_vehicle(),
        scenario_overtaking_ignore(),
        scenario_parked_drive_around(),
        scenario_solid_line_block(),
        scenario_right_angle_border(),
        scenario_oncoming_pull_away(),
    ]


def corridor_task(ref_pts, width: float, obstacles=(), penalty_zones=(),
                  start_offset: float = 0.0,
                  start_s: float = 3.0) -> LocalPlanningTask:
    """Local planning task over a corridor around a reference line.

    The start pose sits ``start_s`` along the reference so the whole
    footprint fits inside the corridor.
    """
    ref = Polyline(ref_pts).resample(1.0)
    left = _offset_polyline(ref, width / 2.0)
    right = _offset_polyline(ref, -width / 2.0)
    p0 = ref.point_at(start_s).as_array() + ref.normal_at(start_s) * start_offset
    start = Pose2(Point2(*p0), ref.heading_at(start_s))
    return LocalPlanningTask(
        start=start,
        ego_length=EGO_LEN,
        ego_width=EGO_WID,
        target_zone=_target_zone(ref, width / 2.0),
        left_border=left,
        right_border=right,
        obstacle_areas=list(obstacles),
        penalty_zones=list(penalty_zones),
        reference_line=ref,
    )


def seed_taskset() -> list:
    """(name, task) pairs; includes the three LPT archetypes from the
    regression scenarios plus curved, penalized and slalom corridors."""
    tasks = []

    # Plain straight corridors.
    i = 0
    for length in (40.0, 55.0, 70.0, 85.0, 100.0):
        for width in (3.5, 4.5):
            tasks.append((f"straight_{i:02d}",
                          corridor_task([(0, 0), (length, 0)], width)))
            i += 1

    # Gap pass between two parked cars (fig 1a analog).
    for j, gap in enumerate((2.6, 2.8, 3.0, 3.2, 3.5, 4.0)):
        obs = [_box(30.0, gap / 2 + 1.0, 4.5, 2.0),
               _box(30.0, -(gap / 2 + 1.0), 4.5, 2.0)]
        tasks.append((f"gap_pass_{j:02d}",
                      corridor_task([(0, 0), (60, 0)], 7.0, obs)))

    # Two lanes with the divider cut open around a blocked right lane: the
    # free space is the n-shaped detour through the opposite lane.
    for j, opening in enumerate((24.0, 28.0, 32.0, 36.0)):
        x0, x1 = 32.0 - opening / 2, 32.0 + opening / 2
        strip_a = Polygon([(6.0, -0.05), (x0, -0.05), (x0, 0.05), (6.0, 0.05)])
        strip_b = Polygon([(x1, -0.05), (66.0, -0.05), (66.0, 0.05), (x1, 0.05)])
        block = _box(32.0, -1.75, 12.0, 3.2)
        tasks.append((f"solid_cut_{j:02d}",
                      corridor_task([(0, 0), (70, 0)], 7.0,
                                    [strip_a, strip_b, block],
                                    start_offset=-1.75)))

    # Right-angle notch along the right border (fig 1c analog).
    for j, depth in enumerate((1.0, 1.3, 1.6, 1.9)):
        notch = Polygon([(30.0, -2.5), (38.0, -2.5), (38.0, -2.5 + depth),
                         (30.0, -2.5 + depth)])
        tasks.append((f"right_angle_{j:02d}",
                      corridor_task([(0, 0), (60, 0)], 5.0, [notch],
                                    start_offset=0.5)))

    # S-curved corridors.
    i = 0
    for amp in (1.0, 2.0, 3.0):
        for length in (60.0, 80.0):
            xs = np.linspace(0.0, length, 80)
            pts = [(x, amp * math.sin(2 * math.pi * x / length)) for x in xs]
            tasks.append((f"s_curve_{i:02d}", corridor_task(pts, 4.5)))
            i += 1

    # Penalty zones over the direct route.
    for j, weight in enumerate((0.5, 1.0, 2.0, 4.0)):
        zone = PenaltyZone(
            Polygon([(20.0, -0.8), (40.0, -0.8), (40.0, 3.0), (20.0, 3.0)]),
            weight)
        tasks.append((f"penalty_{j:02d}",
                      corridor_task([(0, 0), (60, 0)], 6.0,
                                    penalty_zones=[zone])))

    # Slalom: alternating boxes.
    for j, pitch in enumerate((14.0, 16.0, 18.0, 20.0, 22.0, 24.0)):
        obs = [_box(20.0, -1.8, 4.0, 2.4),
               _box(20.0 + pitch, 1.8, 4.0, 2.4)]
        tasks.append((f"slalom_{j:02d}",
                      corridor_task([(0, 0), (60, 0)], 6.0, obs)))

    # Parked row along the right edge.
    for j, n in enumerate((2, 3, 4)):
        obs = [_box(22.0 + 9.0 * k, -1.9, 5.0, 1.9) for k in range(n)]
        tasks.append((f"parked_row_{j:02d}",
                      corridor_task([(0, 0), (70, 0)], 6.0, obs)))

    # Width close to the ego plus clearance.
    for j, width in enumerate((2.6, 2.9)):
        tasks.append((f"narrow_{j:02d}",
                      corridor_task([(0, 0), (40, 0)], width)))

    # Start pose laterally offset from the reference.
    for j, off in enumerate((-1.2, -0.6, 0.6, 1.2)):
        tasks.append((f"offset_start_{j:02d}",
                      corridor_task([(0, 0), (50, 0)], 5.0,
                                    start_offset=off)))

    # Single obstacle at varying lateral positions.
    for j, cy in enumerate((-1.2, 0.0, 1.2)):
        tasks.append((f"single_box_{j:02d}",
                      corridor_task([(0, 0), (55, 0)], 7.0,
                                    [_box(30.0, cy, 4.0, 2.0)])))

    # Fully blocked corridor: legitimately infeasible.
    block = _box(30.0, 0.0, 4.0, 4.6)
    tasks.append(("blocked_00", corridor_task([(0, 0), (60, 0)], 4.5, [block])))

    return tasks
