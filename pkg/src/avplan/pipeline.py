"""End-to-end planning cycle: strategic -> maneuver -> rules -> shape ->
velocity -> selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Polyline, project_to_polyline
from .maneuver import build_lpt, corridor_from_plan
from .rules import DRIVE_AROUND, RuleConfig, classify_all, rule_drive_around_stationary
from .scene import TrafficScene
from .selector import Candidate, CandidateMetrics, SelectionConfig, select
from .shape import Infeasible, ShapeParams, solve_lpt
from .strategic import (
    blocked_slices_for_obstacles,
    build_sliced_graph,
    plan_routes,
)
from .velocity import VelocityLimits, build_st_graph, plan_velocity

logger = logging.getLogger(__name__)

__all__ = ["PlannerConfig", "PlanOutcome", "plan_once", "locate_on_map"]

RULE_PATH_LOOKAHEAD = 80.0  # [m] how much reference line the rules consider


@dataclass
class PlannerConfig:
    rules: RuleConfig = field(default_factory=RuleConfig)
    shape: ShapeParams = field(default_factory=ShapeParams)
    limits: VelocityLimits = field(default_factory=VelocityLimits)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    k_plans: int = 2
    slice_len: float = 10.0


@dataclass
class PlanOutcome:
    chosen: Candidate | None
    report: dict
    candidates: list


def locate_on_map(scene: TrafficScene):
    """(lanelet id, slice-friendly s) the ego currently occupies."""
    best = None
    for lid in scene.map.ordered_ids():
        lane = scene.map.lanelet(lid)
        fr = project_to_polyline(scene.ego.pose.position, lane.centerline)
        half_w = lane.width_at(min(fr.s, lane.length)) / 2.0
        lateral = abs(fr.l)
        # Penalize being past the lanelet end.
        at_end = fr.s >= lane.length - 1e-6
        key = (lateral > half_w + 0.5, at_end, lateral)
        if best is None or key < best[0]:
            best = (key, lid, fr.s)
    return best[1], best[2]


def _candidate_metrics(path, traj, plan, horizon: float) -> CandidateMetrics:
    kappa_at = np.interp(traj.s, path.polyline.cumlen[:len(path.curvatures)],
                         path.curvatures)
    lat_acc = np.abs(traj.v ** 2 * kappa_at)
    return CandidateMetrics(
        progress=float(traj.s[-1]),
        min_clearance=path.clearance_min,
        max_lat_accel=float(np.max(lat_acc)) if len(lat_acc) else 0.0,
        max_jerk=traj.max_jerk(),
        stop_count=1 if traj.stop_decision is not None else 0,
        plan_complexity=plan.change_count,
        infeasible=False,
    )


def plan_once(scene: TrafficScene, cfg: PlannerConfig = None) -> PlanOutcome:
    cfg = cfg or PlannerConfig()
    graph = build_sliced_graph(scene.map, cfg.slice_len)

    # Obstacles that can justify rerouting: statics plus stationary agents
    # the drive-around rule already accepts.
    routing_obstacles = list(scene.static_obstacles)
    for agent in scene.agents:
        area, _ = rule_drive_around_stationary(agent, scene.map, cfg.rules)
        if area is not None:
            routing_obstacles.append(area)
    blocked = blocked_slices_for_obstacles(graph, routing_obstacles)

    start_lid, start_s = locate_on_map(scene)
    n = graph.n_slices[start_lid]
    lane = scene.map.lanelet(start_lid)
    slice_idx = min(n - 1, int(start_s / (lane.length / n)))
    start_node = (start_lid, slice_idx)
    blocked = blocked - {start_node}

    plans = plan_routes(graph, start_node, scene.goal, cfg.k_plans, blocked)
    candidates = []
    for plan in plans:
        left, right, ref = corridor_from_plan(graph, plan)
        ego_s = project_to_polyline(scene.ego.pose.position, ref).s
        s_hi = min(ref.length, ego_s + RULE_PATH_LOOKAHEAD)
        rules_path = ref.slice(ego_s, s_hi) if s_hi - ego_s > 1.0 else ref
        decisions = classify_all(scene, rules_path, cfg.rules,
                                 left_border=left, right_border=right)
        lpt = build_lpt(scene, graph, plan, decisions, cfg.rules)
        path = solve_lpt(lpt, cfg.shape)
        if isinstance(path, Infeasible):
            candidates.append(Candidate(
                plan.plan_id,
                CandidateMetrics(infeasible=True,
                                 plan_complexity=plan.change_count),
                decisions=decisions, lpt=lpt))
            continue
        speed_limit = min(scene.map.lanelet(a.lanelet).speed_limit
                          for a in plan.actions)
        agents = {a.id: a for a in scene.agents}
        st = build_st_graph(path.polyline, decisions, agents, scene.ego,
                            limits=cfg.limits, speed_limit=speed_limit,
                            curvatures=path.curvatures)
        traj = plan_velocity(st, path.polyline, scene.ego, cfg.limits)
        metrics = _candidate_metrics(path, traj, plan, st.horizon)
        candidates.append(Candidate(plan.plan_id, metrics, trajectory=traj,
                                    path=path, decisions=decisions, lpt=lpt,
                                    st=st))

    chosen, report = select(candidates, cfg.selection)
    return PlanOutcome(chosen, report, candidates)
