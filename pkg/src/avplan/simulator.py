"""Deterministic closed-loop simulation with scripted agents and a
replanning ego."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    OrientedBox,
    Point2,
    Polyline,
    Pose2,
    boxes_intersect,
)
from .pipeline import PlannerConfig, plan_once
from .scene import (
    Agent,
    EgoState,
    LaneletMap,
    PredictedState,
    PredictedTrajectory,
    TrafficScene,
)

logger = logging.getLogger(__name__)

__all__ = ["ScriptedAgent", "Scenario", "SimResult", "SimConfig",
           "step", "run", "generate_left_turn_scenario"]

AGENT_DECEL = 3.0   # [m/s^2] scripted yield braking
AGENT_ACCEL = 1.5   # [m/s^2] scripted resume
YIELD_LOOKAHEAD = 2.0  # [s] corridor window a yielding agent respects


@dataclass
class ScriptedAgent:
    id: str
    kind: str                 # vehicle | pedestrian
    length: float
    width: float
    script: Polyline
    speed: float              # cruise speed along the script
    behavior: str = "blind"   # blind | yield_if_conflict
    spawn_time: float = 0.0
    operator_drive_around_flag: bool = False
    initial_stationary_s: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"agent {self.id}: negative script speed")
        if self.behavior not in ("blind", "yield_if_conflict"):
            raise ValueError(f"agent {self.id}: unknown behavior {self.behavior!r}")


@dataclass
class Scenario:
    id: str
    map: LaneletMap
    ego_start: EgoState
    goal: str
    agents: list
    duration: float
    seed: int = 0
    expected_outcome: str = "complete"  # complete | no_collision | max_duration
    static_obstacles: list = field(default_factory=list)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("scenario duration must be > 0")


@dataclass
class SimConfig:
    dt: float = 0.05
    replan_period: float = 0.2
    control_lag_steps: int = 1

    def __post_init__(self):
        if abs(self.replan_period / self.dt - round(self.replan_period / self.dt)) > 1e-9:
            raise ValueError("replan_period must be a multiple of dt")


@dataclass
class SimResult:
    scenario_id: str
    completed: bool
    collisions: list
    min_agent_distance: float
    time_to_goal: float
    planner_error: bool
    logs: list
    stop_observed: bool = False


class _AgentState:
    def __init__(self, spec: ScriptedAgent):
        self.spec = spec
        self.s = 0.0
        self.v = spec.speed if spec.initial_stationary_s == 0 else 0.0
        if spec.speed == 0.0:
            self.v = 0.0
        self.stationary_for = spec.initial_stationary_s
        self.active = False
        self.done = False

    def pose(self) -> Pose2:
        return self.spec.script.pose_at(self.s)

    def footprint(self) -> OrientedBox:
        return OrientedBox(self.pose(), self.spec.length, self.spec.width)


class _World:
    def __init__(self, scenario: Scenario, config: SimConfig):
        self.scenario = scenario
        self.config = config
        self.t = 0.0
        self.ego_pose = scenario.ego_start.pose
        self.ego_v = scenario.ego_start.speed
        self.ego_a = 0.0
        self.ego_len = scenario.ego_start.length
        self.ego_w = scenario.ego_start.width
        self.agents = [_AgentState(a) for a in scenario.agents]
        self.trajectory = None
        self.traj_installed_at = 0.0
        self.collisions = []
        self.min_agent_distance = math.inf
        self.stop_observed = False

    def ego_footprint(self) -> OrientedBox:
        return OrientedBox(self.ego_pose, self.ego_len, self.ego_w)


def _ego_future_boxes(world: _World, horizon: float):
    boxes = []
    if world.trajectory is None:
        boxes.append(world.ego_footprint())
        return boxes
    base = world.t - world.traj_installed_at
    for dt_ahead in np.arange(0.0, horizon + 1e-9, 0.25):
        _, _, pose = world.trajectory.state_at(base + dt_ahead)
        boxes.append(OrientedBox(pose, world.ego_len, world.ego_w))
    return boxes


def step(world: _World, config: SimConfig) -> _World:
    """Advance the world by one dt: agents along scripts, ego by delayed
    trajectory playback, then collision accounting."""
    dt = config.dt
    ego_boxes = None

    for ag in world.agents:
        spec = ag.spec
        if world.t < spec.spawn_time or ag.done:
            ag.active = False
            continue
        ag.active = True
        target_v = float(np.interp(
            ag.s, [0.0, spec.script.length], [spec.speed, spec.speed]))
        if spec.initial_stationary_s > 0 and spec.speed == 0:
            target_v = 0.0
        if spec.behavior == "yield_if_conflict":
            if ego_boxes is None:
                ego_boxes = _ego_future_boxes(world, YIELD_LOOKAHEAD)
                ego_centers = np.array([[b.pose.x, b.pose.y] for b in ego_boxes])
            look = max(1.0, ag.v * YIELD_LOOKAHEAD + spec.length)
            reach = (math.hypot(spec.length, spec.width)
                     + math.hypot(world.ego_len, world.ego_w)) / 2.0
            conflict = False
            for ds in np.arange(0.0, look + 1e-9, 1.0):
                s_probe = min(ag.s + ds, spec.script.length)
                pose = spec.script.pose_at(s_probe)
                # Boxes whose centers are farther apart than the combined
                # half-diagonals cannot overlap; skip the axis tests there.
                near = np.hypot(ego_centers[:, 0] - pose.x,
                                ego_centers[:, 1] - pose.y) <= reach
                if not near.any():
                    continue
                probe = OrientedBox(pose, spec.length, spec.width)
                if any(boxes_intersect(probe, eb)
                       for eb, n in zip(ego_boxes, near) if n):
                    conflict = True
                    break
            if conflict:
                target_v = 0.0
        if ag.v < target_v:
            ag.v = min(target_v, ag.v + AGENT_ACCEL * dt)
        elif ag.v > target_v:
            ag.v = max(target_v, ag.v - AGENT_DECEL * dt)
        ag.s += ag.v * dt
        if ag.s >= spec.script.length - 1e-6:
            ag.s = spec.script.length - 1e-6
            if spec.speed > 0:
                ag.done = True
                ag.active = False
        if ag.v < 0.3:
            ag.stationary_for += dt
        else:
            ag.stationary_for = 0.0

    # Ego: time-indexed playback, delayed by the control lag.
    if world.trajectory is not None:
        tau = world.t + dt - world.traj_installed_at - config.control_lag_steps * dt
        s, v, pose = world.trajectory.state_at(max(0.0, tau))
        world.ego_pose = pose
        world.ego_a = (v - world.ego_v) / dt
        world.ego_v = v
        if v < 0.05 and world.trajectory.stop_decision is not None:
            world.stop_observed = True
    world.t += dt

    ego_fp = world.ego_footprint()
    ego_poly = ego_fp.as_polygon().as_shapely()
    ego_diag = math.hypot(world.ego_len, world.ego_w)
    for ag in world.agents:
        if not ag.active:
            continue
        fp = ag.footprint()
        # Center-distance lower bound: when it already exceeds the running
        # minimum the exact polygon distance cannot improve it.
        gap_lb = (math.hypot(fp.pose.x - ego_fp.pose.x,
                             fp.pose.y - ego_fp.pose.y)
                  - (ego_diag + math.hypot(fp.length, fp.width)) / 2.0)
        if gap_lb > world.min_agent_distance and gap_lb > 0:
            continue
        d = float(ego_poly.distance(fp.as_polygon().as_shapely()))
        world.min_agent_distance = min(world.min_agent_distance, d)
        if boxes_intersect(ego_fp, fp):
            world.collisions.append((round(world.t, 3), ag.spec.id))
    for i, obs in enumerate(world.scenario.static_obstacles):
        if ego_poly.intersects(obs.as_shapely()):
            world.collisions.append((round(world.t, 3), f"static:{i}"))
    return world


def _st_log_entry(candidate) -> dict:
    """Serializable snapshot of the chosen candidate's s-t graph + profile."""
    st = candidate.st
    traj = candidate.trajectory
    entry = {"path_length": round(st.path_length, 3), "horizon": st.horizon,
             "regions": [], "profile": [[round(float(t), 3), round(float(s), 3)]
                                        for t, s in zip(traj.t, traj.s)]}
    for region in st.regions:
        rings = []
        geoms = getattr(region.polygon, "geoms", [region.polygon])
        for g in geoms:
            if g.geom_type == "Polygon":
                rings.append([[round(x, 3), round(y, 3)]
                              for x, y in g.exterior.coords])
        entry["regions"].append({"agent": region.agent_id, "mode": region.mode,
                                 "rings": rings})
    return entry


def _scene_from_world(world: _World, horizon: float = 8.0) -> TrafficScene:
    agents = []
    for ag in world.agents:
        if not ag.active:
            continue
        spec = ag.spec
        states = []
        for t in np.arange(0.0, horizon + 1e-9, 0.5):
            s_f = min(ag.s + ag.v * t, spec.script.length)
            states.append(PredictedState(float(t), spec.script.pose_at(s_f), ag.v))
        agents.append(Agent(
            id=spec.id, kind=spec.kind,
            footprint=ag.footprint(),
            speed=ag.v,
            longitudinal_acceleration=0.0,
            predictions=[PredictedTrajectory(states)],
            operator_drive_around_flag=spec.operator_drive_around_flag,
            stationary_duration=ag.stationary_for,
        ))
    ego = EgoState(world.ego_pose, max(0.0, world.ego_v), world.ego_a,
                   world.ego_len, world.ego_w)
    return TrafficScene(world.t, ego, agents,
                        list(world.scenario.static_obstacles),
                        world.scenario.map, world.scenario.goal)


def _goal_reached(world: _World) -> bool:
    # Done once the ego is half a meter into the goal lane's target zone
    # (the final 10 m), matching where the shape planner stops.
    from .geometry import project_to_polyline
    from .maneuver import TARGET_ZONE_LEN
    lane = world.scenario.map.lanelet(world.scenario.goal)
    fr = project_to_polyline(world.ego_pose.position, lane.centerline)
    return (fr.s >= lane.length - TARGET_ZONE_LEN + 0.5
            and abs(fr.l) < lane.width_at(fr.s) / 2.0 + 0.5)


def run(scenario: Scenario, planner_cfg: PlannerConfig = None,
        sim_cfg: SimConfig = None) -> SimResult:
    """Closed loop: replan every replan_period, step at dt, account collisions."""
    planner_cfg = planner_cfg or PlannerConfig()
    sim_cfg = sim_cfg or SimConfig()
    world = _World(scenario, sim_cfg)
    steps_per_replan = int(round(sim_cfg.replan_period / sim_cfg.dt))
    n_steps = int(round(scenario.duration / sim_cfg.dt))
    logs = []
    planner_error = False
    completed = False
    time_to_goal = math.inf
    last_modes = {}
    last_plan_id = ""
    st_entry = None

    for k in range(n_steps):
        st_entry = None
        if k % steps_per_replan == 0 and not planner_error:
            scene = _scene_from_world(world)
            try:
                outcome = plan_once(scene, planner_cfg)
            except Exception:
                logger.exception("planner raised during scenario %s", scenario.id)
                planner_error = True
                outcome = None
            if outcome is not None and outcome.chosen is not None \
                    and outcome.chosen.trajectory is not None:
                chosen = outcome.chosen
                world.trajectory = chosen.trajectory
                world.traj_installed_at = world.t
                last_plan_id = chosen.plan_id
                last_modes = {d.agent_id: d.mode for d in chosen.decisions}
                st_entry = _st_log_entry(chosen)
            elif world.trajectory is not None:
                # No viable candidate: controlled stop along the old path.
                pass

        step(world, sim_cfg)
        if st_entry is not None:
            logs.append({
                "t": round(world.t, 3),
                "st": st_entry,
            })
        logs.append({
            "t": round(world.t, 3),
            "ego": {"x": round(world.ego_pose.x, 4),
                    "y": round(world.ego_pose.y, 4),
                    "heading": round(world.ego_pose.heading, 5),
                    "v": round(world.ego_v, 4)},
            "plan": last_plan_id,
            "modes": dict(sorted(last_modes.items())),
        })
        if world.collisions:
            break
        if _goal_reached(world):
            completed = True
            time_to_goal = world.t
            break

    return SimResult(
        scenario_id=scenario.id,
        completed=completed and not world.collisions and not planner_error,
        collisions=list(world.collisions),
        min_agent_distance=(world.min_agent_distance
                            if math.isfinite(world.min_agent_distance) else -1.0),
        time_to_goal=time_to_goal if completed else -1.0,
        planner_error=planner_error,
        logs=logs,
        stop_observed=world.stop_observed,
    )


def generate_left_turn_scenario(stream_gap: float, yield_every: int, seed: int,
                                n_cars: int = 12, duration: float = 60.0) -> Scenario:
    """T-junction left turn through a dense oncoming stream.

    Every ``yield_every``-th oncoming car has yield_if_conflict behavior;
    headways get seeded +-10 % jitter to avoid phase locking.
    """
    if yield_every < 1:
        raise ValueError("yield_every must be >= 1")
    from .scenarios import t_junction_map  # local import avoids a cycle

    lmap, ego_start, goal = t_junction_map()
    rng = np.random.default_rng(seed)
    speed = 8.0
    agents = []
    # Oncoming stream southbound along x = -1.75, starting north of the junction.
    y_start = 70.0
    offset = 0.0
    for i in range(n_cars):
        jitter = 1.0 + 0.1 * (2.0 * rng.random() - 1.0)
        if i > 0:
            offset += stream_gap * speed * jitter
        script = Polyline([(-1.75, y_start - offset), (-1.75, -60.0)])
        behavior = "yield_if_conflict" if (i + 1) % yield_every == 0 else "blind"
        agents.append(ScriptedAgent(
            id=f"oncoming_{i:02d}", kind="vehicle", length=4.5, width=1.9,
            script=script, speed=speed, behavior=behavior))
    return Scenario(
        id=f"left_turn_gap{stream_gap}_y{yield_every}_s{seed}",
        map=lmap, ego_start=ego_start, goal=goal, agents=agents,
        duration=duration, seed=seed, expected_outcome="complete")
