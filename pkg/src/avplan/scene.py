"""World model: lanelet map, agents with predictions, ego state, scene snapshot."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .geometry import (
    OrientedBox,
    Point2,
    Polygon,
    Polyline,
    Pose2,
    project_to_polyline,
)

__all__ = [
    "Lanelet",
    "LaneletMap",
    "PredictedTrajectory",
    "PredictedState",
    "Agent",
    "EgoState",
    "TrafficScene",
    "MapValidationError",
    "is_stationary",
    "agent_is_ahead",
    "overlaps_parking_slot",
]

LINE_TYPES = ("solid", "dashed", "none")

DEFAULT_V_EPS = 0.3       # [m/s] below this an agent counts as not moving
DEFAULT_T_HOLD = 3.0      # [s] how long it must hold to count as stationary
PREDICTION_HORIZON = 8.0  # [s]


class MapValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Lanelet:
    id: str
    left_boundary: Polyline
    right_boundary: Polyline
    centerline: Polyline
    left_line_type: str = "dashed"
    right_line_type: str = "dashed"
    speed_limit: float = 13.9

    def __post_init__(self):
        if self.left_line_type not in LINE_TYPES or self.right_line_type not in LINE_TYPES:
            raise MapValidationError(f"lanelet {self.id}: unknown boundary line type")
        if self.speed_limit <= 0:
            raise MapValidationError(f"lanelet {self.id}: speed limit must be positive")
        # Boundaries must run the same way as the centerline.
        for name, b in (("left", self.left_boundary), ("right", self.right_boundary)):
            d_b = b.points[-1] - b.points[0]
            d_c = self.centerline.points[-1] - self.centerline.points[0]
            if float(d_b @ d_c) <= 0:
                raise MapValidationError(
                    f"lanelet {self.id}: {name} boundary direction opposes centerline")

    @property
    def length(self) -> float:
        return self.centerline.length

    def width_at(self, s: float) -> float:
        p = self.centerline.point_at(s)
        dl = abs(project_to_polyline(p, self.left_boundary).l)
        dr = abs(project_to_polyline(p, self.right_boundary).l)
        return dl + dr


class LaneletMap:
    """Lanelet network with successor and left/right neighbor relations."""

    def __init__(self, lanelets, successors=None, left_neighbor=None,
                 right_neighbor=None, parking_slots=None):
        self.lanelets = {l.id: l for l in lanelets}
        if len(self.lanelets) != len(lanelets):
            raise MapValidationError("duplicate lanelet ids")
        self.successors = {k: list(v) for k, v in (successors or {}).items()}
        self.left_neighbor = dict(left_neighbor or {})
        self.right_neighbor = dict(right_neighbor or {})
        self.parking_slots = list(parking_slots or [])
        self._validate()

    def _validate(self):
        for src, dsts in self.successors.items():
            if src not in self.lanelets:
                raise MapValidationError(f"successor source {src!r} is not a lanelet")
            for d in dsts:
                if d not in self.lanelets:
                    raise MapValidationError(
                        f"lanelet {src}: dangling successor id {d!r}")
        for a, b in self.left_neighbor.items():
            if a not in self.lanelets or b not in self.lanelets:
                raise MapValidationError(f"left neighbor relation {a}->{b} names unknown lanelet")
            if self.right_neighbor.get(b) != a:
                raise MapValidationError(
                    f"asymmetric neighbors: left of {a} is {b} but right of {b} is "
                    f"{self.right_neighbor.get(b)!r}")
        for a, b in self.right_neighbor.items():
            if a not in self.lanelets or b not in self.lanelets:
                raise MapValidationError(f"right neighbor relation {a}->{b} names unknown lanelet")
            if self.left_neighbor.get(b) != a:
                raise MapValidationError(
                    f"asymmetric neighbors: right of {a} is {b} but left of {b} is "
                    f"{self.left_neighbor.get(b)!r}")

    def lanelet(self, lid: str) -> Lanelet:
        if lid not in self.lanelets:
            raise KeyError(f"unknown lanelet {lid!r}")
        return self.lanelets[lid]

    def ordered_ids(self):
        return sorted(self.lanelets)


@dataclass(frozen=True)
class PredictedState:
    t: float
    pose: Pose2
    speed: float


class PredictedTrajectory:
    """Timestamped future states of an agent, t starting at 0."""

    __slots__ = ("states",)

    def __init__(self, states):
        states = list(states)
        if not states:
            raise ValueError("predicted trajectory needs >= 1 state")
        ts = [st.t for st in states]
        if ts[0] != 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("prediction timestamps must strictly increase from 0")
        self.states = states

    def state_at(self, t: float) -> PredictedState:
        """Piecewise-linear interpolation, clamped to the trajectory's span."""
        sts = self.states
        if t <= sts[0].t:
            return sts[0]
        if t >= sts[-1].t:
            return sts[-1]
        for a, b in zip(sts, sts[1:]):
            if a.t <= t <= b.t:
                u = (t - a.t) / (b.t - a.t)
                x = a.pose.x * (1 - u) + b.pose.x * u
                y = a.pose.y * (1 - u) + b.pose.y * u
                # Headings along predictions vary slowly; nearest sample is enough.
                h = a.pose.heading if u < 0.5 else b.pose.heading
                v = a.speed * (1 - u) + b.speed * u
                return PredictedState(t, Pose2(Point2(x, y), h), v)
        return sts[-1]

    def tangent_at(self, t: float, fallback_heading: float):
        """Unit motion direction near time t (orientation when not moving)."""
        st = self.state_at(t)
        st2 = self.state_at(t + 0.5)
        dx, dy = st2.pose.x - st.pose.x, st2.pose.y - st.pose.y
        if math.hypot(dx, dy) < 1e-6:
            return (math.cos(fallback_heading), math.sin(fallback_heading))
        n = math.hypot(dx, dy)
        return (dx / n, dy / n)


@dataclass
class Agent:
    id: str
    kind: str  # "vehicle" | "pedestrian"
    footprint: OrientedBox
    speed: float
    longitudinal_acceleration: float = 0.0
    predictions: list = field(default_factory=list)
    operator_drive_around_flag: bool = False
    stationary_duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("vehicle", "pedestrian"):
            raise ValueError(f"agent {self.id}: unknown kind {self.kind!r}")
        if self.speed < 0:
            raise ValueError(f"agent {self.id}: negative speed")
        if not self.predictions:
            raise ValueError(f"agent {self.id}: needs >= 1 prediction")

    def polygon(self) -> Polygon:
        return self.footprint.as_polygon()


@dataclass
class EgoState:
    pose: Pose2
    speed: float
    acceleration: float
    length: float
    width: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("ego speed must be >= 0")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("ego dims must be positive")

    def footprint(self) -> OrientedBox:
        return OrientedBox(self.pose, self.length, self.width)


@dataclass
class TrafficScene:
    time: float
    ego: EgoState
    agents: list
    static_obstacles: list
    map: LaneletMap
    goal: str  # goal lanelet id

    def __post_init__(self):
        ids = [a.id for a in self.agents]
        if len(ids) != len(set(ids)):
            raise ValueError("agent ids must be unique")


def is_stationary(agent: Agent, v_eps: float = DEFAULT_V_EPS,
                  t_hold: float = DEFAULT_T_HOLD) -> bool:
    """An agent is stationary once it has been slow for long enough."""
    if v_eps <= 0:
        raise ValueError("v_eps must be > 0")
    return agent.speed < v_eps and agent.stationary_duration >= t_hold


def agent_is_ahead(ego: EgoState, agent: Agent, path: Polyline,
                   half_width: float = 1.8) -> bool:
    """True iff the agent center projects onto the path ahead of ego and
    within the corridor half-width."""
    ego_fr = project_to_polyline(ego.pose.position, path)
    c = agent.footprint.pose.position
    fr = project_to_polyline(c, path)
    return fr.s > ego_fr.s and abs(fr.l) < half_width


def overlaps_parking_slot(agent: Agent, lmap: LaneletMap) -> bool:
    poly = agent.polygon()
    return any(poly.intersects(slot) for slot in lmap.parking_slots)
