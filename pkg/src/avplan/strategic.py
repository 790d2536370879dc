"""Strategic planning: route search on the sliced lane graph."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import shapely.geometry as sgeom

from .scene import LaneletMap

__all__ = [
    "StrategicAction",
    "StrategicPlan",
    "SlicedLaneGraph",
    "build_sliced_graph",
    "blocked_slices_for_obstacles",
    "plan_routes",
]

DEFAULT_SLICE_LEN = 10.0

# Edge cost convention: advancing costs its length, changing lanes costs
# double length plus a fixed penalty so gratuitous changes lose.
CHANGE_LEN_FACTOR = 2.0
CHANGE_FIXED_PENALTY = 5.0
# Alternative-route generation re-searches with used edges made pricier.
REROUTE_EDGE_FACTOR = 3.0


@dataclass(frozen=True)
class StrategicAction:
    kind: str                     # "follow" | "change"
    lanelet: str                  # followed lanelet, or change target
    from_lanelet: str = ""        # set for "change"
    direction: str = ""           # "left" | "right" for "change"

    @staticmethod
    def follow(lid: str) -> "StrategicAction":
        return StrategicAction("follow", lid)

    @staticmethod
    def change(src: str, dst: str, direction: str) -> "StrategicAction":
        return StrategicAction("change", dst, from_lanelet=src, direction=direction)


@dataclass
class StrategicPlan:
    actions: list
    cost: float
    route: list = field(default_factory=list)  # (lanelet id, slice idx) nodes

    @property
    def plan_id(self) -> str:
        parts = []
        for a in self.actions:
            if a.kind == "follow":
                parts.append(a.lanelet)
            else:
                parts.append(f"{a.from_lanelet}>{a.lanelet}")
        return "|".join(parts)

    @property
    def change_count(self) -> int:
        return sum(1 for a in self.actions if a.kind == "change")


class SlicedLaneGraph:
    """Lanelets partitioned longitudinally; edges advance or change lanes."""

    def __init__(self, lmap: LaneletMap, slice_len: float):
        if slice_len <= 0:
            raise ValueError("slice_len must be > 0")
        if not lmap.lanelets:
            raise ValueError("empty map")
        self.map = lmap
        self.slice_len = slice_len
        self.n_slices = {}
        for lid in lmap.ordered_ids():
            lane = lmap.lanelet(lid)
            self.n_slices[lid] = max(1, int(math.ceil(lane.length / slice_len)))
        # edges[node] = list of (dst node, cost, kind); kind in
        # {"advance", "change-left", "change-right"}
        self.edges = {}
        self._build()

    def _slice_len_of(self, lid: str, i: int) -> float:
        lane = self.map.lanelet(lid)
        n = self.n_slices[lid]
        return lane.length / n

    def slice_bounds(self, lid: str, i: int):
        step = self._slice_len_of(lid, i)
        return i * step, (i + 1) * step

    def _build(self):
        lmap = self.map
        for lid in lmap.ordered_ids():
            lane = lmap.lanelet(lid)
            n = self.n_slices[lid]
            step = lane.length / n
            for i in range(n):
                node = (lid, i)
                out = []
                if i + 1 < n:
                    out.append(((lid, i + 1), step, "advance"))
                else:
                    for succ in sorted(lmap.successors.get(lid, [])):
                        out.append(((succ, 0), step, "advance"))
                for direction, rel, line in (
                    ("left", lmap.left_neighbor, lane.left_line_type),
                    ("right", lmap.right_neighbor, lane.right_line_type),
                ):
                    nb = rel.get(lid)
                    if nb is None or line == "solid":
                        continue
                    s_mid = (i + 0.5) * step
                    j = int(s_mid / (lmap.lanelet(nb).length / self.n_slices[nb]))
                    j = min(j + 1, self.n_slices[nb] - 1)  # change advances a slice
                    out.append(((nb, j),
                                step * CHANGE_LEN_FACTOR + CHANGE_FIXED_PENALTY,
                                f"change-{direction}"))
                self.edges[node] = out

    def node_count(self) -> int:
        return sum(self.n_slices.values())


def build_sliced_graph(lmap: LaneletMap, slice_len: float = DEFAULT_SLICE_LEN) -> SlicedLaneGraph:
    return SlicedLaneGraph(lmap, slice_len)


def blocked_slices_for_obstacles(graph: SlicedLaneGraph, obstacles) -> set:
    """Slices whose centerline segment an obstacle polygon crosses."""
    blocked = set()
    if not obstacles:
        return blocked
    geoms = [o.as_shapely() for o in obstacles]
    for lid in graph.map.ordered_ids():
        lane = graph.map.lanelet(lid)
        n = graph.n_slices[lid]
        for i in range(n):
            s0, s1 = graph.slice_bounds(lid, i)
            seg = lane.centerline.slice(max(s0, 0.0), min(s1, lane.length))
            ls = sgeom.LineString(seg.points)
            if any(g.intersects(ls) for g in geoms):
                blocked.add((lid, i))
    return blocked


def _dijkstra(graph: SlicedLaneGraph, start, goals, blocked, penalized):
    dist = {start: 0.0}
    prev = {}
    counter = 0
    heap = [(0.0, counter, start)]
    closed = set()
    while heap:
        d, _, node = heapq.heappop(heap)
        if node in closed:
            continue
        closed.add(node)
        if node in goals:
            route = [node]
            while node in prev:
                node = prev[node]
                route.append(node)
            return route[::-1], d
        for dst, cost, kind in graph.edges.get(node, []):
            if dst in blocked:
                continue
            c = cost * penalized.get((node, dst), 1.0)
            nd = d + c
            if nd < dist.get(dst, math.inf) - 1e-12:
                dist[dst] = nd
                prev[dst] = node
                counter += 1
                heapq.heappush(heap, (nd, counter, dst))
    return None, math.inf


def _route_cost(graph: SlicedLaneGraph, route) -> float:
    total = 0.0
    for a, b in zip(route, route[1:]):
        for dst, cost, kind in graph.edges[a]:
            if dst == b:
                total += cost
                break
        else:
            raise ValueError("route uses a nonexistent edge")
    return total


def _compress(graph: SlicedLaneGraph, route) -> list:
    actions = [StrategicAction.follow(route[0][0])]
    for a, b in zip(route, route[1:]):
        if a[0] == b[0]:
            continue
        kind = next(k for dst, _, k in graph.edges[a] if dst == b)
        if kind == "advance":
            actions.append(StrategicAction.follow(b[0]))
        else:
            actions.append(StrategicAction.change(a[0], b[0], kind.split("-")[1]))
            actions.append(StrategicAction.follow(b[0]))
    return actions


def plan_routes(graph: SlicedLaneGraph, start, goal_lanelet: str, k: int = 2,
                blocked=frozenset()) -> list:
    """Up to k distinct low-cost routes from the start node to the goal
    lanelet's final slice, cheapest first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if start not in graph.edges:
        raise ValueError(f"start node {start!r} not in graph")
    goals = {(goal_lanelet, graph.n_slices[goal_lanelet] - 1)}
    if start in goals:
        return [StrategicPlan([StrategicAction.follow(start[0])], 0.0, [start])]

    plans = []
    seen = set()
    penalized = {}
    for _ in range(k * 2):
        route, _ = _dijkstra(graph, start, goals, blocked, penalized)
        if route is None:
            break
        key = tuple(route)
        if key not in seen:
            seen.add(key)
            plans.append(StrategicPlan(_compress(graph, route),
                                       _route_cost(graph, route), route))
            if len(plans) >= k:
                break
        for a, b in zip(route, route[1:]):
            penalized[(a, b)] = penalized.get((a, b), 1.0) * REROUTE_EDGE_FACTOR
    plans.sort(key=lambda p: (p.cost, p.plan_id))
    return plans
