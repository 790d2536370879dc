"""Versioned JSON serialization for planning tasks, scenarios and rule
configurations.

Three document kinds are supported, each carrying a ``schema_version``
string: ``lpt.v1``, ``scenario.v1`` and ``rules.v1``.
"""

from __future__ import annotations

import dataclasses
import json

from .geometry import Point2, Polygon, Polyline, Pose2
from .maneuver import LocalPlanningTask, PenaltyZone
from .rules import RuleConfig
from .scene import EgoState, Lanelet, LaneletMap
from .simulator import Scenario, ScriptedAgent

__all__ = ["SchemaError", "load_lpt", "dump_lpt", "load_scenario",
           "dump_scenario", "load_rules", "dump_rules",
           "read_json", "write_json"]

LPT_VERSION = "lpt.v1"
SCENARIO_VERSION = "scenario.v1"
RULES_VERSION = "rules.v1"


class SchemaError(ValueError):
    """Raised when a document is malformed; the message names the field."""


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"no such file: {path}")
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})")


def write_json(path, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _expect_version(doc: dict, version: str):
    if not isinstance(doc, dict):
        raise SchemaError("document root must be an object")
    got = doc.get("schema_version")
    if got != version:
        raise SchemaError(f"schema_version: expected {version!r}, got {got!r}")


def _field(doc: dict, name: str, where: str):
    if name not in doc:
        raise SchemaError(f"{where}: missing field {name!r}")
    return doc[name]


def _points(raw, where: str):
    if not isinstance(raw, list) or any(
            not isinstance(p, list) or len(p) != 2 for p in raw):
        raise SchemaError(f"{where}: expected a list of [x, y] pairs")
    return raw


def _polyline(raw, where: str) -> Polyline:
    pts = _points(raw, where)
    if len(pts) < 2:
        raise SchemaError(f"{where}: polyline needs >= 2 points")
    try:
        return Polyline(pts)
    except ValueError as e:
        raise SchemaError(f"{where}: {e}")


def _polygon(raw, where: str) -> Polygon:
    pts = _points(raw, where)
    if len(pts) < 3:
        raise SchemaError(f"{where}: polygon needs >= 3 vertices")
    try:
        return Polygon(pts)
    except ValueError as e:
        raise SchemaError(f"{where}: {e}")


def _num(doc, name, where):
    v = _field(doc, name, where)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SchemaError(f"{where}.{name}: expected a number, got {type(v).__name__}")
    return float(v)


def _poly_out(p: Polyline) -> list:
    return [[float(x), float(y)] for x, y in p.points]


def _ring_out(p: Polygon) -> list:
    return [[float(x), float(y)] for x, y in p.vertices]


# ---------------------------------------------------------------- lpt.v1


def load_lpt(doc: dict) -> LocalPlanningTask:
    _expect_version(doc, LPT_VERSION)
    s = _field(doc, "start", "lpt")
    start = Pose2(Point2(_num(s, "x", "start"), _num(s, "y", "start")),
                  _num(s, "heading", "start"))
    zones = []
    for i, z in enumerate(doc.get("penalty_zones", [])):
        weight = _num(z, "weight", f"penalty_zones[{i}]")
        ring = _polygon(_field(z, "ring", f"penalty_zones[{i}]"),
                        f"penalty_zones[{i}].ring")
        try:
            zones.append(PenaltyZone(ring, weight))
        except ValueError as e:
            raise SchemaError(f"penalty_zones[{i}]: {e}")
    left = _polyline(_field(doc, "left_border", "lpt"), "left_border")
    right = _polyline(_field(doc, "right_border", "lpt"), "right_border")
    if "reference_line" in doc:
        ref = _polyline(doc["reference_line"], "reference_line")
    else:
        mid = (left.resample(1.0).points + right.resample(1.0).points) / 2.0 \
            if len(left.points) == len(right.points) else None
        if mid is None:
            a, b = left.resample(1.0), right.resample(1.0)
            n = min(len(a.points), len(b.points))
            mid = (a.points[:n] + b.points[:n]) / 2.0
        ref = Polyline(mid)
    return LocalPlanningTask(
        start=start,
        ego_length=_num(s, "length", "start"),
        ego_width=_num(s, "width", "start"),
        target_zone=_polygon(_field(doc, "target_zone", "lpt"), "target_zone"),
        left_border=left,
        right_border=right,
        obstacle_areas=[_polygon(o, f"obstacles[{i}]")
                        for i, o in enumerate(doc.get("obstacles", []))],
        penalty_zones=zones,
        reference_line=ref,
    )


def dump_lpt(lpt: LocalPlanningTask) -> dict:
    return {
        "schema_version": LPT_VERSION,
        "start": {
            "x": float(lpt.start.position.x),
            "y": float(lpt.start.position.y),
            "heading": float(lpt.start.heading),
            "length": float(lpt.ego_length),
            "width": float(lpt.ego_width),
        },
        "target_zone": _ring_out(lpt.target_zone),
        "left_border": _poly_out(lpt.left_border),
        "right_border": _poly_out(lpt.right_border),
        "obstacles": [_ring_out(o) for o in lpt.obstacle_areas],
        "penalty_zones": [{"ring": _ring_out(z.region),
                           "weight": float(z.weight)}
                          for z in lpt.penalty_zones],
        "reference_line": _poly_out(lpt.reference_line),
    }


# ------------------------------------------------------------ scenario.v1


def _load_lanelet(raw: dict, where: str) -> Lanelet:
    try:
        return Lanelet(
            id=str(_field(raw, "id", where)),
            left_boundary=_polyline(_field(raw, "left", where), f"{where}.left"),
            right_boundary=_polyline(_field(raw, "right", where), f"{where}.right"),
            centerline=_polyline(_field(raw, "center", where), f"{where}.center"),
            left_line_type=raw.get("left_line", "dashed"),
            right_line_type=raw.get("right_line", "dashed"),
            speed_limit=_num(raw, "speed_limit", where),
        )
    except ValueError as e:
        raise SchemaError(f"{where}: {e}")


def _load_map(raw: dict) -> LaneletMap:
    lanelets = [_load_lanelet(l, f"map.lanelets[{i}]")
                for i, l in enumerate(_field(raw, "lanelets", "map"))]
    try:
        return LaneletMap(
            lanelets,
            successors=raw.get("successors"),
            left_neighbor=raw.get("left_neighbor"),
            right_neighbor=raw.get("right_neighbor"),
            parking_slots=[_polygon(p, f"map.parking_slots[{i}]")
                           for i, p in enumerate(raw.get("parking_slots", []))],
        )
    except ValueError as e:
        raise SchemaError(f"map: {e}")


def _dump_map(lmap: LaneletMap) -> dict:
    return {
        "lanelets": [{
            "id": l.id,
            "left": _poly_out(l.left_boundary),
            "right": _poly_out(l.right_boundary),
            "center": _poly_out(l.centerline),
            "left_line": l.left_line_type,
            "right_line": l.right_line_type,
            "speed_limit": float(l.speed_limit),
        } for _, l in sorted(lmap.lanelets.items())],
        "successors": lmap.successors,
        "left_neighbor": lmap.left_neighbor,
        "right_neighbor": lmap.right_neighbor,
        "parking_slots": [_ring_out(p) for p in lmap.parking_slots],
    }


def load_scenario(doc: dict) -> Scenario:
    _expect_version(doc, SCENARIO_VERSION)
    ego = _field(doc, "ego", "scenario")
    agents = []
    for i, a in enumerate(_field(doc, "agents", "scenario")):
        where = f"agents[{i}]"
        try:
            agents.append(ScriptedAgent(
                id=str(_field(a, "id", where)),
                kind=str(_field(a, "kind", where)),
                length=_num(a, "length", where),
                width=_num(a, "width", where),
                script=_polyline(_field(a, "script", where), f"{where}.script"),
                speed=_num(a, "speed", where),
                behavior=a.get("behavior", "blind"),
                spawn_time=float(a.get("spawn", 0.0)),
                operator_drive_around_flag=bool(a.get("drive_around_flag", False)),
                initial_stationary_s=float(a.get("initial_stationary_s", 0.0)),
            ))
        except ValueError as e:
            raise SchemaError(f"{where}: {e}")
    try:
        return Scenario(
            id=str(_field(doc, "id", "scenario")),
            map=_load_map(_field(doc, "map", "scenario")),
            ego_start=EgoState(
                Pose2(Point2(_num(ego, "x", "ego"), _num(ego, "y", "ego")),
                      _num(ego, "heading", "ego")),
                float(ego.get("v", 0.0)), 0.0,
                _num(ego, "length", "ego"), _num(ego, "width", "ego")),
            goal=str(_field(doc, "goal", "scenario")),
            agents=agents,
            duration=_num(doc, "duration", "scenario"),
            seed=int(doc.get("seed", 0)),
            expected_outcome=doc.get("expected_outcome", "complete"),
            static_obstacles=[_polygon(o, f"static_obstacles[{i}]")
                              for i, o in enumerate(doc.get("static_obstacles", []))],
        )
    except ValueError as e:
        raise SchemaError(f"scenario: {e}")


def dump_scenario(sc: Scenario) -> dict:
    return {
        "schema_version": SCENARIO_VERSION,
        "id": sc.id,
        "map": _dump_map(sc.map),
        "ego": {
            "x": float(sc.ego_start.pose.position.x),
            "y": float(sc.ego_start.pose.position.y),
            "heading": float(sc.ego_start.pose.heading),
            "v": float(sc.ego_start.speed),
            "length": float(sc.ego_start.length),
            "width": float(sc.ego_start.width),
        },
        "goal": sc.goal,
        "agents": [{
            "id": a.id,
            "kind": a.kind,
            "length": float(a.length),
            "width": float(a.width),
            "script": _poly_out(a.script),
            "speed": float(a.speed),
            "behavior": a.behavior,
            "spawn": float(a.spawn_time),
            "drive_around_flag": a.operator_drive_around_flag,
            "initial_stationary_s": float(a.initial_stationary_s),
        } for a in sc.agents],
        "duration": float(sc.duration),
        "seed": sc.seed,
        "expected_outcome": sc.expected_outcome,
        "static_obstacles": [_ring_out(o) for o in sc.static_obstacles],
    }


# --------------------------------------------------------------- rules.v1


def load_rules(doc: dict) -> RuleConfig:
    _expect_version(doc, RULES_VERSION)
    known = {f.name for f in dataclasses.fields(RuleConfig)}
    fields = {k: v for k, v in doc.items() if k != "schema_version"}
    unknown = sorted(set(fields) - known)
    if unknown:
        raise SchemaError(f"rules: unknown fields {unknown}")
    try:
        return RuleConfig(**fields)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"rules: {e}")


def dump_rules(cfg: RuleConfig) -> dict:
    doc = {"schema_version": RULES_VERSION}
    doc.update(cfg.to_dict())
    return doc
