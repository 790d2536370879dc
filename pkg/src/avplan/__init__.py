"""Three-level motion planner with rule-based interaction handling, plus a
deterministic scenario simulator and evaluation tools."""

from .geometry import Point2, Polygon, Polyline, Pose2
from .maneuver import LocalPlanningTask, PenaltyZone, build_lpt
from .pipeline import PlannerConfig, plan_once
from .rules import RuleConfig, classify_all
from .scene import Agent, EgoState, Lanelet, LaneletMap, TrafficScene
from .shape import Infeasible, PathCandidate, solve_lpt
from .simulator import Scenario, ScriptedAgent, SimResult, run
from .velocity import Trajectory, VelocityLimits, build_st_graph, plan_velocity

__version__ = "0.1.0"

__all__ = [
    "Point2", "Polygon", "Polyline", "Pose2",
    "Lanelet", "LaneletMap", "Agent", "EgoState", "TrafficScene",
    "RuleConfig", "classify_all",
    "LocalPlanningTask", "PenaltyZone", "build_lpt",
    "Infeasible", "PathCandidate", "solve_lpt",
    "Trajectory", "VelocityLimits", "build_st_graph", "plan_velocity",
    "PlannerConfig", "plan_once",
    "Scenario", "ScriptedAgent", "SimResult", "run",
    "__version__",
]
