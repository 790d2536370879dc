"""Trajectory selection by comfort and safety metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CandidateMetrics", "SelectionConfig", "Candidate", "score", "select",
           "NO_VIABLE"]

NO_VIABLE = "NoViableTrajectory"


@dataclass
class CandidateMetrics:
    progress: float = 0.0        # [m] arc length reached at horizon
    min_clearance: float = 0.0   # [m]
    max_lat_accel: float = 0.0   # [m/s^2], v^2 * kappa
    max_jerk: float = 0.0        # [m/s^3]
    stop_count: int = 0
    plan_complexity: int = 0     # number of lane changes
    infeasible: bool = False


@dataclass
class SelectionConfig:
    w_progress: float = 1.0
    w_clearance: float = 0.5
    w_lat_accel: float = 0.5
    w_jerk: float = 0.3
    w_stop: float = 0.2
    w_complexity: float = 0.2
    max_lat_accel_cap: float = 3.0   # hard cap [m/s^2]
    max_jerk_cap: float = 8.0
    progress_scale: float = 80.0     # [m] normalization for progress
    clearance_scale: float = 2.0

    def __post_init__(self):
        for name in ("w_progress", "w_clearance", "w_lat_accel", "w_jerk",
                     "w_stop", "w_complexity"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class Candidate:
    plan_id: str
    metrics: CandidateMetrics
    trajectory: object = None
    path: object = None
    decisions: list = field(default_factory=list)
    lpt: object = None
    st: object = None


def score(metrics: CandidateMetrics, cfg: SelectionConfig = None) -> float:
    """Weighted normalized cost; hard-cap breaches cost +inf."""
    cfg = cfg or SelectionConfig()
    if metrics.infeasible:
        return math.inf
    if metrics.max_lat_accel > cfg.max_lat_accel_cap or metrics.min_clearance < 0:
        return math.inf
    progress_term = max(0.0, 1.0 - metrics.progress / cfg.progress_scale)
    clearance_term = max(0.0, 1.0 - metrics.min_clearance / cfg.clearance_scale)
    return (cfg.w_progress * progress_term
            + cfg.w_clearance * clearance_term
            + cfg.w_lat_accel * metrics.max_lat_accel / cfg.max_lat_accel_cap
            + cfg.w_jerk * metrics.max_jerk / cfg.max_jerk_cap
            + cfg.w_stop * metrics.stop_count
            + cfg.w_complexity * metrics.plan_complexity)


def select(candidates, cfg: SelectionConfig = None):
    """Pick the lowest-cost candidate; deterministic and order-free.

    Returns (chosen Candidate or None, report dict). None means
    NoViableTrajectory.
    """
    cfg = cfg or SelectionConfig()
    scored = []
    for c in candidates:
        scored.append((score(c.metrics, cfg), c.metrics.plan_complexity,
                       c.plan_id, c))
    report = {
        "candidates": [
            {
                "plan_id": c.plan_id,
                "cost": cost if math.isfinite(cost) else "inf",
                "progress": round(c.metrics.progress, 3),
                "min_clearance": round(c.metrics.min_clearance, 3),
                "max_lat_accel": round(c.metrics.max_lat_accel, 3),
                "max_jerk": round(c.metrics.max_jerk, 3),
                "stop_count": c.metrics.stop_count,
                "plan_complexity": c.metrics.plan_complexity,
                "infeasible": c.metrics.infeasible,
            }
            for cost, _, _, c in scored
        ],
    }
    viable = [t for t in scored if math.isfinite(t[0])]
    if not viable:
        report["chosen"] = NO_VIABLE
        return None, report
    viable.sort(key=lambda t: (t[0], t[1], t[2]))
    chosen = viable[0][3]
    report["chosen"] = chosen.plan_id
    return chosen, report
