"""Shape planner: lattice search, smoothing, and collision-free guarantees."""

import math

import numpy as np
import pytest

from avplan.geometry import Point2, Polyline, Pose2
from avplan.maneuver import LocalPlanningTask, PenaltyZone
from avplan.shape import (
    Infeasible,
    PathCandidate,
    ShapeParams,
    search_coarse_path,
    smooth_path,
    solve_lpt,
)

from conftest import rect
from oracles import path_hits_polygon, path_leaves_corridor

PARAMS = ShapeParams()
EGO_L, EGO_W = 4.6, 2.0


def make_lpt(length=60.0, width=6.0, obstacles=(), penalty_zones=(),
             right_border=None, start=None, target=None):
    half = width / 2.0
    left = Polyline([(-6.0, half), (length, half)])
    right = right_border or Polyline([(-6.0, -half), (length, -half)])
    return LocalPlanningTask(
        start=start or Pose2(Point2(2.0, 0.0), 0.0),
        ego_length=EGO_L,
        ego_width=EGO_W,
        target_zone=target or rect(length - 8.0, -1.5, length, 1.5),
        left_border=left,
        right_border=right,
        obstacle_areas=list(obstacles),
        penalty_zones=list(penalty_zones),
        reference_line=Polyline([(0.0, 0.0), (length, 0.0)]),
    )


def poses_along(cand, step=0.25):
    ss = np.arange(0.0, cand.polyline.length + step / 2, step)
    return np.array([[p.x, p.y, p.heading]
                     for p in (cand.pose_at(min(s, cand.polyline.length))
                               for s in ss)])


def gap_task(gap):
    """Two parked-car boxes flanking the lane with the given lateral gap."""
    half_gap = gap / 2.0
    return make_lpt(width=7.0, obstacles=[
        rect(18.0, half_gap, 24.0, 3.4),
        rect(18.0, -3.4, 24.0, -half_gap),
    ])


class TestSearchCoarsePath:
    def test_straight_empty_corridor(self):
        lpt = make_lpt()
        cand = search_coarse_path(lpt, PARAMS)
        assert isinstance(cand, PathCandidate)
        # Near-straight: no point strays more than one grid cell off center.
        assert np.abs(cand.polyline.points[:, 1]).max() <= PARAMS.grid_xy + 1e-9
        assert cand.length == pytest.approx(
            52.0 - lpt.start.x + 2.0, abs=3.0)

    def test_gap_between_parked_cars(self):
        lpt = gap_task(3.0)
        cand = solve_lpt(lpt)
        assert isinstance(cand, PathCandidate)
        poses = poses_along(cand)
        for obs in lpt.obstacle_areas:
            assert not path_hits_polygon(poses, EGO_L, EGO_W, obs.vertices)

    def test_gap_narrower_than_ego_infeasible(self):
        out = solve_lpt(gap_task(1.8))
        assert isinstance(out, Infeasible)
        assert out.reason == "no_path"

    def test_right_angle_border_tight_but_feasible(self):
        # The right border juts into the corridor at a right angle, leaving a
        # 2.6 m slot for a 2.0 m ego: feasible with little clearance to spare.
        right = Polyline([(-6.0, -3.0), (20.0, -3.0), (20.0, 0.4),
                          (30.0, 0.4), (30.0, -3.0), (60.0, -3.0)])
        lpt = make_lpt(right_border=right,
                       target=rect(52.0, 0.8, 60.0, 2.9),
                       start=Pose2(Point2(2.0, 0.0), 0.0))
        cand = solve_lpt(lpt)
        assert isinstance(cand, PathCandidate)
        assert 0.0 <= cand.clearance_min <= 0.5

    def test_budget_exhaustion_reported(self):
        lpt = gap_task(3.0)
        out = search_coarse_path(lpt, ShapeParams(max_expansions=5))
        assert isinstance(out, Infeasible)
        assert out.reason == "budget_exhausted"


class TestSmoothPath:
    def test_straight_path_unchanged(self):
        lpt = make_lpt()
        cand = solve_lpt(lpt)
        assert np.abs(cand.polyline.points[:, 1]).max() <= 1e-3

    def test_start_pose_preserved(self):
        lpt = gap_task(3.0)
        cand = solve_lpt(lpt)
        p0 = cand.pose_at(0.0)
        assert math.hypot(p0.x - lpt.start.x, p0.y - lpt.start.y) <= 0.01
        assert abs(p0.heading - lpt.start.heading) <= math.radians(1.0)

    def test_smoothing_does_not_roughen(self):
        lpt = gap_task(3.0)
        coarse = search_coarse_path(lpt, PARAMS)
        smooth = smooth_path(coarse, lpt, PARAMS)
        assert smooth.smoothed
        rough = lambda c: float(np.sum(np.diff(c.curvatures) ** 2))
        assert rough(smooth) <= rough(coarse) + 1e-9
        assert np.abs(smooth.curvatures).max() <= PARAMS.max_curvature + 0.02

    def test_smoothed_path_still_collision_free(self):
        lpt = gap_task(2.8)
        cand = solve_lpt(lpt)
        assert isinstance(cand, PathCandidate)
        poses = poses_along(cand, step=0.2)
        for obs in lpt.obstacle_areas:
            assert not path_hits_polygon(poses, EGO_L, EGO_W, obs.vertices)


class TestPenaltyZones:
    def test_path_diverts_around_weighted_zone(self):
        zone = PenaltyZone(rect(18.0, -3.0, 30.0, 0.6), weight=5.0)
        lpt = make_lpt(width=7.0, penalty_zones=[zone])
        cand = solve_lpt(lpt)
        assert isinstance(cand, PathCandidate)
        mid = cand.polyline.points[
            (cand.polyline.points[:, 0] > 20.0)
            & (cand.polyline.points[:, 0] < 28.0)]
        assert mid[:, 1].min() > 0.6

    def test_zone_raises_cost(self):
        free = solve_lpt(make_lpt(width=7.0))
        zone = PenaltyZone(rect(18.0, -3.0, 30.0, 0.6), weight=5.0)
        tolled = solve_lpt(make_lpt(width=7.0, penalty_zones=[zone]))
        assert tolled.cost > free.cost


class TestDeterminismAndSafety:
    def test_deterministic(self):
        a = solve_lpt(gap_task(3.0))
        b = solve_lpt(gap_task(3.0))
        assert a.polyline.points.tolist() == b.polyline.points.tolist()
        assert a.cost == b.cost

    def test_random_tasks_safe_by_rasterization(self):
        rng = np.random.default_rng(7)
        solved = 0
        for _ in range(20):
            n_obs = rng.integers(0, 4)
            obstacles = []
            for _ in range(n_obs):
                x0 = rng.uniform(12.0, 40.0)
                y0 = rng.uniform(-3.2, 1.2)
                obstacles.append(rect(x0, y0,
                                      x0 + rng.uniform(1.0, 6.0),
                                      y0 + rng.uniform(0.8, 2.0)))
            lpt = make_lpt(width=7.0, obstacles=obstacles)
            cand = solve_lpt(lpt)
            if isinstance(cand, Infeasible):
                continue
            solved += 1
            poses = poses_along(cand, step=0.25)
            for obs in lpt.obstacle_areas:
                assert not path_hits_polygon(poses, EGO_L, EGO_W, obs.vertices)
            assert np.abs(cand.curvatures).max() \
                <= PARAMS.max_curvature + 0.02
            ring = np.vstack([lpt.left_border.points,
                              lpt.right_border.points[::-1]])
            assert not path_leaves_corridor(
                poses[::4], EGO_L, EGO_W, ring, res=0.1)
        assert solved >= 12
