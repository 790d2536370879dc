"""Interaction rule engine: per-rule behavior, thresholds, and priority."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avplan.geometry import Point2, Polygon, Polyline
from avplan.rules import (
    DRIVE_AROUND,
    FOLLOW,
    GIVE_WAY,
    IGNORE,
    RuleConfig,
    _PathContext,
    classify_all,
    rule_arrival_gap_ignore,
    rule_drive_around_stationary,
    rule_far_obstacle_inflation,
    rule_follow_or_give_way,
    rule_oncoming_strip,
    rule_overtaking_ignore,
    rule_pedestrian_corridor,
)
from avplan.scene import TrafficScene
from avplan.scenarios import straight_map

from conftest import make_agent, make_ego, rect, straight_path, straight_prediction
from oracles import inflate_area_estimate


CFG = RuleConfig()


def make_scene(ego, agents, lmap=None, static=None):
    return TrafficScene(time=0.0, ego=ego, agents=agents,
                        static_obstacles=list(static or []),
                        map=lmap or straight_map(100.0), goal="lane")


class TestDriveAroundStationary:
    SLOT = rect(18.0, -4.0, 24.0, -1.5)

    def make_map(self):
        return straight_map(100.0, parking_slots=[self.SLOT])

    def test_stationary_in_slot_fires(self):
        agent = make_agent("a", 20.0, -2.0, 0.0, 0.0, stationary_duration=5.0)
        area, _ = rule_drive_around_stationary(agent, self.make_map(), CFG)
        assert area is not None

    def test_stationary_in_live_lane_no_flag(self):
        agent = make_agent("a", 20.0, 0.0, 0.0, 0.0, stationary_duration=5.0)
        area, reason = rule_drive_around_stationary(agent, self.make_map(), CFG)
        assert area is None
        assert "live lane" in reason

    def test_moving_over_slot_no_decision(self):
        agent = make_agent("a", 20.0, -2.0, 0.0, 5.0)
        area, _ = rule_drive_around_stationary(agent, self.make_map(), CFG)
        assert area is None

    def test_operator_flag_overrides_slot_requirement(self):
        agent = make_agent("a", 50.0, 0.0, 0.0, 0.0,
                           stationary_duration=5.0, flag=True)
        area, _ = rule_drive_around_stationary(agent, self.make_map(), CFG)
        assert area is not None

    def test_pedestrian_never_fires(self):
        agent = make_agent("p", 20.0, -2.0, 0.0, 0.0, kind="pedestrian",
                           length=0.5, width=0.5, stationary_duration=5.0)
        area, _ = rule_drive_around_stationary(agent, self.make_map(), CFG)
        assert area is None

    def test_area_is_footprint_inflated_by_margin(self):
        agent = make_agent("a", 20.0, -2.0, 0.0, 0.0, stationary_duration=5.0)
        area, _ = rule_drive_around_stationary(agent, self.make_map(), CFG)
        est = inflate_area_estimate(agent.polygon().vertices,
                                    CFG.drive_around_margin_m)
        assert area.area == pytest.approx(est, rel=0.02)


class TestOvertakingIgnore:
    def test_fast_pulling_away_car_ignored(self):
        ego = make_ego(speed=25.0)
        agent = make_agent("a", 30.0, 0.0, 0.0, 30.0, accel=0.2)
        fired, _ = rule_overtaking_ignore(agent, ego, straight_path(), CFG)
        assert fired

    def test_braking_car_not_ignored(self):
        ego = make_ego(speed=25.0)
        agent = make_agent("a", 30.0, 0.0, 0.0, 30.0, accel=-0.5)
        fired, reason = rule_overtaking_ignore(agent, ego, straight_path(), CFG)
        assert not fired and "braking" in reason

    def test_marginally_faster_car_not_ignored(self):
        ego = make_ego(speed=25.0)
        agent = make_agent("a", 30.0, 0.0, 0.0, 26.0)
        fired, _ = rule_overtaking_ignore(agent, ego, straight_path(), CFG)
        assert not fired

    def test_car_behind_not_ignored(self):
        ego = make_ego(x=30.0, speed=25.0)
        agent = make_agent("a", 10.0, 0.0, 0.0, 30.0)
        fired, _ = rule_overtaking_ignore(agent, ego, straight_path(), CFG)
        assert not fired

    @given(v_ego=st.floats(0.0, 30.0), dv=st.floats(0.0, 10.0),
           m1=st.floats(0.5, 8.0), dm=st.floats(0.1, 5.0))
    @settings(max_examples=60, deadline=None)
    def test_raising_margin_never_creates_ignore(self, v_ego, dv, m1, dm):
        ego = make_ego(speed=v_ego)
        agent = make_agent("a", 30.0, 0.0, 0.0, v_ego + dv)
        path = straight_path()
        lo = RuleConfig(overtake_speed_margin_mps=m1)
        hi = RuleConfig(overtake_speed_margin_mps=m1 + dm)
        fired_hi, _ = rule_overtaking_ignore(agent, ego, path, hi)
        fired_lo, _ = rule_overtaking_ignore(agent, ego, path, lo)
        if fired_hi:
            assert fired_lo


def crossing_agent(t_agent, speed=2.0):
    """Vehicle crossing the straight path at x=20, first corridor contact at
    ``t_agent``.

    The corridor of a 4.6 x 2.0 ego on y=0 reaches |y| = 1.0; the agent box
    (4.5 long, pointing down) leads by 2.25 m, so contact happens when the
    center reaches y = 3.25. Starting slightly below the exact offset makes
    the sampled first-contact time land on ``t_agent``.
    """
    y0 = 3.2 + speed * t_agent
    return make_agent("a", 20.0, y0, -math.pi / 2, speed)


class TestArrivalGapIgnore:
    def ctx(self, ego, path):
        return _PathContext(ego, path)

    def test_three_second_lead_ignored(self):
        # Ego covers s=20 at 5 m/s: t_ego = 4. Agent arrives at t = 7.
        ego = make_ego(speed=5.0)
        path = straight_path()
        cfg = RuleConfig(assertive_rule_enabled=True)
        fired, reason = rule_arrival_gap_ignore(
            crossing_agent(7.0), ego, self.ctx(ego, path), cfg)
        assert fired
        assert "earlier" in reason

    def test_short_lead_not_ignored(self):
        # Agent arrives at t = 5.5: gap 1.5 s < 2.0 s.
        ego = make_ego(speed=5.0)
        path = straight_path()
        cfg = RuleConfig(assertive_rule_enabled=True)
        fired, reason = rule_arrival_gap_ignore(
            crossing_agent(5.5), ego, self.ctx(ego, path), cfg)
        assert not fired
        assert "gap" in reason

    def test_parallel_paths_no_decision(self):
        ego = make_ego(speed=5.0)
        path = straight_path()
        agent = make_agent("a", 20.0, 8.0, 0.0, 5.0)
        cfg = RuleConfig(assertive_rule_enabled=True)
        fired, reason = rule_arrival_gap_ignore(agent, ego, self.ctx(ego, path), cfg)
        assert not fired
        assert "no predicted collision" in reason

    def test_disabled_by_default(self):
        ego = make_ego(speed=5.0)
        path = straight_path()
        fired, reason = rule_arrival_gap_ignore(
            crossing_agent(7.0), ego, self.ctx(ego, path), CFG)
        assert not fired and "disabled" in reason


def pedestrian(aid, x, y, heading, speed):
    return make_agent(aid, x, y, heading, speed, kind="pedestrian",
                      length=0.5, width=0.5)


class TestPedestrianCorridor:
    def test_crossing_ahead_not_ignored(self):
        ego = make_ego()
        ctx = _PathContext(ego, straight_path())
        ped = pedestrian("A", 10.0, 4.0, -math.pi / 2, 1.5)
        fired, _ = rule_pedestrian_corridor(ped, ego, ctx, CFG)
        assert not fired

    def test_beside_within_side_extension_ignored(self):
        ego = make_ego()
        ctx = _PathContext(ego, straight_path())
        ped = pedestrian("B", 0.0, 1.2, math.pi / 2, 0.0)
        fired, _ = rule_pedestrian_corridor(ped, ego, ctx, CFG)
        assert fired

    def test_behind_walking_away_ignored(self):
        ego = make_ego()
        ctx = _PathContext(ego, straight_path())
        ped = pedestrian("C", -4.0, 0.0, math.pi, 1.0)
        fired, _ = rule_pedestrian_corridor(ped, ego, ctx, CFG)
        assert fired

    def test_vehicle_never_fires(self):
        ego = make_ego()
        ctx = _PathContext(ego, straight_path())
        agent = make_agent("v", -10.0, 0.0, math.pi, 1.0)
        fired, _ = rule_pedestrian_corridor(agent, ego, ctx, CFG)
        assert not fired


class TestFollowOrGiveWay:
    def ctx(self, ego=None):
        ego = ego or make_ego()
        return ego, _PathContext(ego, straight_path())

    def test_lead_car_dead_ahead_follow(self):
        ego, ctx = self.ctx()
        agent = make_agent("a", 15.0, 0.0, 0.0, 5.0)
        mode, _ = rule_follow_or_give_way(agent, ego, ctx, CFG)
        assert mode == FOLLOW

    def test_merging_car_on_path_follow(self):
        ego, ctx = self.ctx()
        ang = math.radians(20.0)
        agent = make_agent("b", 12.0, 0.5, ang, 6.0)
        mode, _ = rule_follow_or_give_way(agent, ego, ctx, CFG)
        assert mode == FOLLOW

    def test_crossing_car_off_path_give_way(self):
        ego, ctx = self.ctx()
        agent = make_agent("c", 20.0, 6.0, -math.pi / 2, 5.0)
        mode, _ = rule_follow_or_give_way(agent, ego, ctx, CFG)
        assert mode == GIVE_WAY

    def test_crossing_car_after_merge_follow(self):
        # Once the crosser has merged and runs along the path it is followed.
        ego, ctx = self.ctx()
        agent = make_agent("c", 20.0, 0.0, 0.0, 5.0)
        mode, _ = rule_follow_or_give_way(agent, ego, ctx, CFG)
        assert mode == FOLLOW

    @pytest.mark.parametrize("theta_deg", [0.0, 20.0, 40.0, 54.9, 55.1, 70.0, 90.0])
    def test_on_path_switch_at_55_degrees(self, theta_deg):
        ego, ctx = self.ctx()
        h = math.radians(theta_deg)
        agent = make_agent("a", 15.0, 0.0, h, 5.0)
        mode, _ = rule_follow_or_give_way(agent, ego, ctx, CFG)
        assert mode == (FOLLOW if theta_deg < 55.0 else GIVE_WAY)

    @pytest.mark.parametrize("orient_deg,expected",
                             [(40.0, FOLLOW), (44.9, FOLLOW),
                              (45.1, GIVE_WAY), (50.0, GIVE_WAY)])
    def test_off_path_orientation_switch_at_45_degrees(self, orient_deg, expected):
        # Trajectory angle held at 40 deg (passes the 55 deg check) while the
        # footprint orientation sweeps across the 45 deg threshold.
        ego, ctx = self.ctx()
        pred = straight_prediction(25.0, 6.0, -math.radians(40.0), 5.0)
        agent = make_agent("a", 25.0, 6.0, -math.radians(orient_deg), 5.0,
                           prediction=pred)
        mode, _ = rule_follow_or_give_way(agent, ego, ctx, CFG)
        assert mode == expected


def corridor_borders(width, length=60.0):
    half = width / 2.0
    left = Polyline([(0.0, half), (length, half)])
    right = Polyline([(0.0, -half), (length, -half)])
    return left, right


class TestOncomingStrip:
    def oncoming(self, x=40.0, y=0.0, width=2.0):
        return make_agent("onc", x, y, math.pi, 5.0, width=width)

    def strip_for_width(self, road_width):
        ego = make_ego()
        ctx = _PathContext(ego, straight_path(60.0))
        left, right = corridor_borders(road_width)
        return rule_oncoming_strip(self.oncoming(), ctx, left, right,
                                   ego.width, CFG)

    def test_wide_road_strip_full_needed_width(self):
        # W=6.0, agent 2.0 wide: w = min(2.3, 6.0-2.0-0.6) = 2.3.
        strip, _ = self.strip_for_width(6.0)
        assert strip is not None
        ys = strip.vertices[:, 1]
        assert ys.max() == pytest.approx(3.0, abs=1e-6)
        assert ys.min() == pytest.approx(3.0 - 2.3, abs=1e-6)

    def test_narrow_road_strip_clamped(self):
        # W=4.4: w = min(2.3, 4.4-2.0-0.6) = 1.8.
        strip, _ = self.strip_for_width(4.4)
        assert strip is not None
        ys = strip.vertices[:, 1]
        assert ys.min() == pytest.approx(2.2 - 1.8, abs=1e-6)

    def test_too_narrow_road_no_strip(self):
        strip, reason = self.strip_for_width(2.5)
        assert strip is None
        assert "narrow" in reason

    def test_strip_spans_ego_to_agent_extent(self):
        strip, _ = self.strip_for_width(6.0)
        xs = strip.vertices[:, 0]
        assert xs.min() == pytest.approx(0.0, abs=1.1)
        assert xs.max() == pytest.approx(40.0 + 4.5, abs=1.1)


class TestFarObstacleInflation:
    def area_at(self, d):
        # Ego nose sits at x = 2.3; an axis-aligned box starting at 2.3 + d
        # is exactly d meters away.
        return rect(2.3 + d, -0.5, 3.3 + d, 0.5)

    def run_one(self, d):
        ego = make_ego()
        areas = [self.area_at(d)]
        out = rule_far_obstacle_inflation(areas, ego, CFG)
        return areas[0], out[0]

    def test_far_obstacle_inflated(self):
        orig, out = self.run_one(20.0)
        est = inflate_area_estimate(orig.vertices, CFG.inflate_amount_m)
        assert out.area == pytest.approx(est, rel=0.02)

    def test_near_obstacle_unchanged(self):
        orig, out = self.run_one(5.0)
        assert out is orig

    def test_exactly_at_threshold_unchanged(self):
        orig, out = self.run_one(12.0)
        assert out is orig

    def test_just_beyond_threshold_inflated(self):
        orig, out = self.run_one(12.01)
        assert out.area > orig.area + 0.5

    def test_just_inside_threshold_unchanged(self):
        orig, out = self.run_one(11.99)
        assert out is orig


class TestClassifyAll:
    def test_empty_scene(self):
        scene = make_scene(make_ego(), [])
        assert classify_all(scene, straight_path(), CFG) == []

    def test_lead_car_and_crossing_pedestrian(self):
        ego = make_ego()
        lead = make_agent("a_lead", 15.0, 0.0, 0.0, 5.0)
        ped = pedestrian("b_ped", 30.0, 4.0, -math.pi / 2, 1.5)
        scene = make_scene(ego, [lead, ped])
        out = classify_all(scene, straight_path(), CFG)
        assert [d.mode for d in out] == [FOLLOW, GIVE_WAY]

    def test_assertive_toggle_changes_only_arrival_gap(self):
        ego = make_ego(speed=5.0)
        scene = make_scene(ego, [crossing_agent(7.0)])
        path = straight_path()
        off = classify_all(scene, path, RuleConfig())[0]
        on = classify_all(scene, path,
                          RuleConfig(assertive_rule_enabled=True))[0]
        assert off.mode == GIVE_WAY
        assert on.mode == IGNORE
        assert "arrival_gap_ignore" in on.trace.fired_rules()
        assert "arrival_gap_ignore" not in off.trace.fired_rules()

    def test_mode_geometry_coupling(self):
        ego = make_ego()
        lmap = straight_map(100.0, parking_slots=[rect(18, -4, 24, -1.5)])
        agents = [
            make_agent("follow", 15.0, 0.0, 0.0, 5.0),
            make_agent("giveway", 30.0, 6.0, -math.pi / 2, 5.0),
            make_agent("parked", 20.0, -2.0, 0.0, 0.0, stationary_duration=5.0),
            pedestrian("ped", 0.0, 1.2, math.pi / 2, 0.0),
        ]
        scene = make_scene(ego, agents, lmap=lmap)
        for d in classify_all(scene, straight_path(), CFG):
            if d.mode == DRIVE_AROUND:
                assert d.generated_areas
            elif d.mode in (FOLLOW, IGNORE, GIVE_WAY):
                assert not d.generated_areas

    def test_oncoming_converging_give_way_with_strip(self):
        ego = make_ego()
        agent = make_agent("onc", 40.0, 0.0, math.pi, 5.0, width=2.0)
        scene = make_scene(ego, [agent])
        left, right = corridor_borders(6.0)
        d = classify_all(scene, straight_path(60.0), CFG,
                         left_border=left, right_border=right)[0]
        assert d.mode == GIVE_WAY
        assert d.generated_areas

    def test_priority_soundness(self):
        ego = make_ego()
        lmap = straight_map(100.0, parking_slots=[rect(18, -4, 24, -1.5)])
        agents = [
            make_agent("fast", 30.0, 0.0, 0.0, 12.0, accel=0.2),
            make_agent("parked", 20.0, -2.0, 0.0, 0.0, stationary_duration=5.0),
            make_agent("cross", 40.0, 6.0, -math.pi / 2, 5.0),
            pedestrian("under", 0.0, 1.2, math.pi / 2, 0.0),
        ]
        scene = make_scene(ego, agents, lmap=lmap)
        for d in classify_all(scene, straight_path(), CFG):
            entries = d.trace.entries
            fired_idx = [i for i, (_, f, _) in enumerate(entries) if f]
            assert fired_idx, f"agent {d.agent_id} has no deciding rule"
            # Nothing is evaluated after the deciding rule, except the paired
            # oncoming strip/mode entries.
            tail = {entries[i][0] for i in range(fired_idx[0] + 1, len(entries))}
            assert tail <= {"oncoming_strip", "oncoming_mode"}

    def test_determinism(self):
        ego = make_ego()
        agents = [make_agent("a", 15.0, 0.0, 0.0, 5.0),
                  make_agent("b", 30.0, 6.0, -math.pi / 2, 5.0),
                  pedestrian("c", 10.0, 4.0, -math.pi / 2, 1.5)]
        scene = make_scene(ego, agents)
        key = lambda ds: [(d.agent_id, d.mode, d.trace.entries) for d in ds]
        a = classify_all(scene, straight_path(), CFG)
        b = classify_all(scene, straight_path(), CFG)
        assert key(a) == key(b)
