"""Tests for the speed-profile planner and its s-t obstacle projection.

The independent oracle here is a brute-force sweep: agent boxes are sampled
on a fine time grid and intersected with the swept ego corridor directly,
without going through build_st_graph's reachability filter or region union.
"""

import math

import numpy as np
import pytest
import shapely
import shapely.geometry as sgeom

from avplan.geometry import OrientedBox, Polyline, polyline_box_sweep
from avplan.rules import Decision, RuleTrace, GIVE_WAY, FOLLOW, IGNORE
from avplan.velocity import (DT, DEFAULT_HORIZON, FOLLOW_D_MIN, FOLLOW_TAU,
                             GIVE_WAY_SPACE, STOP_BUFFER, VelocityLimits,
                             build_st_graph, plan_velocity,
                             safe_follow_distance)

from conftest import make_agent, make_ego, straight_path


def decision(agent_id, mode):
    return Decision(agent_id=agent_id, mode=mode, trace=RuleTrace())


def plan(path, decisions, agents, ego, limits=None, speed_limit=None,
         curvatures=None):
    st = build_st_graph(path, decisions, agents, ego,
                        limits=limits, speed_limit=speed_limit,
                        curvatures=curvatures)
    return st, plan_velocity(st, path, ego, limits=limits)


class TestSafeFollowDistance:

    def test_standstill(self):
        # v_ego = v_agent = 0: only the minimum gap remains.
        assert safe_follow_distance(0.0, 0.0) == pytest.approx(FOLLOW_D_MIN)

    def test_matched_speeds_headway_only(self):
        # Equal speeds: no braking term, gap = d_min + tau * v.
        v = 10.0
        expected = FOLLOW_D_MIN + FOLLOW_TAU * v
        assert safe_follow_distance(v, v) == pytest.approx(expected)

    def test_braking_term(self):
        # 10 m/s ego behind a 5 m/s agent with a_min = -4:
        # (100 - 25) / 8 = 9.375 on top of 2 + 10.
        assert safe_follow_distance(10.0, 5.0) == pytest.approx(21.375)

    def test_faster_agent_no_negative_brake(self):
        # The braking term must clamp at zero when the agent is faster.
        assert safe_follow_distance(5.0, 10.0) == pytest.approx(
            FOLLOW_D_MIN + FOLLOW_TAU * 5.0)

    def test_monotone_in_ego_speed(self):
        ds = [safe_follow_distance(v, 3.0) for v in np.linspace(0, 15, 31)]
        assert np.all(np.diff(ds) > 0)

    def test_negative_speed_rejected(self):
        with pytest.raises(ValueError):
            safe_follow_distance(-1.0, 0.0)
        with pytest.raises(ValueError):
            safe_follow_distance(0.0, -0.1)


class TestVelocityLimits:

    def test_defaults(self):
        lim = VelocityLimits()
        assert lim.a_min < 0 < lim.a_max
        assert lim.v_max > 0 and lim.j_max > 0

    def test_sign_validation(self):
        with pytest.raises(ValueError):
            VelocityLimits(a_min=1.0)
        with pytest.raises(ValueError):
            VelocityLimits(a_max=-1.0)


def sweep_oracle(path, agent, ego, inflation, horizon=DEFAULT_HORIZON,
                 dt=0.05):
    """Blocked (s, t) samples from direct geometry at a finer time step.

    Returns a list of (t, s_lo, s_hi) intervals of corridor overlap in the
    path arclength frame, extended by the ego half length like the planner's
    own convention.
    """
    corridor = polyline_box_sweep(path, ego.length, ego.width).as_shapely()
    half_len = ego.length / 2.0
    out = []
    for t in np.arange(0.0, horizon + dt / 2, dt):
        st = agent.predictions[0].state_at(t)
        box = OrientedBox(st.pose, agent.footprint.length,
                          agent.footprint.width).as_polygon().as_shapely()
        if inflation > 0:
            box = box.buffer(inflation, quad_segs=8)
        inter = box.intersection(corridor)
        if inter.is_empty:
            continue
        x0, _, x1, _ = inter.bounds
        # Straight path along +x starting at the origin: s equals x.
        out.append((t, x0 - half_len, x1 + half_len))
    return out


class TestBuildSTGraph:

    def test_ignore_contributes_nothing(self, ego, path):
        agent = make_agent("a", 30.0, 0.0, 0.0, 2.0)
        st = build_st_graph(path, [decision("a", IGNORE)], {"a": agent}, ego)
        assert st.regions == []

    def test_crossing_agent_region_matches_sweep(self, ego, path):
        # Vehicle crossing the path at x = 30, arriving around t = 3.
        agent = make_agent("a", 30.0, 8.0, -math.pi / 2, 2.0)
        st = build_st_graph(path, [decision("a", GIVE_WAY)], {"a": agent}, ego)
        assert len(st.regions) == 1
        region = st.regions[0]
        assert region.mode == GIVE_WAY

        oracle = sweep_oracle(path, agent, ego, GIVE_WAY_SPACE)
        assert oracle, "oracle found no overlap; scenario is miscalibrated"

        # Every oracle sample away from the region's time edges must be
        # covered by the planner's polygon (the planner samples at DT, so
        # edges can differ by up to one step).
        t_lo = min(t for t, _, _ in oracle)
        t_hi = max(t for t, _, _ in oracle)
        for t, s0, s1 in oracle:
            if t - t_lo < DT or t_hi - t < DT:
                continue
            mid = sgeom.Point((s0 + s1) / 2.0, t)
            assert region.polygon.distance(mid) < 1e-9

        # And the planner region must not extend far beyond the oracle.
        b = region.polygon.bounds
        assert b[1] >= t_lo - DT - 1e-9
        assert b[3] <= t_hi + DT + 1e-9
        s_lo = min(s0 for _, s0, _ in oracle)
        s_hi = max(s1 for _, _, s1 in oracle)
        assert b[0] >= max(0.0, s_lo) - 0.05
        assert b[2] <= min(path.length, s_hi) + 0.05

    def test_follow_region_includes_safety_gap(self, ego, path):
        # Lead vehicle 20 m ahead moving at 3 m/s along the path.
        agent = make_agent("a", 20.0, 0.0, 0.0, 3.0)
        st = build_st_graph(path, [decision("a", FOLLOW)], {"a": agent}, ego)
        assert len(st.regions) == 1
        region = st.regions[0]

        gap = safe_follow_distance(ego.speed, 3.0)
        oracle = sweep_oracle(path, agent, ego, 0.0)
        by_t = {round(t / DT): (s0, s1) for t, s0, s1 in oracle
                if abs(t / DT - round(t / DT)) < 1e-9}
        n_hit = 0
        for k, (s0, _) in by_t.items():
            lo = region.lower[k]
            if np.isnan(lo):
                continue
            assert lo == pytest.approx(s0 - gap, abs=0.05)
            n_hit += 1
        assert n_hit > 10

    def test_region_clipped_to_path_and_horizon(self, ego, path):
        agent = make_agent("a", 5.0, 0.0, 0.0, 0.0)
        st = build_st_graph(path, [decision("a", FOLLOW)], {"a": agent}, ego)
        b = st.regions[0].polygon.bounds
        assert b[0] >= 0.0 and b[2] <= path.length
        assert b[1] >= 0.0 and b[3] <= st.horizon

    def test_curvature_cap_piecewise(self, ego):
        # A path with a tight bend in the middle gets a local speed cap of
        # sqrt(a_lat / kappa) there and the lane limit elsewhere.
        xs = np.linspace(0.0, 80.0, 161)
        path = Polyline([(x, 0.0) for x in xs])
        kappa = np.zeros(len(xs))
        kappa[(xs > 38) & (xs < 42)] = 0.1
        st = build_st_graph(path, [], {}, ego, curvatures=kappa)
        v_mid = float(st.v_max_at(np.array([40.0]))[0])
        v_far = float(st.v_max_at(np.array([5.0]))[0])
        assert v_mid == pytest.approx(math.sqrt(2.5 / 0.1), abs=1e-6)
        assert v_far == pytest.approx(st.speed_limit, abs=1e-6)


def check_kinematics(traj, limits):
    ds = np.diff(traj.s)
    v_mid = (traj.v[:-1] + traj.v[1:]) / 2.0
    assert np.max(np.abs(ds / DT - v_mid)) < 0.05
    assert np.all(traj.v >= -1e-6)
    assert np.min(traj.a) >= limits.a_min - 1e-6
    assert np.max(traj.a) <= limits.a_max + 1e-6


class TestPlanVelocity:

    def test_free_road_reaches_vmax(self, ego, path):
        limits = VelocityLimits()
        st, traj = plan(path, [], {}, ego, limits=limits)
        assert traj.v[-1] == pytest.approx(limits.v_max, abs=0.1)
        assert not traj.emergency
        check_kinematics(traj, limits)

    def test_speed_limit_respected(self, ego, path):
        st, traj = plan(path, [], {}, ego, speed_limit=8.0)
        assert float(np.max(traj.v)) <= 8.0 + 0.1
        assert traj.v[-1] == pytest.approx(8.0, abs=0.1)

    def test_give_way_stops_before_region(self, path):
        ego = make_ego(speed=8.0)
        # A stationary blocker parked across the path far enough ahead
        # to brake for comfortably.
        agent = make_agent("a", 45.0, 0.0, math.pi / 2, 0.0)
        st, traj = plan(path, [decision("a", GIVE_WAY)], {"a": agent}, ego)
        region = st.regions[0]
        lo = float(np.nanmin(region.lower))
        assert float(traj.s[-1]) <= lo - STOP_BUFFER + 0.25
        assert float(traj.v[-1]) < 0.1
        assert traj.stop_decision is not None
        assert traj.stop_decision == pytest.approx(lo - STOP_BUFFER)
        check_kinematics(traj, VelocityLimits())

    def test_yield_then_proceed_after_crossing(self, path):
        # A crossing agent clears the path within the horizon; the profile
        # must hold back while the region is active but does not need to
        # come to a full stop.
        ego = make_ego(speed=6.0)
        agent = make_agent("a", 25.0, 6.0, -math.pi / 2, 3.0)
        st, traj = plan(path, [decision("a", GIVE_WAY)], {"a": agent}, ego)
        region = st.regions[0]
        for k in range(st.n_steps + 1):
            lo = region.lower[k]
            if not np.isnan(lo):
                assert traj.s[k] <= lo + 1e-6
        assert float(traj.s[-1]) > float(np.nanmax(region.lower))

    def test_follow_keeps_safety_gap(self, path):
        ego = make_ego(speed=10.0)
        agent = make_agent("a", 25.0, 0.0, 0.0, 5.0)
        st, traj = plan(path, [decision("a", FOLLOW)], {"a": agent}, ego)
        region = st.regions[0]
        for k in range(st.n_steps + 1):
            lo = region.lower[k]
            if not np.isnan(lo):
                assert traj.s[k] <= lo + 1e-6
        # The lower bound already embeds safe_follow_distance; staying below
        # it therefore keeps at least that gap (minus the small QP margin).
        check_kinematics(traj, VelocityLimits())

    def test_no_samples_inside_regions(self, path):
        ego = make_ego(speed=9.0)
        agents = {"a": make_agent("a", 30.0, 10.0, -math.pi / 2, 2.5),
                  "b": make_agent("b", 50.0, 0.0, 0.0, 4.0)}
        decs = [decision("a", GIVE_WAY), decision("b", FOLLOW)]
        st, traj = plan(path, decs, agents, ego)
        pts = shapely.points(np.column_stack(
            [traj.s, np.arange(len(traj.s)) * DT]))
        for region in st.regions:
            assert not np.any(shapely.contains(region.polygon, pts))

    def test_ignore_equals_agent_free(self, path):
        ego = make_ego(speed=7.0)
        agent = make_agent("a", 30.0, 5.0, 0.0, 3.0)
        _, with_ignored = plan(path, [decision("a", IGNORE)], {"a": agent}, ego)
        _, free = plan(path, [], {}, ego)
        assert np.array_equal(with_ignored.s, free.s)
        assert np.array_equal(with_ignored.v, free.v)

    def test_blocked_start_emergency_brake(self, path):
        # Agent already overlapping the ego position: emergency profile at
        # the full braking limit.
        limits = VelocityLimits()
        ego = make_ego(speed=10.0)
        agent = make_agent("a", 2.0, 0.0, math.pi / 2, 0.0)
        st, traj = plan(path, [decision("a", GIVE_WAY)], {"a": agent}, ego,
                        limits=limits)
        assert traj.emergency
        assert float(traj.v[0]) == pytest.approx(10.0)
        assert float(traj.v[-1]) == 0.0
        # Constant a_min until standstill.
        braking = traj.a[traj.v > 0]
        assert np.allclose(braking, limits.a_min)

    def test_jerk_limit(self, path):
        limits = VelocityLimits(j_max=1.5)
        ego = make_ego(speed=2.0)
        _, traj = plan(path, [], {}, ego, limits=limits)
        assert traj.max_jerk() <= limits.j_max + 0.05

    def test_deterministic(self, path):
        ego = make_ego(speed=8.0)
        agent = make_agent("a", 35.0, 8.0, -math.pi / 2, 2.0)
        runs = []
        for _ in range(2):
            _, traj = plan(path, [decision("a", GIVE_WAY)],
                           {"a": agent}, ego)
            runs.append((traj.s.tobytes(), traj.v.tobytes(),
                         traj.a.tobytes()))
        assert runs[0] == runs[1]

    def test_state_at_interpolation(self, path):
        ego = make_ego(speed=5.0)
        _, traj = plan(path, [], {}, ego)
        s, v, pose = traj.state_at(0.05)
        assert traj.s[0] <= s <= traj.s[1]
        assert traj.v[0] <= max(v, traj.v[0])
        # Clamps beyond the horizon.
        s_end, v_end, _ = traj.state_at(1e9)
        assert s_end == pytest.approx(float(traj.s[-1]))
        assert v_end == pytest.approx(float(traj.v[-1]))
