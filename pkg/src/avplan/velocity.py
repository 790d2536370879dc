"""Velocity planning on the s-t graph of the traffic situation.

Dynamic agents with GiveWay/Follow modes become forbidden regions in
(path arc length, time) space; a convex QP (OSQP) finds a comfortable
profile that yields to GiveWay regions and keeps the safety setback to
Follow regions, possibly deciding to stop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import osqp
import scipy.ndimage
import scipy.sparse as sp
import shapely.geometry as sgeom
import shapely.ops
from shapely.prepared import prep

from .geometry import (OrientedBox, Point2, Polyline, Pose2,
                       points_to_polyline_distance,
                       project_points_to_polyline_s, project_to_polyline)
from .rules import FOLLOW, GIVE_WAY
from .scene import EgoState

__all__ = ["STRegion", "STGraph", "VelocityLimits", "Trajectory",
           "safe_follow_distance", "build_st_graph", "plan_velocity"]

DT = 0.1                     # [s] profile discretization
DEFAULT_HORIZON = 8.0
GIVE_WAY_SPACE = 0.5         # [m] personal-space inflation for GiveWay agents
STOP_BUFFER = 0.5            # [m] stop this far before a region
GIVE_WAY_MARGIN = 0.2        # [m] QP bound margin against GiveWay regions
FOLLOW_MARGIN = 0.05
FOLLOW_D_MIN = 2.0           # [m] standstill follow distance
FOLLOW_TAU = 1.0             # [s] reaction headway
LAT_ACCEL_CAP = 2.5          # [m/s^2] lateral acceleration behind the v(s) cap
CREEP_SPEED = 1.0            # [m/s] the cap never drops below this


@dataclass
class VelocityLimits:
    v_max: float = 13.9
    a_max: float = 2.0
    a_min: float = -4.0
    j_max: float = 2.0

    def __post_init__(self):
        if not (self.a_min < 0 < self.a_max):
            raise ValueError("need a_min < 0 < a_max")


@dataclass
class STRegion:
    agent_id: str
    mode: str                     # GiveWay | Follow
    polygon: sgeom.base.BaseGeometry
    lower: np.ndarray             # per time step: min s of region, nan if inactive

    def active(self, k: int) -> bool:
        return not math.isnan(self.lower[k])


@dataclass
class STGraph:
    path_length: float
    horizon: float
    regions: list
    speed_limit: float
    # Piecewise speed limit v_max(s): knots along the path and the cap at
    # each knot (lane limit combined with the lateral-acceleration cap).
    cap_s: np.ndarray | None = None
    cap_v: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / DT))

    def v_max_at(self, s: np.ndarray) -> np.ndarray:
        base = np.full(np.shape(s), self.speed_limit, dtype=float)
        if self.cap_s is None:
            return base
        return np.minimum(base, np.interp(s, self.cap_s, self.cap_v))


@dataclass
class Trajectory:
    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray
    poses: list
    stop_decision: float | None = None
    emergency: bool = False

    def state_at(self, t: float):
        """(s, v, pose) at time t, clamped to the profile span."""
        t = min(max(t, 0.0), float(self.t[-1]))
        s = float(np.interp(t, self.t, self.s))
        v = float(np.interp(t, self.t, self.v))
        i = min(int(t / DT), len(self.poses) - 1)
        frac = t / DT - i
        if i + 1 < len(self.poses) and frac > 0:
            p0, p1 = self.poses[i], self.poses[i + 1]
            x = p0.x * (1 - frac) + p1.x * frac
            y = p0.y * (1 - frac) + p1.y * frac
            h = p0.heading if frac < 0.5 else p1.heading
            pose = Pose2(Point2(x, y), h)
        else:
            pose = self.poses[i]
        return s, v, pose

    def max_jerk(self) -> float:
        if len(self.a) < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.a) / DT)))


def safe_follow_distance(v_ego: float, v_agent: float,
                         limits: VelocityLimits = None) -> float:
    """Distance to keep behind a followed agent."""
    if v_ego < 0 or v_agent < 0:
        raise ValueError("speeds must be >= 0")
    limits = limits or VelocityLimits()
    brake = max(0.0, (v_ego ** 2 - v_agent ** 2) / (2.0 * abs(limits.a_min)))
    return FOLLOW_D_MIN + FOLLOW_TAU * v_ego + brake


def _agent_poly_at(agent, pose, inflation: float):
    box = OrientedBox(pose, agent.footprint.length, agent.footprint.width)
    poly = box.as_polygon().as_shapely()
    if inflation > 0:
        poly = poly.buffer(inflation, quad_segs=8)
    return poly


def build_st_graph(path: Polyline, decisions, agents, ego: EgoState,
                   horizon: float = DEFAULT_HORIZON,
                   limits: VelocityLimits = None,
                   speed_limit: float = None,
                   curvatures: np.ndarray = None) -> STGraph:
    """Project GiveWay/Follow agents into (s, t) blocked regions.

    ``agents`` maps agent id -> Agent. Ignore and DriveAround agents
    contribute nothing here by contract. ``curvatures`` (aligned with the
    path vertices) turn the lateral-acceleration cap into a piecewise
    speed limit v_max(s).
    """
    limits = limits or VelocityLimits()
    v_cap = speed_limit if speed_limit is not None else limits.v_max
    cap_s = cap_v = None
    if curvatures is not None and len(curvatures) == len(path.points):
        kappa = np.abs(np.asarray(curvatures, dtype=float))
        # Worst curvature within ~2 m, so the cap starts before the bend.
        ds = max(path.length / max(1, len(kappa) - 1), 1e-3)
        win = 2 * max(1, int(round(2.0 / ds))) + 1
        kappa = scipy.ndimage.maximum_filter1d(kappa, size=win)
        cap_s = path.cumlen
        cap_v = np.sqrt(LAT_ACCEL_CAP / np.maximum(kappa, 1e-6))
        cap_v = np.maximum(np.minimum(cap_v, v_cap), CREEP_SPEED)
    from .geometry import polyline_box_sweep
    corridor = polyline_box_sweep(path, ego.length, ego.width).as_shapely()
    prepared = prep(corridor)
    n = int(round(horizon / DT))
    ts = np.arange(n + 1) * DT
    half_len = ego.length / 2.0

    ego_half_diag = math.hypot(ego.length, ego.width) / 2.0

    regions = []
    for d in decisions:
        if d.mode not in (GIVE_WAY, FOLLOW):
            continue
        agent = agents[d.agent_id]
        inflation = GIVE_WAY_SPACE if d.mode == GIVE_WAY else 0.0
        agent_half_diag = math.hypot(agent.footprint.length,
                                     agent.footprint.width) / 2.0
        reach = ego_half_diag + agent_half_diag + inflation + 0.01
        lower = np.full(n + 1, np.nan)
        upper = np.full(n + 1, np.nan)
        boxes = []
        # A coarse reachability filter: no part of the inflated agent box can
        # touch the swept corridor when its center is farther from the path
        # than both half-diagonals plus the inflation.
        near = {}
        for pred in agent.predictions:
            centers = np.array([pred.state_at(t).pose.position.as_array()
                                for t in ts])
            dists = points_to_polyline_distance(centers, path)
            near[id(pred)] = dists <= reach
        for k, t in enumerate(ts):
            blocked_lo = math.inf
            blocked_hi = -math.inf
            for pred in agent.predictions:
                if not near[id(pred)][k]:
                    continue
                st = pred.state_at(t)
                poly = _agent_poly_at(agent, st.pose, inflation)
                if not prepared.intersects(poly):
                    continue
                inter = poly.intersection(corridor)
                if inter.is_empty:
                    continue
                coords = []
                geoms = getattr(inter, "geoms", [inter])
                for g in geoms:
                    ext = getattr(g, "exterior", None)
                    coords.extend(ext.coords if ext is not None else g.coords)
                ss = project_points_to_polyline_s(np.array(coords), path)
                lo = float(ss.min()) - half_len
                hi = float(ss.max()) + half_len
                if d.mode == FOLLOW:
                    lo -= safe_follow_distance(ego.speed, st.speed, limits)
                blocked_lo = min(blocked_lo, lo)
                blocked_hi = max(blocked_hi, hi)
            if blocked_hi > blocked_lo:
                lo = max(0.0, blocked_lo)
                hi = min(path.length, blocked_hi)
                if hi > lo:
                    lower[k] = lo
                    upper[k] = hi
                    boxes.append(sgeom.box(lo, t - DT / 2, hi, t + DT / 2))
        if boxes:
            poly = shapely.ops.unary_union(boxes).intersection(
                sgeom.box(0.0, 0.0, path.length, horizon))
            regions.append(STRegion(d.agent_id, d.mode, poly, lower))
    return STGraph(path.length, horizon, regions, v_cap, cap_s, cap_v)


def _emergency_profile(path: Polyline, ego: EgoState, limits: VelocityLimits,
                       horizon: float) -> Trajectory:
    n = int(round(horizon / DT))
    ts = np.arange(n + 1) * DT
    v = np.maximum(0.0, ego.speed + limits.a_min * ts)
    s = np.concatenate([[0.0], np.cumsum((v[:-1] + v[1:]) / 2.0 * DT)])
    a = np.where(v > 0, limits.a_min, 0.0)
    poses = [path.pose_at(si) for si in s]
    return Trajectory(ts, s, v, a, poses,
                      stop_decision=float(s[-1]) if v[-1] == 0 else None,
                      emergency=True)


def plan_velocity(st: STGraph, path: Polyline, ego: EgoState,
                  limits: VelocityLimits = None) -> Trajectory:
    """Profile optimization: min sum(a^2 + 0.5 j^2 + w_v (v - v_ref)^2)."""
    limits = limits or VelocityLimits()
    n = st.n_steps
    m = n + 1
    v0 = min(ego.speed, max(limits.v_max, ego.speed))
    v_ref = min(st.speed_limit, limits.v_max)

    # Per-step upper bound on s from the regions (yield homotopy).
    ub = np.full(m, np.inf)
    for region in st.regions:
        lo_all = region.lower
        finite = ~np.isnan(lo_all)
        if not finite.any():
            continue
        margin = GIVE_WAY_MARGIN if region.mode == GIVE_WAY else FOLLOW_MARGIN
        # Region entirely behind ego: no constraint.
        region_max_s = region.polygon.bounds[2]
        if region_max_s <= 0.05:
            continue
        for k in range(m):
            if finite[k]:
                ub[k] = min(ub[k], lo_all[k] - margin)

    if ub[0] <= 0.0:
        # Already inside (or past the edge of) a blocking region.
        return _emergency_profile(path, ego, limits, st.horizon)

    # QP variables z = [s(0..n), v(0..n), a(0..n)].
    w_v = 1.0
    dt = DT
    I = sp.identity(m, format="csc")
    Dj = sp.diags([[-1.0] * n, [1.0] * n], [0, 1], shape=(n, m)) / dt
    P = sp.block_diag([
        sp.csc_matrix((m, m)),
        2.0 * w_v * I,
        2.0 * (I + 0.5 * (Dj.T @ Dj)),
    ], format="csc")
    q = np.concatenate([np.zeros(m), -2.0 * w_v * np.full(m, v_ref), np.zeros(m)])

    rows = []
    ls = []
    us = []

    def add(mat, lo, hi):
        rows.append(mat)
        ls.append(np.atleast_1d(lo))
        us.append(np.atleast_1d(hi))

    e0 = sp.csc_matrix(([1.0], ([0], [0])), shape=(1, 3 * m))
    add(e0, 0.0, 0.0)                                    # s_0 = 0
    ev0 = sp.csc_matrix(([1.0], ([0], [m])), shape=(1, 3 * m))
    add(ev0, v0, v0)                                     # v_0 fixed

    Ds = sp.hstack([
        sp.diags([[-1.0] * n, [1.0] * n], [0, 1], shape=(n, m)),
        sp.diags([[-dt] * n], [0], shape=(n, m)),
        sp.diags([[-0.5 * dt * dt] * n], [0], shape=(n, m)),
    ])
    add(Ds, np.zeros(n), np.zeros(n))
    Dv = sp.hstack([
        sp.csc_matrix((n, m)),
        sp.diags([[-1.0] * n, [1.0] * n], [0, 1], shape=(n, m)),
        sp.diags([[-dt] * n], [0], shape=(n, m)),
    ])
    add(Dv, np.zeros(n), np.zeros(n))

    # Speed bounds: lane/curvature cap evaluated along an s estimate, floored
    # by what braking at a_min can reach so the bound stays feasible.
    ts_arr = np.arange(m) * dt
    v_floor = np.maximum(0.0, v0 + limits.a_min * ts_arr)

    def v_caps(s_est):
        return np.maximum(st.v_max_at(np.minimum(s_est, st.path_length)),
                          v_floor)

    caps = v_caps(np.minimum(v_ref * ts_arr, st.path_length))
    iv_off = 2 + 2 * n  # row offset of the velocity bounds in (l, u)
    Iv = sp.hstack([sp.csc_matrix((m, m)), I, sp.csc_matrix((m, m))])
    add(Iv, np.zeros(m), caps)
    Ia = sp.hstack([sp.csc_matrix((m, m)), sp.csc_matrix((m, m)), I])
    add(Ia, np.full(m, limits.a_min), np.full(m, limits.a_max))
    Jk = sp.hstack([sp.csc_matrix((n, m)), sp.csc_matrix((n, m)),
                    sp.diags([[-1.0] * n, [1.0] * n], [0, 1], shape=(n, m))])
    add(Jk, np.full(n, -limits.j_max * dt), np.full(n, limits.j_max * dt))

    finite_ub = np.isfinite(ub)
    if finite_ub.any():
        idx = np.where(finite_ub)[0]
        Su = sp.csc_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)),
                           shape=(len(idx), 3 * m))
        add(Su, np.zeros(len(idx)), np.maximum(ub[idx], 0.0))

    A = sp.vstack(rows, format="csc")
    l = np.concatenate(ls)
    u = np.concatenate(us)

    solver = osqp.OSQP()
    solver.setup(P=P, q=q, A=A, l=l, u=u, verbose=False,
                 eps_abs=1e-6, eps_rel=1e-6, max_iter=30000,
                 adaptive_rho_interval=25)
    res = solver.solve()
    status = res.info.status
    if "solved" not in status:
        return _emergency_profile(path, ego, limits, st.horizon)

    # The v(s) cap was linearized along an s estimate; re-linearize along
    # the solved profile until the violation is within tolerance.
    for _ in range(2):
        s_sol = res.x[:m]
        v_sol = res.x[m:2 * m]
        fresh = v_caps(s_sol)
        if float(np.max(v_sol - fresh)) <= 0.1:
            break
        caps = np.minimum(caps, fresh)
        u[iv_off:iv_off + m] = caps
        solver.update(u=u)
        res = solver.solve()
        if "solved" not in res.info.status:
            return _emergency_profile(path, ego, limits, st.horizon)

    z = res.x
    s = np.maximum.accumulate(np.maximum(z[:m], 0.0))
    v = np.clip(z[m:2 * m], 0.0, None)
    a = np.clip(z[2 * m:], limits.a_min, limits.a_max)
    ts = np.arange(m) * dt

    stop = None
    for region in st.regions:
        if region.mode != GIVE_WAY:
            continue
        active = ~np.isnan(region.lower)
        if active.any() and float(np.min(v[active])) < 0.05:
            lo = float(np.nanmin(region.lower))
            cand = lo - STOP_BUFFER
            stop = cand if stop is None else min(stop, cand)

    poses = [path.pose_at(min(si, path.length)) for si in s]
    return Trajectory(ts, s, v, a, poses, stop_decision=stop)
