"""Shape planner: lattice search over a local planning task, then smoothing.

The search runs over an (x, y, heading) lattice with straight / arc motion
primitives, collision-checked against a distance field rasterized from the
task's corridor and obstacle areas. Smoothing is a two-stage procedure on
lateral offsets at fixed stations: a convex QP on second differences, then
Newton iterations on the discrete curvature objective.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import osqp
import scipy.ndimage
import scipy.sparse
import scipy.sparse.csgraph
import shapely

from .geometry import Point2, Polyline, Pose2
from .maneuver import LocalPlanningTask

__all__ = ["ShapeParams", "PathCandidate", "Infeasible",
           "search_coarse_path", "smooth_path", "solve_lpt"]

RASTER_RES = 0.125          # [m] distance-field resolution
START_TOL = 0.15            # [m] tolerated hairline contact at the start pose
HEURISTIC_RES = 0.5         # [m] geodesic-heuristic grid resolution
PRIMITIVE_LEN = 1.0         # [m] arc length of one motion primitive
PRIMITIVE_SAMPLES = 4       # collision samples per primitive
HEADING_STEP = math.pi / 32.0
N_HEADINGS = 64
# The lattice search runs bounded-suboptimal: f = g + this factor times the
# geodesic heuristic. Smoothing removes the resulting kinks, and the factor
# keeps worst-case search times inside the latency budget.
HEURISTIC_INFLATION = 1.3


@dataclass
class ShapeParams:
    grid_xy: float = 0.5
    grid_heading: float = math.pi / 16.0
    max_curvature: float = 0.2
    smooth_weight_curvature: float = 10.0
    smooth_weight_deviation: float = 0.1
    corridor_clearance_m: float = 0.2
    max_expansions: int = 200000
    station_step: float = 1.0

    def __post_init__(self):
        if self.grid_xy <= 0 or self.grid_heading <= 0 or self.max_curvature <= 0:
            raise ValueError("resolutions and curvature limit must be positive")


@dataclass
class PathCandidate:
    polyline: Polyline
    headings: np.ndarray
    curvatures: np.ndarray
    length: float
    cost: float
    clearance_min: float
    smoothed: bool = False
    warning: str = ""
    solve_time_s: float = 0.0

    def pose_at(self, s: float) -> Pose2:
        s = min(max(s, 0.0), self.polyline.length)
        i = int(np.searchsorted(self.polyline.cumlen, s, side="right")) - 1
        i = min(max(i, 0), len(self.headings) - 1)
        return Pose2(self.polyline.point_at(s), float(self.headings[i]))

    def max_curvature(self) -> float:
        return float(np.max(np.abs(self.curvatures))) if len(self.curvatures) else 0.0


@dataclass
class Infeasible:
    reason: str  # "no_path" | "budget_exhausted" | "blocked_start"
    solve_time_s: float = 0.0


class _Raster:
    """Distance fields and penalty weights over the task's bounding box."""

    def __init__(self, lpt: LocalPlanningTask, res: float = RASTER_RES):
        corridor = lpt.corridor_polygon()
        xs = [corridor.bounds[0], corridor.bounds[2]]
        ys = [corridor.bounds[1], corridor.bounds[3]]
        pad = 2.0
        self.x0, self.y0 = xs[0] - pad, ys[0] - pad
        self.res = res
        nx = int(math.ceil((xs[1] + pad - self.x0) / res)) + 1
        ny = int(math.ceil((ys[1] + pad - self.y0) / res)) + 1
        self.nx, self.ny = nx, ny
        gx = self.x0 + (np.arange(nx) + 0.5) * res
        gy = self.y0 + (np.arange(ny) + 0.5) * res
        mx, my = np.meshgrid(gx, gy, indexing="ij")
        flat_x, flat_y = mx.ravel(), my.ravel()

        # Cell centers sample the geometry, so a thin obstacle (or a point
        # near the border) can slip between centers. Buffering obstacles and
        # eroding the corridor by half a cell diagonal guarantees every
        # blocked point lands in a blocked cell; the distance field then
        # under-reports true clearance by at most ``gray`` = res * sqrt(2),
        # and borderline reads are settled by exact_clearance().
        inflate = res * math.sqrt(0.5)
        self.gray = res * math.sqrt(2.0)
        eroded = corridor.buffer(-inflate)
        if eroded.is_empty:
            eroded = corridor
        free = shapely.contains_xy(eroded, flat_x, flat_y)
        self._exact_geoms = []
        for obs in lpt.obstacle_areas:
            g = obs.as_shapely()
            self._exact_geoms.append(g)
            free &= ~shapely.contains_xy(g.buffer(inflate), flat_x, flat_y)
        self._corridor = corridor
        self._corridor_boundary = corridor.boundary
        self.free = free.reshape(nx, ny)
        self.dist = scipy.ndimage.distance_transform_edt(self.free) * res

        tmask = shapely.contains_xy(lpt.target_zone.as_shapely(), flat_x, flat_y)
        self.target = tmask.reshape(nx, ny)

        self.weight = np.zeros((nx, ny))
        for pz in lpt.penalty_zones:
            inside = shapely.contains_xy(pz.region.as_shapely(), flat_x, flat_y)
            self.weight += inside.reshape(nx, ny) * pz.weight
        self.has_weight = bool(lpt.penalty_zones)

        self.origin = np.array([self.x0, self.y0])
        self.inv_res = 1.0 / res
        self._dist_flat = self.dist.ravel()
        self._weight_flat = self.weight.ravel()
        self._target_flat = self.target.ravel()

    def _flat_index(self, xy: np.ndarray) -> np.ndarray:
        """Clipped flat raster indices for (N, 2) points. Points past the
        padded border clip onto non-free cells, so they read as blocked."""
        ij = ((xy - self.origin) * self.inv_res).astype(np.int64)
        np.clip(ij[:, 0], 0, self.nx - 1, out=ij[:, 0])
        np.clip(ij[:, 1], 0, self.ny - 1, out=ij[:, 1])
        return ij[:, 0] * self.ny + ij[:, 1]

    def dist_flat_at(self, xy: np.ndarray) -> np.ndarray:
        return self._dist_flat[self._flat_index(xy)]

    def weight_flat_at(self, xy: np.ndarray) -> np.ndarray:
        return self._weight_flat[self._flat_index(xy)]

    def index(self, xy: np.ndarray):
        ij = np.floor((xy - (self.x0, self.y0)) / self.res).astype(np.int64)
        return ij

    def dist_at(self, xy: np.ndarray) -> np.ndarray:
        ij = self.index(np.atleast_2d(xy))
        ok = ((ij[:, 0] >= 0) & (ij[:, 0] < self.nx)
              & (ij[:, 1] >= 0) & (ij[:, 1] < self.ny))
        out = np.zeros(len(ij))
        out[ok] = self.dist[ij[ok, 0], ij[ok, 1]]
        return out

    def weight_at(self, xy: np.ndarray) -> np.ndarray:
        ij = self.index(np.atleast_2d(xy))
        ok = ((ij[:, 0] >= 0) & (ij[:, 0] < self.nx)
              & (ij[:, 1] >= 0) & (ij[:, 1] < self.ny))
        out = np.zeros(len(ij))
        out[ok] = self.weight[ij[ok, 0], ij[ok, 1]]
        return out

    def in_target(self, xy) -> bool:
        return bool(self._target_flat[self._flat_index(np.atleast_2d(xy))[0]])

    def exact_clearance(self, pts: np.ndarray) -> np.ndarray:
        """Exact distance to the nearest obstacle or corridor border.

        Zero for points outside the corridor.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        geoms = shapely.points(pts)
        d = shapely.distance(self._corridor_boundary, geoms)
        for g in self._exact_geoms:
            np.minimum(d, shapely.distance(g, geoms), out=d)
        inside = shapely.contains_xy(self._corridor, pts[:, 0], pts[:, 1])
        d[~inside] = 0.0
        return d


def _disc_decomposition(length: float, width: float):
    """Covering discs for a box: count, axial offsets, radius."""
    k = 1
    while math.hypot(length / (2 * k), width / 2) - width / 2 > 0.1 and k < 12:
        k += 1
    r = math.hypot(length / (2 * k), width / 2)
    offsets = (np.arange(k) + 0.5) / k * length - length / 2.0
    return offsets, r


def _geodesic_heuristic(raster: _Raster, half_width: float):
    """Obstacle-aware distance-to-target on a coarse grid (8-connected)."""
    stride = max(1, int(round(HEURISTIC_RES / raster.res)))
    free = raster.dist[::stride, ::stride] >= half_width
    target = raster.target[::stride, ::stride] & free
    wt = raster.weight[::stride, ::stride]
    nx, ny = free.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    step = raster.res * stride
    diag = step * math.sqrt(2)
    knight = step * math.sqrt(5)
    for di, dj, w in ((0, 1, step), (1, 0, step), (1, 1, diag), (1, -1, diag),
                      (1, 2, knight), (2, 1, knight), (2, -1, knight),
                      (1, -2, knight)):
        a_sl = (slice(max(0, -di), nx - max(0, di)),
                slice(max(0, -dj), ny - max(0, dj)))
        b_sl = (slice(max(0, di), nx + min(0, di) or None),
                slice(max(0, dj), ny + min(0, dj) or None))
        ok = free[a_sl] & free[b_sl]
        rows.append(idx[a_sl][ok])
        cols.append(idx[b_sl][ok])
        # Penalty zones charge their weight per meter, the same accrual the
        # search applies along primitives.
        mult = 1.0 + 0.5 * (wt[a_sl] + wt[b_sl])
        vals.append(w * mult[ok])
    if rows:
        graph = scipy.sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nx * ny, nx * ny))
    else:
        graph = scipy.sparse.csr_matrix((nx * ny, nx * ny))
    sources = idx[target]
    if len(sources) == 0:
        return None, stride
    d = scipy.sparse.csgraph.dijkstra(graph, directed=False, indices=sources,
                                      min_only=True)
    return d.reshape(nx, ny), stride


_PRIM_CACHE = {}


def _primitive_table(psi0: float, disc_offsets, params: ShapeParams):
    """Per (relative heading index, primitive): disc-center offsets, path
    sample offsets, end offset and heading step.

    The zero-heading table only depends on the disc layout and curvature
    limit, so it is cached and rotated into the start heading on each call.
    """
    key = (tuple(np.round(disc_offsets, 9)), round(params.max_curvature, 9))
    base = _PRIM_CACHE.get(key)
    if base is None:
        base = _primitive_table_base(disc_offsets, params)
        _PRIM_CACHE[key] = base
    c, s = math.cos(psi0), math.sin(psi0)
    rot = np.array([[c, s], [-s, c]])  # right-multiplied by row vectors
    table = []
    for row in base:
        out_row = []
        for prim in row:
            out_row.append({
                "centers": prim["centers"] @ rot,
                "samples": prim["samples"] @ rot,
                "headings": prim["headings"] + psi0,
                "end": prim["end"] @ rot,
                "dk": prim["dk"],
                "kappa": prim["kappa"],
            })
        table.append(out_row)
    return table


def _primitive_table_base(disc_offsets, params: ShapeParams):
    psi0 = 0.0
    dpsis = [0.0, HEADING_STEP, -HEADING_STEP, 2 * HEADING_STEP, -2 * HEADING_STEP]
    dpsis = [d for d in dpsis if abs(d) / PRIMITIVE_LEN <= params.max_curvature + 1e-9]
    fracs = (np.arange(PRIMITIVE_SAMPLES) + 1.0) / PRIMITIVE_SAMPLES
    table = []
    for k in range(N_HEADINGS):
        psi = psi0 + k * HEADING_STEP
        row = []
        for p_idx, dpsi in enumerate(dpsis):
            kappa = dpsi / PRIMITIVE_LEN
            ls = fracs * PRIMITIVE_LEN
            if abs(kappa) < 1e-12:
                xs = ls * math.cos(psi)
                ys = ls * math.sin(psi)
                hs = np.full_like(ls, psi)
            else:
                hs = psi + kappa * ls
                xs = (np.sin(hs) - math.sin(psi)) / kappa
                ys = (math.cos(psi) - np.cos(hs)) / kappa
            pts = np.stack([xs, ys], axis=1)
            # Disc centers at every sample pose.
            ca, sa = np.cos(hs), np.sin(hs)
            centers = np.concatenate([
                pts + np.stack([ca * off, sa * off], axis=1)
                for off in disc_offsets])
            dk = int(round(dpsi / HEADING_STEP))
            row.append({
                "centers": centers,
                "samples": pts,
                "headings": hs,
                "end": pts[-1],
                "dk": dk,
                "kappa": kappa,
            })
        table.append(row)
    return table


def search_coarse_path(lpt: LocalPlanningTask, params: ShapeParams,
                       raster: _Raster = None):
    """Lattice search from the start pose into the target zone."""
    t0 = time.perf_counter()
    raster = raster or _Raster(lpt)
    start = np.array([lpt.start.x, lpt.start.y])
    psi0 = lpt.start.heading

    disc_offsets, r_disc = _disc_decomposition(lpt.ego_length, lpt.ego_width)

    # Start already inside the target zone: zero-length path.
    if raster.in_target(start):
        d = np.array([math.cos(psi0), math.sin(psi0)])
        poly = Polyline([start, start + d * 0.01])
        return PathCandidate(poly, np.array([psi0, psi0]), np.zeros(2),
                             0.0, 0.0, float(raster.dist_at(start)[0] - lpt.ego_width / 2),
                             solve_time_s=time.perf_counter() - t0)

    start_centers = start + np.stack(
        [np.cos(psi0) * disc_offsets, np.sin(psi0) * disc_offsets], axis=1)
    # Tolerate hairline contact at the start: obstacles carved away from the
    # start footprint leave only START_TOL of slack around the covering discs.
    if np.any(raster.exact_clearance(start_centers) < r_disc - START_TOL):
        return Infeasible("blocked_start", time.perf_counter() - t0)

    hgrid, stride = _geodesic_heuristic(raster, lpt.ego_width / 2.0)
    if hgrid is None:
        return Infeasible("no_path", time.perf_counter() - t0)
    hstep = raster.res * stride

    def heuristic(xy):
        i = int((xy[0] - raster.x0) / hstep)
        j = int((xy[1] - raster.y0) / hstep)
        if 0 <= i < hgrid.shape[0] and 0 <= j < hgrid.shape[1]:
            g = hgrid[i, j]
            if math.isfinite(g):
                # 16-connected geodesics overestimate by up to ~2.8 %; scale
                # down to stay admissible.
                return max(0.0, g * 0.97 - hstep)
        return 0.0

    table = _primitive_table(psi0, disc_offsets, params)
    # All disc centers of a heading's primitives in one block, so each
    # expansion does a single raster gather.
    cat_centers = [np.concatenate([prim["centers"] for prim in row])
                   for row in table]
    n_prims = len(table[0])

    # Node storage.
    xs = [start[0]]
    ys = [start[1]]
    ks = [0]
    gs = [0.0]
    parents = [-1]
    prims = [-1]

    inv_grid = 1.0 / params.grid_xy
    closed = set()
    heap = [(HEURISTIC_INFLATION * heuristic(start), 0.0, 0, 0)]
    ctr = 1
    expansions = 0
    goal_idx = -1

    while heap:
        f, h, _, idx = heapq.heappop(heap)
        key = (int(xs[idx] * inv_grid), int(ys[idx] * inv_grid), ks[idx] % N_HEADINGS)
        if key in closed:
            continue
        closed.add(key)
        pos = np.array([xs[idx], ys[idx]])
        if raster.in_target(pos):
            goal_idx = idx
            break
        expansions += 1
        if expansions > params.max_expansions:
            return Infeasible("budget_exhausted", time.perf_counter() - t0)
        k = ks[idx] % N_HEADINGS
        centers_k = pos + cat_centers[k]
        d_all = raster.dist_flat_at(centers_k).reshape(n_prims, -1)
        ok = (d_all >= r_disc + raster.gray).all(axis=1)
        maybe = ~ok & (d_all >= r_disc - raster.gray).all(axis=1)
        if maybe.any():
            # Raster reads within quantization error of the limit: settle
            # the borderline disc centers exactly, in one batched call.
            gray = (d_all < r_disc + raster.gray) & maybe[:, None]
            exact_bad = np.zeros_like(gray)
            flat = gray.ravel()
            exact_bad.ravel()[flat] = \
                raster.exact_clearance(centers_k[flat]) < r_disc
            ok |= maybe & ~exact_bad.any(axis=1)
        for p_idx, prim in enumerate(table[k]):
            if not ok[p_idx]:
                continue
            end = pos + prim["end"]
            nkey = (int(end[0] * inv_grid), int(end[1] * inv_grid),
                    (k + prim["dk"]) % N_HEADINGS)
            if nkey in closed:
                continue
            penalty = 0.0
            if raster.has_weight:
                samples = pos + prim["samples"]
                penalty = float(np.mean(raster.weight_flat_at(samples))) * PRIMITIVE_LEN
            g = gs[idx] + PRIMITIVE_LEN + penalty
            xs.append(float(end[0]))
            ys.append(float(end[1]))
            ks.append(k + prim["dk"])
            gs.append(g)
            parents.append(idx)
            prims.append(p_idx)
            hh = heuristic(end)
            heapq.heappush(heap, (g + HEURISTIC_INFLATION * hh, hh, ctr,
                                  len(xs) - 1))
            ctr += 1

    if goal_idx < 0:
        return Infeasible("no_path", time.perf_counter() - t0)

    # Reconstruct sampled path.
    chain = []
    idx = goal_idx
    while idx >= 0:
        chain.append(idx)
        idx = parents[idx]
    chain.reverse()
    pts = [start]
    heads = [psi0]
    kappas = [0.0]
    for idx in chain[1:]:
        p = parents[idx]
        prim = table[ks[p] % N_HEADINGS][prims[idx]]
        base = np.array([xs[p], ys[p]])
        for sp, sh in zip(prim["samples"], prim["headings"]):
            pts.append(base + sp)
            heads.append(float(sh))
            kappas.append(prim["kappa"])
    poly = Polyline(pts)
    d_path = raster.exact_clearance(np.asarray(pts))
    clearance = float(np.min(d_path) - lpt.ego_width / 2.0)
    return PathCandidate(poly, np.array(heads), np.array(kappas), poly.length,
                         gs[goal_idx], clearance,
                         solve_time_s=time.perf_counter() - t0)


def _second_diff_matrix(n: int) -> np.ndarray:
    d2 = np.zeros((n - 2, n))
    for i in range(n - 2):
        d2[i, i] = 1.0
        d2[i, i + 1] = -2.0
        d2[i, i + 2] = 1.0
    return d2


class _BoxQP:
    """Box-constrained convex QP min 0.5 x'Qx + b'x, lo <= x <= hi, solved
    to 1e-8 tolerance. The linear term can be swapped between solves."""

    def __init__(self, Q, lo, hi):
        n = len(lo)
        self.solver = osqp.OSQP()
        self.solver.setup(P=scipy.sparse.csc_matrix(Q), q=np.zeros(n),
                          A=scipy.sparse.identity(n, format="csc"),
                          l=lo, u=hi, verbose=False,
                          eps_abs=1e-8, eps_rel=1e-8, max_iter=20000,
                          adaptive_rho_interval=25)
        self.lo, self.hi = lo, hi

    def solve(self, b) -> np.ndarray:
        self.solver.update(q=np.asarray(b, dtype=float))
        res = self.solver.solve()
        return np.clip(res.x, self.lo, self.hi)


def _lateral_bounds(raster: _Raster, pts, normals, half_w, clearance, r_disc,
                    disc_offsets, headings, max_off=4.0, step=0.05):
    """Per-station admissible lateral offset interval around the coarse path.

    An offset is admissible while every covering disc keeps the required
    clearance; the interval is the contiguous admissible run around zero.
    """
    n = len(pts)
    ca, sa = np.cos(headings), np.sin(headings)
    # axial[i, d, :]: disc-center offset d at station i.
    axial = np.stack([np.outer(ca, disc_offsets),
                      np.outer(sa, disc_offsets)], axis=2)
    base = pts[:, None, :] + axial                       # (n, nd, 2)
    d_here = raster.dist_flat_at(base.reshape(-1, 2)).reshape(n, -1).min(axis=1)
    req = r_disc + np.minimum(clearance, np.maximum(0.0, d_here - r_disc - 0.01))

    offs = np.arange(-max_off, max_off + step / 2.0, step)
    k0 = int(round(max_off / step))                      # index of offset 0
    cand = (base[:, None, :, :]
            + (offs[None, :, None, None] * normals[:, None, None, :]))
    d = raster.dist_flat_at(cand.reshape(-1, 2)).reshape(n, len(offs), -1)
    ok = (d.min(axis=2) >= req[:, None])                 # (n, n_off)

    up = ok[:, k0 + 1:]
    bad_up = ~up
    n_up = np.where(bad_up.any(axis=1), bad_up.argmax(axis=1), up.shape[1])
    down = ok[:, :k0][:, ::-1]
    bad_dn = ~down
    n_dn = np.where(bad_dn.any(axis=1), bad_dn.argmax(axis=1), down.shape[1])
    return -n_dn * step, n_up * step


def smooth_path(coarse: PathCandidate, lpt: LocalPlanningTask,
                params: ShapeParams, raster: _Raster = None) -> PathCandidate:
    """Two-stage smoothing of the coarse path (QP + Newton on curvature)."""
    if coarse.length < 2.5 * params.station_step:
        return coarse
    raster = raster or _Raster(lpt)
    n = int(coarse.length / params.station_step) + 1
    ss = np.linspace(0.0, coarse.polyline.length, n)
    pts = np.array([coarse.polyline.point_at(s).as_array() for s in ss])
    headings = np.array([coarse.polyline.heading_at(s) for s in ss])
    normals = np.stack([-np.sin(headings), np.cos(headings)], axis=1)
    disc_offsets, r_disc = _disc_decomposition(lpt.ego_length, lpt.ego_width)

    tighten = 0.0
    for attempt in range(4):
        lo, hi = _lateral_bounds(raster, pts, normals, lpt.ego_width / 2.0,
                                 params.corridor_clearance_m + tighten,
                                 r_disc, disc_offsets, headings)
        # Pin the start (position and heading).
        lo[0] = hi[0] = 0.0
        lo[1] = max(lo[1], -0.05)
        hi[1] = min(hi[1], 0.05)
        lo = np.minimum(lo, hi)

        d2 = _second_diff_matrix(n)
        # Stage 1: quadratic program on offsets (smoothness + deviation).
        Q = (2.0 * params.smooth_weight_curvature * d2.T @ d2
             + 2.0 * params.smooth_weight_deviation * np.eye(n))
        offsets = _BoxQP(Q, lo, hi).solve(np.zeros(n))
        # Stage 2: Newton iterations on integrated squared curvature of the
        # displaced points (quadratic in the offsets, so each step is exact).
        A = d2.T @ d2
        NN = normals @ normals.T
        H = 2.0 * (A * NN) + 2.0 * params.smooth_weight_deviation * np.eye(n)
        newton = _BoxQP(H, lo, hi)
        for _ in range(50):
            p_cur = pts + offsets[:, None] * normals
            grad = 2.0 * np.einsum("ij,jk,ik->i", A, p_cur, normals) \
                + 2.0 * params.smooth_weight_deviation * offsets
            if float(np.linalg.norm(grad)) < 1e-6:
                break
            offsets = newton.solve(grad - H @ offsets)

        new_pts = pts + offsets[:, None] * normals
        # Resample through a cubic spline for final headings and curvature.
        seg = np.hypot(*np.diff(new_pts, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        from scipy.interpolate import CubicSpline
        spx = CubicSpline(cum, new_pts[:, 0])
        spy = CubicSpline(cum, new_pts[:, 1])
        s_fine = np.arange(0.0, cum[-1] + 0.125, 0.25)
        s_fine = np.clip(s_fine, 0.0, cum[-1])
        fx, fy = spx(s_fine), spy(s_fine)
        dx, dy = spx(s_fine, 1), spy(s_fine, 1)
        ddx, ddy = spx(s_fine, 2), spy(s_fine, 2)
        denom = np.maximum((dx * dx + dy * dy) ** 1.5, 1e-9)
        kappa = (dx * ddy - dy * ddx) / denom
        heads = np.arctan2(dy, dx)
        fine_pts = np.stack([fx, fy], axis=1)

        # Collision verification on the smoothed result: raster prefilter,
        # exact geometry for any borderline disc center.
        ca, sa = np.cos(heads), np.sin(heads)
        viol = bool(np.abs(kappa).max() > params.max_curvature + 0.01)
        for off in disc_offsets:
            if viol:
                break
            centers = fine_pts + np.stack([ca * off, sa * off], axis=1)
            d = raster.dist_at(centers)
            gray = d < r_disc + raster.gray
            if gray.any() and np.any(
                    raster.exact_clearance(centers[gray]) < r_disc - 1e-6):
                viol = True
                break
        if not viol:
            poly = Polyline(fine_pts)
            penalty = float(np.mean(raster.weight_at(fine_pts))) * poly.length
            d_min = float(np.min(raster.exact_clearance(fine_pts)))
            return PathCandidate(poly, heads, kappa, poly.length,
                                 poly.length + penalty,
                                 d_min - lpt.ego_width / 2.0,
                                 smoothed=True,
                                 solve_time_s=coarse.solve_time_s)
        tighten += 0.05

    coarse.warning = "smoothing failed verification; coarse path kept"
    return coarse


def solve_lpt(lpt: LocalPlanningTask, params: ShapeParams = None):
    """Search then smooth; returns PathCandidate or Infeasible."""
    params = params or ShapeParams()
    t0 = time.perf_counter()
    raster = _Raster(lpt)
    coarse = search_coarse_path(lpt, params, raster)
    if isinstance(coarse, Infeasible):
        coarse.solve_time_s = time.perf_counter() - t0
        return coarse
    if coarse.length == 0.0:
        coarse.solve_time_s = time.perf_counter() - t0
        return coarse
    result = smooth_path(coarse, lpt, params, raster)
    result.solve_time_s = time.perf_counter() - t0
    return result
