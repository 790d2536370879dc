"""Planar geometry primitives shared by all planner stages.

Everything lives in a single local Cartesian frame. Angles are radians
normalized to (-pi, pi] unless a function says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely.geometry as sgeom
import shapely.ops

__all__ = [
    "Point2",
    "Pose2",
    "Polyline",
    "Polygon",
    "OrientedBox",
    "FrenetCoord",
    "normalize_angle",
    "angle_between_directions",
    "project_to_polyline",
    "points_to_polyline_distance",
    "project_points_to_polyline_s",
    "inflate_polygon",
    "boxes_intersect",
    "polyline_box_sweep",
]

# Minimum segment length accepted when building polylines [m].
MIN_SEGMENT_LEN = 1e-9


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Pose2:
    position: Point2
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def x(self) -> float:
        return self.position.x

    @property
    def y(self) -> float:
        return self.position.y

    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])


@dataclass(frozen=True)
class FrenetCoord:
    """Arc-length / signed-lateral coordinates relative to a reference polyline.

    l > 0 is to the left of the reference direction.
    """

    s: float
    l: float


class Polyline:
    """Ordered point chain with cached cumulative arc length.

    Immutable by convention: do not mutate ``points`` after construction.
    """

    __slots__ = ("points", "_cumlen", "_shapely")

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("polyline needs >= 2 points of shape (N, 2)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polyline has non-finite coordinates")
        seg = np.hypot(*(pts[1:] - pts[:-1]).T)
        if np.any(seg <= MIN_SEGMENT_LEN):
            raise ValueError("polyline has a degenerate (zero-length) segment")
        self.points = pts
        self._cumlen = np.concatenate([[0.0], np.cumsum(seg)])
        self._shapely = None

    @property
    def length(self) -> float:
        return float(self._cumlen[-1])

    @property
    def cumlen(self) -> np.ndarray:
        return self._cumlen

    def as_shapely(self) -> sgeom.LineString:
        if self._shapely is None:
            self._shapely = sgeom.LineString(self.points)
        return self._shapely

    def point_at(self, s: float) -> Point2:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cumlen, s, side="right")) - 1
        i = min(max(i, 0), len(self.points) - 2)
        t = (s - self._cumlen[i]) / (self._cumlen[i + 1] - self._cumlen[i])
        p = self.points[i] * (1 - t) + self.points[i + 1] * t
        return Point2(float(p[0]), float(p[1]))

    def heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cumlen, s, side="right")) - 1
        i = min(max(i, 0), len(self.points) - 2)
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])

    def normal_at(self, s: float) -> np.ndarray:
        """Left unit normal at arc length s."""
        h = self.heading_at(s)
        return np.array([-math.sin(h), math.cos(h)])

    def pose_at(self, s: float) -> Pose2:
        return Pose2(self.point_at(s), self.heading_at(s))

    def slice(self, s0: float, s1: float) -> "Polyline":
        """Sub-polyline between arc lengths s0 < s1."""
        s0 = min(max(s0, 0.0), self.length)
        s1 = min(max(s1, 0.0), self.length)
        if s1 - s0 <= MIN_SEGMENT_LEN:
            raise ValueError("empty polyline slice")
        inside = (self._cumlen > s0 + 1e-9) & (self._cumlen < s1 - 1e-9)
        pts = [self.point_at(s0).as_array()]
        pts.extend(self.points[inside])
        pts.append(self.point_at(s1).as_array())
        return Polyline(np.array(pts))

    def resample(self, step: float) -> "Polyline":
        n = max(2, int(math.ceil(self.length / step)) + 1)
        ss = np.linspace(0.0, self.length, n)
        return Polyline([self.point_at(s).as_array() for s in ss])

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1])


class Polygon:
    """Simple polygon with counterclockwise outer ring."""

    __slots__ = ("vertices", "_shapely")

    def __init__(self, vertices):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("polygon needs >= 3 vertices of shape (N, 2)")
        if not np.all(np.isfinite(verts)):
            raise ValueError("polygon has non-finite coordinates")
        # Drop an explicitly repeated closing vertex.
        if np.allclose(verts[0], verts[-1]):
            verts = verts[:-1]
        if verts.shape[0] < 3:
            raise ValueError("polygon needs >= 3 distinct vertices")
        area2 = _signed_area2(verts)
        if area2 < 0:
            verts = verts[::-1]
            area2 = -area2
        if area2 <= 0:
            raise ValueError("polygon has zero area")
        self.vertices = verts
        self._shapely = None
        if not self.as_shapely().is_valid:
            raise ValueError("polygon ring is self-intersecting")

    @property
    def area(self) -> float:
        return 0.5 * _signed_area2(self.vertices)

    def as_shapely(self) -> sgeom.Polygon:
        if self._shapely is None:
            self._shapely = sgeom.Polygon(self.vertices)
        return self._shapely

    def contains_point(self, p: Point2) -> bool:
        return self.as_shapely().covers(sgeom.Point(p.x, p.y))

    def intersects(self, other: "Polygon") -> bool:
        return self.as_shapely().intersects(other.as_shapely())

    def distance_to(self, other: "Polygon") -> float:
        return float(self.as_shapely().distance(other.as_shapely()))

    def centroid(self) -> Point2:
        c = self.as_shapely().centroid
        return Point2(c.x, c.y)

    @staticmethod
    def from_shapely(geom) -> "Polygon":
        if geom.geom_type == "MultiPolygon":
            geom = max(geom.geoms, key=lambda g: g.area)
        return Polygon(np.asarray(geom.exterior.coords))


def _signed_area2(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True)
class OrientedBox:
    pose: Pose2
    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("box dimensions must be positive")

    def corners(self) -> np.ndarray:
        """Corner coordinates, counterclockwise starting front-left."""
        c, s = math.cos(self.pose.heading), math.sin(self.pose.heading)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.pose.x, self.pose.y])

    def as_polygon(self) -> Polygon:
        return Polygon(self.corners())


def angle_between_directions(u, v) -> float:
    """Angle between two direction vectors in degrees, in [0, 180]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        raise ValueError("degenerate direction")
    cosang = float(np.dot(u, v) / (nu * nv))
    cosang = min(1.0, max(-1.0, cosang))
    return math.degrees(math.acos(cosang))


def project_to_polyline(p: Point2, ref: Polyline) -> FrenetCoord:
    """Nearest-point projection of p onto ref.

    s is clamped to [0, total length]; l is the signed lateral distance
    (left of travel direction positive) to the projection point.
    """
    pt = p.as_array()
    a = ref.points[:-1]
    b = ref.points[1:]
    ab = b - a
    seg_len2 = np.sum(ab * ab, axis=1)
    t = np.clip(np.sum((pt - a) * ab, axis=1) / seg_len2, 0.0, 1.0)
    proj = a + ab * t[:, None]
    d2 = np.sum((proj - pt) ** 2, axis=1)
    i = int(np.argmin(d2))
    s = float(ref.cumlen[i] + t[i] * math.sqrt(seg_len2[i]))
    # Sign of lateral offset from the cross product with segment direction.
    d = ab[i] / math.sqrt(seg_len2[i])
    rel = pt - proj[i]
    l = float(d[0] * rel[1] - d[1] * rel[0])
    return FrenetCoord(s=s, l=l)


def points_to_polyline_distance(pts: np.ndarray, ref: Polyline) -> np.ndarray:
    """Unsigned distance from each point in pts (m, 2) to ref."""
    d2, _, _ = _project_points(np.asarray(pts, dtype=float), ref)
    return np.sqrt(d2)


def project_points_to_polyline_s(pts: np.ndarray, ref: Polyline) -> np.ndarray:
    """Arc-length coordinate of the nearest point on ref for each point."""
    pts = np.asarray(pts, dtype=float)
    _, i, t = _project_points(pts, ref)
    seg_len = np.linalg.norm(ref.points[1:] - ref.points[:-1], axis=1)
    rows = np.arange(len(pts))
    return ref.cumlen[i] + t[rows, i] * seg_len[i]


def _project_points(pts: np.ndarray, ref: Polyline):
    """Shared projection kernel: squared distance, best segment, clamp params."""
    a = ref.points[:-1]
    b = ref.points[1:]
    ab = b - a
    seg_len2 = np.maximum(np.sum(ab * ab, axis=1), 1e-18)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.sum(rel * ab[None, :, :], axis=2) / seg_len2, 0.0, 1.0)
    proj = a[None, :, :] + ab[None, :, :] * t[:, :, None]
    d2 = np.sum((proj - pts[:, None, :]) ** 2, axis=2)
    i = np.argmin(d2, axis=1)
    rows = np.arange(len(pts))
    return d2[rows, i], i, t


def inflate_polygon(poly: Polygon, r: float) -> Polygon:
    """Outward offset by r (Minkowski sum with a disc).

    Arcs are discretized at 8 points per quarter circle, keeping the
    Hausdorff error under 2 cm for the radii this project uses.
    """
    if r < 0:
        raise ValueError("inflation radius must be >= 0")
    if r == 0.0:
        return poly
    grown = poly.as_shapely().buffer(r, quad_segs=8)
    return Polygon.from_shapely(grown)


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis overlap test for two oriented boxes (closed sets)."""
    ca = a.corners()
    cb = b.corners()
    for box in (a, b):
        h = box.pose.heading
        for ax in ((math.cos(h), math.sin(h)), (-math.sin(h), math.cos(h))):
            axis = np.array(ax)
            pa = ca @ axis
            pb = cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def polyline_box_sweep(path: Polyline, length: float, width: float,
                       step: float = 0.25) -> Polygon:
    """Union of footprints placed along the path, as the outer boundary.

    A footprint of the given dims is dropped at every sampled pose
    (spacing <= step); the union's exterior ring is returned. Results are
    memoized on the polyline, since planner stages sweep the same path.
    """
    key = (round(length, 9), round(width, 9), round(step, 9))
    cache = getattr(path, "_sweep_cache", None)
    if cache is not None and key in cache:
        return cache[key]
    n = max(2, int(math.ceil(path.length / step)) + 1)
    ss = np.linspace(0.0, path.length, n)
    cx = np.interp(ss, path.cumlen, path.points[:, 0])
    cy = np.interp(ss, path.cumlen, path.points[:, 1])
    idx = np.clip(np.searchsorted(path.cumlen, ss, side="right") - 1,
                  0, len(path.points) - 2)
    seg = path.points[idx + 1] - path.points[idx]
    heads = np.arctan2(seg[:, 1], seg[:, 0])
    c, s = np.cos(heads), np.sin(heads)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    corners = np.empty((n, 4, 2))
    corners[..., 0] = cx[:, None] + np.outer(c, local[:, 0]) - np.outer(s, local[:, 1])
    corners[..., 1] = cy[:, None] + np.outer(s, local[:, 0]) + np.outer(c, local[:, 1])
    merged = shapely.union_all(shapely.polygons(corners))
    result = Polygon.from_shapely(merged)
    if cache is None:
        cache = {}
        try:
            path._sweep_cache = cache
        except AttributeError:
            return result
    cache[key] = result
    return result


def sweep_poses(poses, length: float, width: float) -> Polygon:
    """Union of footprints at explicit poses (zero-length-path variant)."""
    boxes = [OrientedBox(p, length, width).as_polygon().as_shapely() for p in poses]
    merged = shapely.ops.unary_union(boxes)
    return Polygon.from_shapely(merged)
