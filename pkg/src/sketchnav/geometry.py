"""2D geometry kernel: angles, polygons, ray casting, distances.

All coordinates are meters in a y-up world frame. Polygons are lists of
(x, y) vertices without a repeated closing vertex.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, float]

TWO_PI = 2.0 * math.pi


def norm_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    t = math.fmod(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    elif t > math.pi:
        t -= TWO_PI
    return t


def polygon_area(vertices: Sequence[Point]) -> float:
    """Signed area (positive for counter-clockwise winding)."""
    a = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        a += x1 * y2 - x2 * y1
    return 0.5 * a


def ensure_ccw(vertices: Sequence[Point]) -> list[Point]:
    verts = [(float(x), float(y)) for x, y in vertices]
    if polygon_area(verts) < 0.0:
        verts.reverse()
    return verts


def is_convex(vertices: Sequence[Point]) -> bool:
    """True if the polygon (assumed simple) is convex."""
    n = len(vertices)
    if n < 4:
        return True
    sign = 0.0
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        cx, cy = vertices[(i + 2) % n]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if abs(cross) < 1e-12:
            continue
        if sign == 0.0:
            sign = cross
        elif sign * cross < 0.0:
            return False
    return True


class PolygonError(ValueError):
    """Raised for degenerate or self-intersecting polygon input."""


def convex_decompose(vertices: Sequence[Point]) -> list[list[Point]]:
    """Split a simple polygon into convex parts (ear-clipping triangles).

    Convex input is returned unchanged as a single part. Raycasts only need
    the boundary edges, but collision tests rely on convex parts.
    """
    verts = ensure_ccw(vertices)
    if len(verts) < 3:
        raise PolygonError(f"polygon needs >= 3 vertices, got {len(verts)}")
    if is_convex(verts):
        return [verts]
    return _ear_clip(verts)


def _ear_clip(verts: list[Point]) -> list[list[Point]]:
    idx = list(range(len(verts)))
    triangles: list[list[Point]] = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise PolygonError("ear clipping failed; polygon may self-intersect")
        found = False
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = verts[i0], verts[i1], verts[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-12:
                continue  # reflex or collinear corner
            if any(
                _point_in_triangle(verts[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            triangles.append([a, b, c])
            idx.pop(k)
            found = True
            break
        if not found:
            raise PolygonError("ear clipping failed; polygon may self-intersect")
    triangles.append([verts[idx[0]], verts[idx[1]], verts[idx[2]]])
    return triangles


def _point_in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool:
    d1 = (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
    d2 = (p[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (p[1] - c[1])
    d3 = (p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])
    has_neg = d1 < 0 or d2 < 0 or d3 < 0
    has_pos = d1 > 0 or d2 > 0 or d3 > 0
    return not (has_neg and has_pos)


def point_in_polygon(pt: Point, vertices: Sequence[Point]) -> bool:
    """Crossing-number test; boundary points may go either way."""
    x, y = pt
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def dist_point_segment(p: Point, a: Point, b: Point) -> float:
    q = nearest_point_on_segment(p, a, b)
    return math.hypot(p[0] - q[0], p[1] - q[1])


def nearest_point_on_segment(p: Point, a: Point, b: Point) -> Point:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom <= 0.0:
        return (ax, ay)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / denom
    t = min(1.0, max(0.0, t))
    return (ax + t * dx, ay + t * dy)


def nearest_point_on_polygon(p: Point, vertices: Sequence[Point]) -> Point:
    """Nearest point on the polygon boundary (not interior)."""
    best: Point = vertices[0]
    best_d = float("inf")
    n = len(vertices)
    for i in range(n):
        q = nearest_point_on_segment(p, vertices[i], vertices[(i + 1) % n])
        d = math.hypot(p[0] - q[0], p[1] - q[1])
        if d < best_d:
            best_d = d
            best = q
    return best


def circle_intersects_polygon(center: Point, radius: float, vertices: Sequence[Point]) -> bool:
    """Disc-polygon overlap for a simple polygon."""
    if point_in_polygon(center, vertices):
        return True
    n = len(vertices)
    for i in range(n):
        if dist_point_segment(center, vertices[i], vertices[(i + 1) % n]) <= radius:
            return True
    return False


def circle_intersects_segment(center: Point, radius: float, a: Point, b: Point) -> bool:
    return dist_point_segment(center, a, b) <= radius


def segments_array(segments: Iterable[tuple[float, float, float, float]]) -> np.ndarray:
    """Pack segments into an (M, 4) float64 array [x1, y1, x2, y2]."""
    arr = np.asarray(list(segments), dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return arr.reshape(-1, 4)


def polygon_segments(vertices: Sequence[Point]) -> list[tuple[float, float, float, float]]:
    n = len(vertices)
    return [
        (vertices[i][0], vertices[i][1], vertices[(i + 1) % n][0], vertices[(i + 1) % n][1])
        for i in range(n)
    ]


def rect_segments(x0: float, y0: float, x1: float, y1: float) -> list[tuple[float, float, float, float]]:
    return [
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    ]


def raycast_segments(
    origin: Point,
    angles: np.ndarray,
    segments: np.ndarray,
    max_range: float,
) -> np.ndarray:
    """Distance along each ray to the nearest segment hit, clamped to max_range.

    Vectorized over (n_rays, n_segments). Rays that hit nothing report
    max_range exactly.
    """
    n = angles.shape[0]
    out = np.full(n, max_range, dtype=np.float64)
    if segments.shape[0] == 0:
        return out
    ox, oy = origin
    dx = np.cos(angles)[:, None]  # (N, 1)
    dy = np.sin(angles)[:, None]
    ax = segments[None, :, 0]  # (1, M)
    ay = segments[None, :, 1]
    ex = (segments[:, 2] - segments[:, 0])[None, :]
    ey = (segments[:, 3] - segments[:, 1])[None, :]
    aox = ax - ox
    aoy = ay - oy
    denom = dx * ey - dy * ex  # (N, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (aox * ey - aoy * ex) / denom
        s = (aox * dy - aoy * dx) / denom
    valid = (np.abs(denom) > 1e-12) & (t > 1e-12) & (s >= -1e-12) & (s <= 1.0 + 1e-12)
    t = np.where(valid, t, np.inf)
    hits = t.min(axis=1)
    return np.minimum(hits, max_range)


def resample_polyline(points: Sequence[Point], max_points: int) -> list[Point]:
    """Uniform arclength resampling, keeping endpoints; no-op when short enough."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) <= max_points:
        return pts
    cum = [0.0]
    for i in range(1, len(pts)):
        cum.append(cum[-1] + math.hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]))
    total = cum[-1]
    if total <= 0.0:
        return pts[:1]
    out: list[Point] = []
    seg = 1
    for k in range(max_points):
        target = total * k / (max_points - 1)
        while seg < len(pts) - 1 and cum[seg] < target:
            seg += 1
        span = cum[seg] - cum[seg - 1]
        f = 0.0 if span <= 0.0 else (target - cum[seg - 1]) / span
        out.append(
            (
                pts[seg - 1][0] + f * (pts[seg][0] - pts[seg - 1][0]),
                pts[seg - 1][1] + f * (pts[seg][1] - pts[seg - 1][1]),
            )
        )
    return out


def convex_hull(points: Sequence[Point]) -> list[Point]:
    """Andrew monotone chain; returns CCW hull without repeated endpoint."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return list(pts)

    def cross(o: Point, a: Point, b: Point) -> float:
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def inflate_polyline(points: Sequence[Point], margin: float, samples: int = 32) -> list[Point]:
    """Convex-hull approximation of the polyline inflated by `margin`.

    Circles of radius `margin` are sampled around every vertex; the hull of
    all samples inscribes the true inflation within ~margin*(1-cos(pi/samples)),
    which stays under 1 cm for margins up to a few meters at samples=32.
    """
    if margin <= 0.0:
        raise ValueError(f"margin must be positive, got {margin}")
    cloud: list[Point] = []
    for x, y in points:
        for k in range(samples):
            a = TWO_PI * k / samples
            cloud.append((x + margin * math.cos(a), y + margin * math.sin(a)))
    return convex_hull(cloud)


def path_length(points: Sequence[Point]) -> float:
    total = 0.0
    for i in range(1, len(points)):
        total += math.hypot(points[i][0] - points[i - 1][0], points[i][1] - points[i - 1][1])
    return total
