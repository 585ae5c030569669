import math

import numpy as np
import pytest

from sketchnav import geometry as g


def test_norm_angle_range_and_periodicity():
    rng = np.random.default_rng(0)
    for theta in rng.uniform(-50, 50, size=500):
        t = g.norm_angle(float(theta))
        assert -math.pi < t <= math.pi
        # same direction as the input angle
        assert math.isclose(math.cos(t), math.cos(theta), abs_tol=1e-12)
        assert math.isclose(math.sin(t), math.sin(theta), abs_tol=1e-12)
    assert g.norm_angle(math.pi) == math.pi
    assert g.norm_angle(-math.pi) == math.pi
    assert g.norm_angle(0.0) == 0.0


def test_polygon_area_signs():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    assert g.polygon_area(sq) == 4.0
    assert g.polygon_area(list(reversed(sq))) == -4.0
    assert g.polygon_area([(0, 0), (1, 0), (0, 1)]) == 0.5


def test_ensure_ccw_flips_clockwise_input():
    cw = [(0, 0), (0, 1), (1, 1), (1, 0)]
    out = g.ensure_ccw(cw)
    assert g.polygon_area(out) > 0
    assert set(out) == set(cw)
    ccw = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert g.ensure_ccw(ccw) == ccw


def test_is_convex():
    assert g.is_convex([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert g.is_convex([(0, 0), (2, 0), (1, 2)])
    lshape = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    assert not g.is_convex(lshape)


def test_convex_decompose_preserves_area():
    lshape = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    parts = g.convex_decompose(lshape)
    assert len(parts) >= 2
    total = sum(g.polygon_area(p) for p in parts)
    assert math.isclose(total, g.polygon_area(g.ensure_ccw(lshape)), rel_tol=1e-12)
    for p in parts:
        assert g.is_convex(p)
        assert g.polygon_area(p) > 0

    convex = [(0, 0), (3, 0), (3, 2), (0, 2)]
    assert g.convex_decompose(convex) == [convex]

    with pytest.raises(g.PolygonError):
        g.convex_decompose([(0, 0), (1, 1)])


def test_convex_decompose_random_stars():
    # star-shaped (radial) polygons exercise many reflex corners
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(5, 12))
        angles = np.sort(rng.uniform(0, 2 * math.pi, size=n))
        if np.min(np.diff(angles)) < 1e-3:
            continue
        radii = rng.uniform(0.5, 3.0, size=n)
        poly = [(float(r * math.cos(a)), float(r * math.sin(a)))
                for r, a in zip(radii, angles)]
        parts = g.convex_decompose(poly)
        total = sum(g.polygon_area(p) for p in parts)
        assert math.isclose(total, abs(g.polygon_area(poly)), rel_tol=1e-9)


def test_point_in_polygon_vs_halfplane_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        # random CCW convex polygon via hull of a point cloud
        cloud = rng.uniform(-3, 3, size=(12, 2))
        hull = g.convex_hull([tuple(p) for p in cloud])
        if len(hull) < 3:
            continue
        for _ in range(20):
            pt = (float(rng.uniform(-4, 4)), float(rng.uniform(-4, 4)))
            # oracle: inside a CCW convex polygon iff left of every edge
            crosses = []
            n = len(hull)
            for i in range(n):
                ax, ay = hull[i]
                bx, by = hull[(i + 1) % n]
                crosses.append((bx - ax) * (pt[1] - ay) - (by - ay) * (pt[0] - ax))
            strict_in = all(c > 1e-9 for c in crosses)
            strict_out = any(c < -1e-9 for c in crosses)
            got = g.point_in_polygon(pt, hull)
            if strict_in:
                assert got
            elif strict_out:
                assert not got
            # boundary points may go either way by contract


def test_dist_point_segment_against_dense_sampling():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = (float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)))
        b = (float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)))
        p = (float(rng.uniform(-6, 6)), float(rng.uniform(-6, 6)))
        ts = np.linspace(0.0, 1.0, 2001)
        xs = a[0] + ts * (b[0] - a[0])
        ys = a[1] + ts * (b[1] - a[1])
        brute = float(np.min(np.hypot(p[0] - xs, p[1] - ys)))
        got = g.dist_point_segment(p, a, b)
        assert got <= brute + 1e-12
        assert got >= brute - 2e-3  # sampling resolution

        q = g.nearest_point_on_segment(p, a, b)
        assert math.isclose(math.hypot(p[0] - q[0], p[1] - q[1]), got, rel_tol=1e-12)


def test_nearest_point_degenerate_segment():
    assert g.nearest_point_on_segment((3, 4), (1, 1), (1, 1)) == (1, 1)
    assert g.dist_point_segment((4, 5), (1, 1), (1, 1)) == 5.0


def test_nearest_point_on_polygon_is_on_boundary():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    q = g.nearest_point_on_polygon((1, 1), sq)  # interior point
    assert min(abs(q[0]), abs(q[0] - 2), abs(q[1]), abs(q[1] - 2)) < 1e-12
    q = g.nearest_point_on_polygon((3, 1), sq)
    assert q == (2, 1)


def test_circle_polygon_and_segment_intersection():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    assert g.circle_intersects_polygon((1, 1), 0.1, sq)      # center inside
    assert g.circle_intersects_polygon((2.4, 1), 0.5, sq)    # rim overlap
    assert not g.circle_intersects_polygon((3, 1), 0.5, sq)
    assert g.circle_intersects_segment((0, 0.4), 0.5, (-1, 0), (1, 0))
    assert not g.circle_intersects_segment((0, 0.6), 0.5, (-1, 0), (1, 0))


def _ray_segment_hit(origin, angle, seg):
    """Scalar parametric ray/segment intersection, the slow obvious way."""
    ox, oy = origin
    dx, dy = math.cos(angle), math.sin(angle)
    x1, y1, x2, y2 = seg
    ex, ey = x2 - x1, y2 - y1
    denom = dx * ey - dy * ex
    if abs(denom) <= 1e-12:
        return None
    t = ((x1 - ox) * ey - (y1 - oy) * ex) / denom
    s = ((x1 - ox) * dy - (y1 - oy) * dx) / denom
    if t > 1e-12 and -1e-12 <= s <= 1.0 + 1e-12:
        return t
    return None


def test_raycast_segments_against_scalar_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        m = int(rng.integers(1, 8))
        segs = rng.uniform(-5, 5, size=(m, 4))
        origin = (float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)))
        angles = rng.uniform(-math.pi, math.pi, size=16)
        max_range = 8.0
        got = g.raycast_segments(origin, angles, segs, max_range)
        for k, ang in enumerate(angles):
            hits = [_ray_segment_hit(origin, float(ang), s) for s in segs]
            hits = [h for h in hits if h is not None]
            want = min(min(hits), max_range) if hits else max_range
            assert abs(got[k] - want) < 1e-9, f"beam {k}: {got[k]} vs {want}"


def test_raycast_miss_reports_max_range_exactly():
    segs = g.segments_array([(10, 10, 11, 11)])
    out = g.raycast_segments((0, 0), np.array([math.pi]), segs, 5.0)
    assert out[0] == 5.0
    out = g.raycast_segments((0, 0), np.array([0.0]), np.zeros((0, 4)), 5.0)
    assert out[0] == 5.0


def test_segments_array_shapes():
    assert g.segments_array([]).shape == (0, 4)
    arr = g.segments_array([(1, 2, 3, 4), (5, 6, 7, 8)])
    assert arr.shape == (2, 4)
    assert arr.dtype == np.float64


def test_polygon_and_rect_segments():
    tri = [(0, 0), (1, 0), (0, 1)]
    segs = g.polygon_segments(tri)
    assert len(segs) == 3
    assert segs[-1] == (0, 1, 0, 0)  # closes the loop
    rect = g.rect_segments(0, 0, 2, 1)
    assert len(rect) == 4


def test_resample_polyline():
    pts = [(0.0, 0.0), (10.0, 0.0)]
    out = g.resample_polyline(pts, 5)
    assert out == pts  # already short enough

    dense = [(float(x), 0.0) for x in range(21)]
    out = g.resample_polyline(dense, 5)
    assert len(out) == 5
    assert out[0] == dense[0]
    assert out[-1] == dense[-1]
    xs = [p[0] for p in out]
    gaps = [b - a for a, b in zip(xs, xs[1:])]
    assert all(math.isclose(gap, gaps[0], rel_tol=1e-9) for gap in gaps)

    # zero-length polyline collapses to its first point
    assert g.resample_polyline([(1.0, 1.0)] * 9, 4) == [(1.0, 1.0)]


def test_convex_hull_contains_all_points():
    rng = np.random.default_rng(4)
    for _ in range(50):
        pts = [tuple(p) for p in rng.uniform(-3, 3, size=(int(rng.integers(3, 30)), 2))]
        hull = g.convex_hull(pts)
        if len(hull) < 3:
            continue
        assert g.polygon_area(hull) > 0  # CCW
        n = len(hull)
        for p in pts:
            for i in range(n):
                ax, ay = hull[i]
                bx, by = hull[(i + 1) % n]
                cross = (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax)
                assert cross >= -1e-9


def test_inflate_polyline_clearance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        pts = [tuple(p) for p in rng.uniform(-3, 3, size=(n, 2))]
        margin = float(rng.uniform(0.1, 1.0))
        hull = g.inflate_polyline(pts, margin)
        # every polyline vertex keeps almost the full margin to the hull rim
        min_clear = margin * math.cos(math.pi / 32)
        for p in pts:
            assert g.point_in_polygon(p, hull)
            rim = g.nearest_point_on_polygon(p, hull)
            assert math.hypot(p[0] - rim[0], p[1] - rim[1]) >= min_clear - 1e-9

    with pytest.raises(ValueError):
        g.inflate_polyline([(0, 0), (1, 1)], 0.0)


def test_path_length():
    assert g.path_length([(0, 0), (3, 4)]) == 5.0
    assert g.path_length([(0, 0)]) == 0.0
    assert g.path_length([]) == 0.0
    assert math.isclose(g.path_length([(0, 0), (1, 0), (1, 1)]), 2.0)
