"""Shared generators and independent oracles for the test suite.

The oracles here are deliberately written as plain scalar/numpy formula
evaluations, separate from the library's code paths, so agreement between
the two is evidence and not tautology.
"""
from __future__ import annotations

import math

import numpy as np

from sketchnav.constraints import ConstraintPolygon, ConstraintSet, Source
from sketchnav.crowd import DiscAgent, PedModel, Pedestrian
from sketchnav.geometry import norm_angle, point_in_polygon
from sketchnav.world import Obstacle, Pose, ScanConfig, World, raycast_scan


# --- random worlds and constraint sets ----------------------------------------


def rand_rect(rng, bounds, side=(0.4, 1.6)):
    w, h = bounds
    sx = float(rng.uniform(side[0], min(side[1], w - 0.2)))
    sy = float(rng.uniform(side[0], min(side[1], h - 0.2)))
    x0 = float(rng.uniform(0.05, w - sx - 0.05))
    y0 = float(rng.uniform(0.05, h - sy - 0.05))
    return [(x0, y0), (x0 + sx, y0), (x0 + sx, y0 + sy), (x0, y0 + sy)]


def rand_triangle(rng, bounds):
    w, h = bounds
    for _ in range(100):
        pts = [(float(rng.uniform(0.05, w - 0.05)), float(rng.uniform(0.05, h - 0.05)))
               for _ in range(3)]
        area = abs(
            (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
            - (pts[1][1] - pts[0][1]) * (pts[2][0] - pts[0][0])
        ) / 2.0
        if area > 0.05:
            return pts
    raise AssertionError("unreachable: triangle sampling failed")


def rand_world(rng) -> World:
    bounds = (float(rng.uniform(6.0, 12.0)), float(rng.uniform(6.0, 12.0)))
    obstacles = []
    for i in range(int(rng.integers(0, 3))):
        pts = rand_rect(rng, bounds) if rng.random() < 0.5 else rand_triangle(rng, bounds)
        obstacles.append(Obstacle.make(f"ob{i}", pts))
    segments = []
    for _ in range(int(rng.integers(0, 3))):
        x1 = float(rng.uniform(0.1, bounds[0] - 0.1))
        y1 = float(rng.uniform(0.1, bounds[1] - 0.1))
        ang = float(rng.uniform(0.0, 2.0 * math.pi))
        ln = float(rng.uniform(0.5, 3.0))
        x2 = min(max(x1 + ln * math.cos(ang), 0.0), bounds[0])
        y2 = min(max(y1 + ln * math.sin(ang), 0.0), bounds[1])
        segments.append((x1, y1, x2, y2))
    return World(bounds=bounds, obstacles=tuple(obstacles), segments=tuple(segments))


def rand_constraints(rng, world: World) -> ConstraintSet:
    """In-bounds virtual obstacles and zones (the physical-twin oracle needs
    the same polygons to be legal world obstacles)."""
    virtual, zones = [], []
    for i in range(int(rng.integers(1, 3))):
        pts = rand_rect(rng, world.bounds, side=(0.3, 1.2)) if rng.random() < 0.6 \
            else rand_triangle(rng, world.bounds)
        virtual.append(ConstraintPolygon.make(f"v{i}", pts, Source.SKETCH_INPUT))
    for i in range(int(rng.integers(0, 3))):
        pts = rand_rect(rng, world.bounds, side=(0.3, 1.2))
        zones.append(ConstraintPolygon.make(f"z{i}", pts, Source.PARSED_INSTRUCTION))
    return ConstraintSet(virtual_obstacles=virtual, keep_out_zones=zones)


def free_pose(rng, world: World, constraints: ConstraintSet) -> Pose:
    """Pose outside every physical and constraint polygon (oracle-legal)."""
    w, h = world.bounds
    for _ in range(500):
        x = float(rng.uniform(0.1, w - 0.1))
        y = float(rng.uniform(0.1, h - 0.1))
        if world.point_in_obstacle((x, y)) is not None:
            continue
        blocked = any(
            point_in_polygon((x, y), part)
            for poly in constraints.all_polygons()
            for part in poly.parts
        )
        if blocked:
            continue
        return Pose(x, y, float(rng.uniform(-math.pi, math.pi)))
    raise AssertionError("unreachable: free pose sampling failed")


def oracle_merged_scan(world: World, constraints: ConstraintSet, pose: Pose, cfg: ScanConfig):
    """Physically-augmented twin: constraints promoted to real obstacles."""
    extra = [(p.id, list(p.vertices)) for p in constraints.all_polygons()]
    return raycast_scan(world.with_extra_obstacles(extra), pose, cfg)


# --- crowd oracles --------------------------------------------------------------


def _closest_on_segment(p, a, b):
    ax, ay = a
    bx, by = b
    abx, aby = bx - ax, by - ay
    denom = abx * abx + aby * aby
    if denom <= 0.0:
        return (ax, ay)
    t = ((p[0] - ax) * abx + (p[1] - ay) * aby) / denom
    t = min(1.0, max(0.0, t))
    return (ax + t * abx, ay + t * aby)


def sfm_oracle(p: Pedestrian, others, world, params, f_max=50.0):
    """Direct formula evaluation of the social-force acceleration."""
    if p.model is PedModel.SCRIPTED or not p.waypoints or p.waypoint_index >= len(p.waypoints):
        ex, ey = 0.0, 0.0
    else:
        tx, ty = p.waypoints[p.waypoint_index]
        dx, dy = tx - p.position[0], ty - p.position[1]
        d = math.hypot(dx, dy)
        ex, ey = (dx / d, dy / d) if d >= 1e-12 else (0.0, 0.0)
    ax = (p.v0 * ex - p.velocity[0]) / params.tau
    ay = (p.v0 * ey - p.velocity[1]) / params.tau
    for o in others:
        dx = p.position[0] - o.position[0]
        dy = p.position[1] - o.position[1]
        d = math.hypot(dx, dy)
        if d < 1e-12:
            ax += f_max
            continue
        mag = min(params.A * math.exp((p.radius + o.radius - d) / params.B), f_max)
        ax += mag * dx / d
        ay += mag * dy / d
    if world is not None:
        for x1, y1, x2, y2 in world.edges:
            qx, qy = _closest_on_segment(p.position, (x1, y1), (x2, y2))
            dx, dy = p.position[0] - qx, p.position[1] - qy
            d = math.hypot(dx, dy)
            if d < 1e-12:
                ax += f_max
                continue
            mag = min(params.A * math.exp((p.radius - d) / params.B), f_max)
            ax += mag * dx / d
            ay += mag * dy / d
    return (ax, ay)


def rand_sfm_case(rng):
    """Pedestrian + neighbors + sparse world for one SFM oracle comparison."""
    world = rand_world(rng) if rng.random() < 0.7 else None
    bounds = world.bounds if world is not None else (10.0, 10.0)
    v0 = float(rng.uniform(0.5, 1.5))
    speed = float(rng.uniform(0.0, 1.3 * v0 * 0.99))
    ang = float(rng.uniform(0.0, 2.0 * math.pi))
    p = Pedestrian(
        id="p",
        position=(float(rng.uniform(0.2, bounds[0] - 0.2)),
                  float(rng.uniform(0.2, bounds[1] - 0.2))),
        velocity=(speed * math.cos(ang), speed * math.sin(ang)),
        v0=v0,
        radius=float(rng.uniform(0.2, 0.4)),
        waypoints=((float(rng.uniform(0.0, bounds[0])), float(rng.uniform(0.0, bounds[1]))),),
    )
    others = [
        DiscAgent(
            position=(float(rng.uniform(0.0, bounds[0])), float(rng.uniform(0.0, bounds[1]))),
            velocity=(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))),
            radius=float(rng.uniform(0.2, 0.4)),
        )
        for _ in range(int(rng.integers(0, 4)))
    ]
    return p, others, world


def feasible_orca(lines, c, eps=1e-12) -> bool:
    """Half-plane membership: c must sit on the permitted side of every line."""
    for ln in lines:
        cross = ln.direction[0] * (c[1] - ln.point[1]) - ln.direction[1] * (c[0] - ln.point[0])
        if cross < -eps:
            return False
    return True


def orca_brute_force(p: Pedestrian, lines, n_samples: int = 10_000):
    """Sampling search over the speed disc for the best velocity under `lines`.

    The optimum of this convex program sits at the preference, on a line, on
    the disc rim, or at an intersection of those, so the budget concentrates
    on boundary curves: the remaining error is the along-curve spacing, a few
    thousandths of a m/s. Returns (best, pref), best None when nothing
    sampled is feasible.
    """
    s = p.max_speed
    if p.waypoints:
        tx, ty = p.waypoints[min(p.waypoint_index, len(p.waypoints) - 1)]
        dx, dy = tx - p.position[0], ty - p.position[1]
        d = math.hypot(dx, dy)
        pref = (p.v0 * dx / d, p.v0 * dy / d) if d >= 1e-12 else (0.0, 0.0)
    else:
        pref = (0.0, 0.0)

    pts: list[tuple[float, float]] = [pref]
    per_curve = 1500
    # each constraint line clipped to the disc
    for ln in lines:
        px, py = ln.point
        ux, uy = ln.direction
        # |point + t*dir| = s  ->  t^2 + 2 t (p.u) + |p|^2 - s^2 = 0
        b = px * ux + py * uy
        c = px * px + py * py - s * s
        disc = b * b - c
        if disc < 0:
            continue
        t0, t1 = -b - math.sqrt(disc), -b + math.sqrt(disc)
        for t in np.linspace(t0, t1, per_curve):
            pts.append((px + ux * t, py + uy * t))
    # the disc rim
    for a in np.linspace(0.0, 2.0 * math.pi, per_curve, endpoint=False):
        pts.append((s * math.cos(a), s * math.sin(a)))
    # pairwise line intersections
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            d1, d2 = lines[i].direction, lines[j].direction
            den = d1[0] * d2[1] - d1[1] * d2[0]
            if abs(den) < 1e-12:
                continue
            rx = lines[j].point[0] - lines[i].point[0]
            ry = lines[j].point[1] - lines[i].point[1]
            t = (rx * d2[1] - ry * d2[0]) / den
            pts.append((lines[i].point[0] + d1[0] * t, lines[i].point[1] + d1[1] * t))
    # uniform sunflower fill for the interior
    n_fill = max(0, n_samples - len(pts))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    for k in range(n_fill):
        r = s * math.sqrt((k + 0.5) / n_fill)
        a = k * golden
        pts.append((r * math.cos(a), r * math.sin(a)))

    best = None
    best_obj = float("inf")
    for cx, cy in pts:
        if cx * cx + cy * cy > s * s + 1e-12:
            continue
        if not feasible_orca(lines, (cx, cy), eps=1e-9):
            continue
        obj = (cx - pref[0]) ** 2 + (cy - pref[1]) ** 2
        if obj < best_obj:
            best_obj = obj
            best = (float(cx), float(cy))
    return best, pref


def rand_orca_case(rng):
    """Non-overlapping pedestrian + 1..3 disc neighbors."""
    v0 = float(rng.uniform(0.6, 1.2))
    speed = float(rng.uniform(0.0, 1.3 * v0 * 0.99))
    ang = float(rng.uniform(0.0, 2.0 * math.pi))
    px, py = float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))
    p = Pedestrian(
        id="p",
        position=(px, py),
        velocity=(speed * math.cos(ang), speed * math.sin(ang)),
        v0=v0,
        radius=float(rng.uniform(0.2, 0.4)),
        waypoints=((px + float(rng.uniform(-5, 5)), py + float(rng.uniform(-5, 5))),),
        model=PedModel.ORCA,
    )
    others = []
    for _ in range(int(rng.integers(1, 4))):
        r = float(rng.uniform(0.2, 0.4))
        dist = float(rng.uniform(p.radius + r + 0.15, 4.5))
        a = float(rng.uniform(0.0, 2.0 * math.pi))
        others.append(
            DiscAgent(
                position=(px + dist * math.cos(a), py + dist * math.sin(a)),
                velocity=(float(rng.uniform(-1.2, 1.2)), float(rng.uniform(-1.2, 1.2))),
                radius=r,
            )
        )
    return p, others
