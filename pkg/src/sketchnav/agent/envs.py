"""Episodic navigation environment for training and evaluation rollouts.

Each reset rebuilds the room: fixed furniture plus randomized clutter
(squares + wall segments), optional virtual constraints dropped near the
start-goal corridor, optional crowd. Start/goal pairs are guaranteed
mutually reachable on an occupancy grid before the episode begins.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..constraints import ConstraintPolygon, ConstraintSet, Source
from ..crowd import DiscAgent, Pedestrian, step_crowd
from ..geometry import Point
from ..world import (
    DEFAULT_LIMITS,
    DEFAULT_SCAN,
    DT,
    ROBOT_RADIUS,
    ContactKind,
    Obstacle,
    PedestrianDisc,
    Pose,
    RobotState,
    World,
    classify_contact,
    constraint_edges,
    merge_scan,
    raycast_scan,
    step_dynamics,
)
from .observations import build_observation
from .rewards import RewardEvent, reward

PLACEMENT_RETRIES = 20
# Extra margin beyond robot radius for the feasibility grid. 0.3 keeps every
# generated start-goal pair connected by a corridor at least ~2x robot width,
# which filters out thread-the-needle worlds a reactive policy cannot solve.
START_GOAL_CLEARANCE = 0.3


@dataclass(frozen=True)
class EnvConfig:
    bounds: tuple[float, float] = (10.0, 10.0)
    base_obstacles: tuple = ()            # fixed furniture: (id, vertices) pairs
    n_squares: int = 2
    square_side: tuple[float, float] = (0.5, 1.0)
    n_segments: int = 4
    segment_len: tuple[float, float] = (1.0, 3.0)
    n_pedestrians: int = 0
    constraint_prob: float = 0.0          # chance an episode gets virtual geometry
    timeout: int = 400
    min_start_goal: float = 3.0
    goal_radius: float = 0.5
    grid_res: float = 0.25
    scan_includes_constraints: bool = True   # False = constraint-blind ablation
    stop_contacts: tuple[str, ...] = (
        ContactKind.PHYSICAL,
        ContactKind.VIRTUAL,
        ContactKind.SAFETY_ZONE,
    )


class NavEnv:
    def __init__(self, config: EnvConfig = EnvConfig(), seed: int = 0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.world: Optional[World] = None
        self.constraints = ConstraintSet()
        self.pedestrians: list[Pedestrian] = []
        self.state: Optional[RobotState] = None
        self.goal: Point = (0.0, 0.0)
        self.tick = 0
        self._prev_obs: Optional[np.ndarray] = None
        self._prev_dist = 0.0
        self.episode_skips = 0

    # --- world assembly -------------------------------------------------------

    def _random_square(self, rng) -> list[Point]:
        w, h = self.config.bounds
        side = rng.uniform(*self.config.square_side)
        margin = side / math.sqrt(2.0) + 0.2
        cx = rng.uniform(margin, w - margin)
        cy = rng.uniform(margin, h - margin)
        ang = rng.uniform(0.0, math.pi / 2.0)
        half = side / 2.0
        pts = []
        for dx, dy in ((-half, -half), (half, -half), (half, half), (-half, half)):
            pts.append((
                cx + dx * math.cos(ang) - dy * math.sin(ang),
                cy + dx * math.sin(ang) + dy * math.cos(ang),
            ))
        return pts

    def _random_segment(self, rng) -> tuple[float, float, float, float]:
        w, h = self.config.bounds
        for _ in range(50):
            length = rng.uniform(*self.config.segment_len)
            ang = rng.uniform(0.0, math.pi)
            cx, cy = rng.uniform(0.3, w - 0.3), rng.uniform(0.3, h - 0.3)
            dx, dy = math.cos(ang) * length / 2, math.sin(ang) * length / 2
            a, b = (cx - dx, cy - dy), (cx + dx, cy + dy)
            if all(0.05 < x < w - 0.05 and 0.05 < y < h - 0.05 for x, y in (a, b)):
                return (a[0], a[1], b[0], b[1])
        return (0.3, 0.3, 0.3 + self.config.segment_len[0], 0.3)

    def _build_world(self, rng) -> World:
        obstacles = list(self.config.base_obstacles)
        for i in range(self.config.n_squares):
            obstacles.append((f"square-{i}", self._random_square(rng)))
        segments = [self._random_segment(rng) for _ in range(self.config.n_segments)]
        return World(
            bounds=self.config.bounds,
            obstacles=tuple(Obstacle.make(oid, pts) for oid, pts in obstacles),
            segments=tuple(segments),
        )

    # --- occupancy grid + reachability ----------------------------------------

    def _free_grid(self, world: World, constraints: ConstraintSet) -> tuple[np.ndarray, float]:
        res = self.config.grid_res
        w, h = self.config.bounds
        nx, ny = int(round(w / res)), int(round(h / res))
        xs = (np.arange(nx) + 0.5) * res
        ys = (np.arange(ny) + 0.5) * res
        cx, cy = np.meshgrid(xs, ys, indexing="ij")
        centers = np.stack([cx.ravel(), cy.ravel()], axis=1)

        edges = world.edges
        cons_edges = constraint_edges(constraints)
        if cons_edges.shape[0]:
            edges = np.vstack([edges, cons_edges])
        d = _dist_points_segments(centers, edges)
        clearance = ROBOT_RADIUS + START_GOAL_CLEARANCE
        free = d.min(axis=1) > clearance
        inb = (
            (centers[:, 0] > clearance) & (centers[:, 0] < w - clearance)
            & (centers[:, 1] > clearance) & (centers[:, 1] < h - clearance)
        )
        free &= inb
        # interiors: convex parts of every blocking polygon
        parts = [p for ob in world.obstacles for p in ob.parts]
        parts += [p for cp in constraints.all_polygons() for p in cp.parts]
        for part in parts:
            free &= ~_inside_convex(centers, part)
        return free.reshape(nx, ny), res

    def _reachable(self, free: np.ndarray, a: tuple[int, int], b: tuple[int, int]) -> bool:
        if not (free[a] and free[b]):
            return False
        nx, ny = free.shape
        seen = np.zeros_like(free)
        dq = deque([a])
        seen[a] = True
        while dq:
            x, y = dq.popleft()
            if (x, y) == b:
                return True
            for mx, my in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)):
                if 0 <= mx < nx and 0 <= my < ny and free[mx, my] and not seen[mx, my]:
                    seen[mx, my] = True
                    dq.append((mx, my))
        return False

    def _sample_start_goal(
        self, rng, free: np.ndarray, res: float
    ) -> Optional[tuple[Point, Point]]:
        idx = np.argwhere(free)
        if idx.shape[0] < 2:
            return None
        for _ in range(PLACEMENT_RETRIES):
            a = tuple(idx[rng.integers(idx.shape[0])])
            b = tuple(idx[rng.integers(idx.shape[0])])
            pa = ((a[0] + 0.5) * res, (a[1] + 0.5) * res)
            pb = ((b[0] + 0.5) * res, (b[1] + 0.5) * res)
            if math.dist(pa, pb) < self.config.min_start_goal:
                continue
            if self._reachable(free, a, b):
                return pa, pb
        return None

    # --- constraint injection ---------------------------------------------------

    def _corridor_rect(self, rng, start: Point, goal: Point, half_lo: float, half_hi: float) -> list[Point]:
        u = rng.uniform(0.35, 0.65)
        cx = start[0] + u * (goal[0] - start[0])
        cy = start[1] + u * (goal[1] - start[1])
        d = math.dist(start, goal)
        nxv = -(goal[1] - start[1]) / d
        nyv = (goal[0] - start[0]) / d
        off = rng.normal(0.0, 0.35)
        off = max(-0.9, min(0.9, off))
        cx += nxv * off
        cy += nyv * off
        w, h = self.config.bounds
        hx = rng.uniform(half_lo, half_hi)
        hy = rng.uniform(half_lo, half_hi)
        cx = min(max(cx, hx + 0.1), w - hx - 0.1)
        cy = min(max(cy, hy + 0.1), h - hy - 0.1)
        return [(cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy)]

    def _place_constraints(
        self, rng, world: World, start: Point, goal: Point
    ) -> Optional[ConstraintSet]:
        """Drop one virtual obstacle and one keep-out zone near the corridor,
        keeping the pair (start, goal) reachable and clear of the geometry."""
        for _ in range(PLACEMENT_RETRIES):
            virtual = ConstraintPolygon.make(
                "env-virtual-0", self._corridor_rect(rng, start, goal, 0.25, 0.5),
                Source.SKETCH_INPUT,
            )
            zone = ConstraintPolygon.make(
                "env-zone-0", self._corridor_rect(rng, start, goal, 0.3, 0.6),
                Source.SKETCH_INPUT,
            )
            cset = ConstraintSet(virtual_obstacles=[virtual], keep_out_zones=[zone])
            if not self._spawn_clear(cset, start) or not self._spawn_clear(cset, goal):
                continue
            free, res = self._free_grid(world, cset)
            a = (int(start[0] / res), int(start[1] / res))
            b = (int(goal[0] / res), int(goal[1] / res))
            if self._reachable(free, a, b):
                return cset
        return None

    def _spawn_clear(self, cset: ConstraintSet, p: Point) -> bool:
        margin = ROBOT_RADIUS + self.config.goal_radius
        edges = constraint_edges(cset)
        d = _dist_points_segments(np.array([p]), edges).min()
        if d < margin:
            return False
        pt = np.array([p])
        for cp in cset.all_polygons():
            for part in cp.parts:
                if _inside_convex(pt, part)[0]:
                    return False
        return True

    # --- pedestrians -------------------------------------------------------------

    def _spawn_pedestrians(self, rng, free: np.ndarray, res: float) -> list[Pedestrian]:
        peds = []
        idx = np.argwhere(free)
        for i in range(self.config.n_pedestrians):
            cells = idx[rng.integers(idx.shape[0], size=4)]
            pts = [((c[0] + 0.5) * res, (c[1] + 0.5) * res) for c in cells]
            peds.append(
                Pedestrian(
                    id=f"ped-{i}",
                    position=pts[0],
                    v0=float(rng.uniform(0.8, 1.2)),
                    waypoints=tuple(pts[1:]),
                )
            )
        return peds

    # --- gym-style interface -------------------------------------------------------

    def reset(self) -> np.ndarray:
        rng = self.rng
        for _ in range(PLACEMENT_RETRIES):
            world = self._build_world(rng)
            free, res = self._free_grid(world, ConstraintSet())
            pair = self._sample_start_goal(rng, free, res)
            if pair is None:
                self.episode_skips += 1
                continue
            start, goal = pair
            cset = ConstraintSet()
            if self.config.constraint_prob > 0 and rng.random() < self.config.constraint_prob:
                placed = self._place_constraints(rng, world, start, goal)
                if placed is not None:
                    cset = placed
            self.world = world
            self.constraints = cset
            self.goal = goal
            self.pedestrians = self._spawn_pedestrians(rng, free, res)
            theta = rng.uniform(-math.pi, math.pi)
            self.state = RobotState(pose=Pose(start[0], start[1], theta), v=0.0, w=0.0)
            self.tick = 0
            self._prev_dist = math.dist(start, goal)
            obs = self._observe()
            self._prev_obs = obs
            return obs
        raise RuntimeError("could not build a feasible episode")

    def _observe(self) -> np.ndarray:
        physical = raycast_scan(self.world, self.state.pose, DEFAULT_SCAN)
        if self.config.scan_includes_constraints and not self.constraints.is_empty():
            scan = merge_scan(physical, self.constraints, self.state.pose)
        else:
            scan = physical
        return build_observation(scan, self.goal, self.state, DEFAULT_LIMITS)

    def step(self, action: np.ndarray):
        self.tick += 1
        self.state = step_dynamics(self.state, (float(action[0]), float(action[1])))
        if self.pedestrians:
            robot_disc = DiscAgent(
                position=self.state.pose.xy(),
                velocity=(
                    self.state.v * math.cos(self.state.pose.theta),
                    self.state.v * math.sin(self.state.pose.theta),
                ),
                radius=self.state.radius,
            )
            self.pedestrians = step_crowd(self.pedestrians, self.world, DT, robot=robot_disc)

        contact = classify_contact(
            self.state, self.world, self.constraints, pedestrians=self._ped_discs()
        )
        xy = self.state.pose.xy()
        dist = math.dist(xy, self.goal)
        reached = dist <= self.config.goal_radius
        info = {"contact": contact.kind, "dist": dist, "tick": self.tick}

        if contact.any and contact.kind in self.config.stop_contacts:
            r = reward(self._prev_dist, dist, contact)
            info["outcome"] = contact.kind
            self._prev_dist = dist
            return self._prev_obs, r, True, info
        if reached:
            r = reward(self._prev_dist, dist, RewardEvent.REACHED)
            info["outcome"] = "Success"
            self._prev_dist = dist
            obs = self._observe()
            self._prev_obs = obs
            return obs, r, True, info

        if contact.any:
            r = reward(self._prev_dist, dist, contact)  # non-stopping incident
        else:
            r = reward(self._prev_dist, dist, RewardEvent.STEP)
        done = self.tick >= self.config.timeout
        if done:
            info["outcome"] = "Timeout"
        self._prev_dist = dist
        if contact.kind == ContactKind.PHYSICAL:
            obs = self._prev_obs  # wedged in geometry: scan undefined
        else:
            obs = self._observe()
            self._prev_obs = obs
        return obs, r, done, info

    def _ped_discs(self):
        return tuple(
            PedestrianDisc(id=p.id, position=p.position, radius=p.radius)
            for p in self.pedestrians
        )


def _dist_points_segments(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """(K,2) points x (M,4) segments -> (K,M) distances."""
    if segments.shape[0] == 0:
        return np.full((points.shape[0], 1), np.inf)
    a = segments[:, :2][None, :, :]
    b = segments[:, 2:][None, :, :]
    p = points[:, None, :]
    ab = b - a
    denom = (ab * ab).sum(-1)
    denom = np.where(denom < 1e-18, 1.0, denom)
    t = ((p - a) * ab).sum(-1) / denom
    t = np.clip(t, 0.0, 1.0)
    q = a + t[..., None] * ab
    return np.linalg.norm(p - q, axis=-1)


def _inside_convex(points: np.ndarray, part: Sequence[Point]) -> np.ndarray:
    """Vectorized membership in one CCW convex polygon (boundary counts in)."""
    inside = np.ones(points.shape[0], dtype=bool)
    n = len(part)
    for i in range(n):
        ax, ay = part[i]
        bx, by = part[(i + 1) % n]
        cross = (bx - ax) * (points[:, 1] - ay) - (by - ay) * (points[:, 0] - ax)
        inside &= cross >= -1e-12
    return inside
