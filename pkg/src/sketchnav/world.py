"""Deterministic 2D world: geometry, robot kinematics, laser scans, contacts.

Everything here is pure over immutable snapshots; the service loop owns all
mutation. Virtual constraint geometry fused into a scan is indistinguishable
from physical geometry in the output.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .constraints import ConstraintSet
from .geometry import Point

# Defaults for an indoor platform; the source material fixes the action space
# (v, w) but not the limits.
DT = 0.1
ROBOT_RADIUS = 0.3
V_MIN = 0.0
V_MAX = 1.0
W_MAX = 1.0
PEDESTRIAN_RADIUS = 0.3


class DegeneratePoseError(ValueError):
    """Scan requested from inside an obstacle or outside the map."""


class ScanConfigMismatchError(ValueError):
    """Physical scan and merge request disagree on beam layout."""


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", geometry.norm_angle(self.theta))

    def xy(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    v: float = 0.0
    w: float = 0.0
    radius: float = ROBOT_RADIUS

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("robot radius must be positive")


@dataclass(frozen=True)
class MotionLimits:
    v_min: float = V_MIN
    v_max: float = V_MAX
    w_max: float = W_MAX


DEFAULT_LIMITS = MotionLimits()


@dataclass(frozen=True)
class ScanConfig:
    n_beams: int = 360
    angle_min: float = -math.pi
    angle_max: float = math.pi
    max_range: float = 6.0

    def angles(self) -> np.ndarray:
        # uniform over [angle_min, angle_max), matching a spinning 2D lidar
        step = (self.angle_max - self.angle_min) / self.n_beams
        return self.angle_min + step * np.arange(self.n_beams)


DEFAULT_SCAN = ScanConfig()


@dataclass(frozen=True)
class LaserScan:
    config: ScanConfig
    ranges: np.ndarray  # (n_beams,), in (0, max_range]

    def to_list(self) -> list[float]:
        return [float(r) for r in self.ranges]


class ContactKind:
    NONE = "None"
    PHYSICAL = "PhysicalCollision"
    VIRTUAL = "VirtualContact"       # alpha failure
    SAFETY_ZONE = "SafetyZoneEntry"  # beta failure


@dataclass(frozen=True)
class CollisionReport:
    kind: str = ContactKind.NONE
    contact_id: Optional[str] = None

    def __post_init__(self):
        if (self.kind == ContactKind.NONE) != (self.contact_id is None):
            raise ValueError("contact_id must be present exactly when kind != None")

    @property
    def any(self) -> bool:
        return self.kind != ContactKind.NONE


@dataclass(frozen=True)
class Obstacle:
    id: str
    vertices: tuple[Point, ...]
    parts: tuple[tuple[Point, ...], ...]

    @staticmethod
    def make(id: str, vertices: Sequence[Point]) -> "Obstacle":
        verts = geometry.ensure_ccw(vertices)
        parts = tuple(tuple(p) for p in geometry.convex_decompose(verts))
        return Obstacle(id=id, vertices=tuple(verts), parts=parts)


@dataclass(frozen=True)
class World:
    bounds: tuple[float, float]  # (width, height), origin at lower-left
    obstacles: tuple[Obstacle, ...] = ()
    segments: tuple[tuple[float, float, float, float], ...] = ()
    _edges: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        w, h = self.bounds
        if w <= 0 or h <= 0:
            raise ValueError("world bounds must be positive")
        for ob in self.obstacles:
            for x, y in ob.vertices:
                if not (0.0 <= x <= w and 0.0 <= y <= h):
                    raise ValueError(f"obstacle {ob.id} vertex ({x}, {y}) outside bounds")
        object.__setattr__(self, "_edges", self._build_edges())

    def _build_edges(self) -> np.ndarray:
        segs: list[tuple[float, float, float, float]] = []
        w, h = self.bounds
        segs.extend(geometry.rect_segments(0.0, 0.0, w, h))
        for ob in self.obstacles:
            for part in ob.parts:
                segs.extend(geometry.polygon_segments(part))
        segs.extend(self.segments)
        return geometry.segments_array(segs)

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    def with_extra_obstacles(self, polygons: Sequence[tuple[str, Sequence[Point]]]) -> "World":
        extra = tuple(Obstacle.make(pid, verts) for pid, verts in polygons)
        return World(bounds=self.bounds, obstacles=self.obstacles + extra, segments=self.segments)

    def inside_bounds(self, p: Point, margin: float = 0.0) -> bool:
        w, h = self.bounds
        return margin <= p[0] <= w - margin and margin <= p[1] <= h - margin

    def point_in_obstacle(self, p: Point) -> Optional[str]:
        for ob in self.obstacles:
            for part in ob.parts:
                if geometry.point_in_polygon(p, part):
                    return ob.id
        return None

    @classmethod
    def from_json(cls, data: dict) -> "World":
        obstacles = tuple(
            Obstacle.make(f"poly{i}", [(float(x), float(y)) for x, y in poly])
            for i, poly in enumerate(data.get("polygons", []))
        )
        segments = tuple(
            (float(s[0]), float(s[1]), float(s[2]), float(s[3]))
            for s in data.get("segments", [])
        )
        return cls(
            bounds=(float(data["bounds"][0]), float(data["bounds"][1])),
            obstacles=obstacles,
            segments=segments,
        )

    @classmethod
    def load(cls, path: str | Path) -> "World":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return {
            "bounds": [self.bounds[0], self.bounds[1]],
            "polygons": [[[x, y] for x, y in ob.vertices] for ob in self.obstacles],
            "segments": [list(s) for s in self.segments],
        }


def constraint_edges(constraints: ConstraintSet) -> np.ndarray:
    """Edge array for every constraint polygon (virtual obstacles + zones)."""
    segs: list[tuple[float, float, float, float]] = []
    for poly in constraints.all_polygons():
        for part in poly.parts:
            segs.extend(geometry.polygon_segments(part))
    return geometry.segments_array(segs)


def raycast_scan(world: World, pose: Pose, cfg: ScanConfig = DEFAULT_SCAN) -> LaserScan:
    """Physical scan: beam distances to the nearest world geometry."""
    if not world.inside_bounds(pose.xy()):
        raise DegeneratePoseError(f"pose ({pose.x:.2f}, {pose.y:.2f}) outside bounds")
    hit = world.point_in_obstacle(pose.xy())
    if hit is not None:
        raise DegeneratePoseError(f"pose inside obstacle {hit}")
    angles = cfg.angles() + pose.theta
    ranges = geometry.raycast_segments(pose.xy(), angles, world.edges, cfg.max_range)
    return LaserScan(config=cfg, ranges=ranges)


def merge_scan(
    physical: LaserScan,
    constraints: ConstraintSet,
    pose: Pose,
    cfg: Optional[ScanConfig] = None,
) -> LaserScan:
    """Fuse virtual constraint geometry into a physical scan, beam by beam."""
    if cfg is not None and cfg != physical.config:
        raise ScanConfigMismatchError(f"expected {cfg}, scan carries {physical.config}")
    if constraints.is_empty():
        return physical
    scan_cfg = physical.config
    edges = constraint_edges(constraints)
    angles = scan_cfg.angles() + pose.theta
    virtual = geometry.raycast_segments(pose.xy(), angles, edges, scan_cfg.max_range)
    return LaserScan(config=scan_cfg, ranges=np.minimum(physical.ranges, virtual))


def step_dynamics(
    state: RobotState,
    action: tuple[float, float],
    dt: float = DT,
    limits: MotionLimits = DEFAULT_LIMITS,
) -> RobotState:
    """Unicycle integration with saturating clamps on (v, w)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = min(limits.v_max, max(limits.v_min, float(action[0])))
    w = min(limits.w_max, max(-limits.w_max, float(action[1])))
    theta = geometry.norm_angle(state.pose.theta + w * dt)
    x = state.pose.x + v * math.cos(theta) * dt
    y = state.pose.y + v * math.sin(theta) * dt
    return replace(state, pose=Pose(x, y, theta), v=v, w=w)


@dataclass(frozen=True)
class PedestrianDisc:
    """Minimal pedestrian view the collision check needs."""

    id: str
    position: Point
    radius: float = PEDESTRIAN_RADIUS


def classify_contact(
    state: RobotState,
    world: World,
    constraints: ConstraintSet,
    pedestrians: Sequence[PedestrianDisc] = (),
) -> CollisionReport:
    """Physical > virtual > zone; zone entry requires the robot center inside."""
    c = state.pose.xy()
    r = state.radius
    w, h = world.bounds
    if c[0] - r < 0.0 or c[1] - r < 0.0 or c[0] + r > w or c[1] + r > h:
        return CollisionReport(ContactKind.PHYSICAL, "bounds")
    for ob in world.obstacles:
        for part in ob.parts:
            if geometry.circle_intersects_polygon(c, r, part):
                return CollisionReport(ContactKind.PHYSICAL, ob.id)
    for i, seg in enumerate(world.segments):
        if geometry.circle_intersects_segment(c, r, (seg[0], seg[1]), (seg[2], seg[3])):
            return CollisionReport(ContactKind.PHYSICAL, f"seg{i}")
    for ped in pedestrians:
        d = math.hypot(c[0] - ped.position[0], c[1] - ped.position[1])
        if d <= r + ped.radius:
            return CollisionReport(ContactKind.PHYSICAL, ped.id)
    for poly in constraints.virtual_obstacles:
        for part in poly.parts:
            if geometry.circle_intersects_polygon(c, r, part):
                return CollisionReport(ContactKind.VIRTUAL, poly.id)
    for poly in constraints.keep_out_zones:
        if any(geometry.point_in_polygon(c, part) for part in poly.parts):
            return CollisionReport(ContactKind.SAFETY_ZONE, poly.id)
    return CollisionReport()
