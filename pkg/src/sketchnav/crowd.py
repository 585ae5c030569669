"""Pedestrian simulation: social-force and reciprocal-avoidance models.

Both models are written as pure functions over the previous tick's snapshot,
so stepping order never matters and runs are reproducible.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import Point, nearest_point_on_segment
from .world import PEDESTRIAN_RADIUS, World

SPEED_CAP_FACTOR = 1.3       # hard cap relative to desired speed
WAYPOINT_TOLERANCE = 0.3     # waypoint reached within this distance
F_MAX = 50.0                 # repulsion cap for coincident positions


class PedModel(enum.Enum):
    SFM = "SFM"
    ORCA = "ORCA"
    SCRIPTED = "Scripted"


@dataclass(frozen=True)
class SfmParams:
    tau: float = 0.5
    A: float = 2.0
    B: float = 0.3


@dataclass(frozen=True)
class OrcaParams:
    time_horizon: float = 2.0
    neighbor_dist: float = 4.0


DEFAULT_SFM = SfmParams()
DEFAULT_ORCA = OrcaParams()


@dataclass(frozen=True)
class Pedestrian:
    id: str
    position: Point
    velocity: Point = (0.0, 0.0)
    v0: float = 1.0
    radius: float = PEDESTRIAN_RADIUS
    waypoints: tuple[Point, ...] = ()
    waypoint_index: int = 0
    model: PedModel = PedModel.SFM
    vip: bool = False
    loop: bool = True
    script: tuple[Point, ...] = ()
    tick: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("pedestrian radius must be positive")
        if self.v0 <= 0:
            raise ValueError("desired speed must be positive")
        speed = math.hypot(*self.velocity)
        if speed > self.max_speed + 1e-9:
            raise ValueError(f"speed {speed:.3f} exceeds cap {self.max_speed:.3f}")

    @property
    def max_speed(self) -> float:
        return SPEED_CAP_FACTOR * self.v0

    def target(self) -> Optional[Point]:
        if self.model is PedModel.SCRIPTED or not self.waypoints:
            return None
        if self.waypoint_index >= len(self.waypoints):
            return None
        return self.waypoints[self.waypoint_index]

    def to_json(self) -> dict:
        """Scenario-schema dump: start-state fields only, no runtime state."""
        out: dict = {
            "id": self.id,
            "start": list(self.position),
            "v0": self.v0,
            "radius": self.radius,
            "model": self.model.value,
            "vip": self.vip,
            "loop": self.loop,
        }
        if self.waypoints:
            out["waypoints"] = [list(w) for w in self.waypoints]
        if self.script:
            out["script"] = [list(p) for p in self.script]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Pedestrian":
        return cls(
            id=str(data["id"]),
            position=tuple(float(c) for c in data["start"]),
            v0=float(data.get("v0", 1.0)),
            radius=float(data.get("radius", PEDESTRIAN_RADIUS)),
            waypoints=tuple(tuple(float(c) for c in w) for w in data.get("waypoints", [])),
            model=PedModel(data.get("model", "SFM")),
            vip=bool(data.get("vip", False)),
            loop=bool(data.get("loop", True)),
            script=tuple(tuple(float(c) for c in w) for w in data.get("script", [])),
        )


@dataclass(frozen=True)
class DiscAgent:
    """Minimal neighbor view: enough for repulsion and ORCA half-planes."""
    position: Point
    velocity: Point
    radius: float


def _as_disc(other) -> DiscAgent:
    if isinstance(other, DiscAgent):
        return other
    return DiscAgent(position=other.position, velocity=other.velocity, radius=other.radius)


def _desired_direction(p: Pedestrian) -> Point:
    tgt = p.target()
    if tgt is None:
        return (0.0, 0.0)
    dx, dy = tgt[0] - p.position[0], tgt[1] - p.position[1]
    d = math.hypot(dx, dy)
    if d < 1e-12:
        return (0.0, 0.0)
    return (dx / d, dy / d)


def sfm_accel(
    p: Pedestrian,
    others: Sequence,
    world: Optional[World] = None,
    params: SfmParams = DEFAULT_SFM,
) -> Point:
    """Driving force toward the waypoint plus exponential disc/wall repulsion."""
    ex, ey = _desired_direction(p)
    ax = (p.v0 * ex - p.velocity[0]) / params.tau
    ay = (p.v0 * ey - p.velocity[1]) / params.tau

    px, py = p.position
    for other in others:
        o = _as_disc(other)
        dx, dy = px - o.position[0], py - o.position[1]
        d = math.hypot(dx, dy)
        r_sum = p.radius + o.radius
        if d < 1e-12:
            # coincident discs: capped push along +x keeps the step finite
            ax += F_MAX
            continue
        mag = min(params.A * math.exp((r_sum - d) / params.B), F_MAX)
        ax += mag * dx / d
        ay += mag * dy / d

    if world is not None:
        for sx, sy, tx, ty in world.edges:
            qx, qy = nearest_point_on_segment((px, py), (sx, sy), (tx, ty))
            dx, dy = px - qx, py - qy
            d = math.hypot(dx, dy)
            if d < 1e-12:
                ax += F_MAX
                continue
            mag = min(params.A * math.exp((p.radius - d) / params.B), F_MAX)
            ax += mag * dx / d
            ay += mag * dy / d
    return (ax, ay)


# --- ORCA (reciprocal half-plane) selection ---------------------------------

_RVO_EPS = 1e-5


@dataclass
class _Line:
    point: np.ndarray
    direction: np.ndarray


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _lp1(lines: list[_Line], line_no: int, radius: float,
         opt_v: np.ndarray, direction_opt: bool) -> Optional[np.ndarray]:
    """1-D program along lines[line_no] subject to earlier half-planes."""
    line = lines[line_no]
    dot = float(line.point @ line.direction)
    disc = dot * dot + radius * radius - float(line.point @ line.point)
    if disc < 0.0:
        return None
    sqrt_disc = math.sqrt(disc)
    t_left, t_right = -dot - sqrt_disc, -dot + sqrt_disc

    for i in range(line_no):
        denom = _det(line.direction, lines[i].direction)
        numer = _det(lines[i].direction, line.point - lines[i].point)
        if abs(denom) <= _RVO_EPS:
            if numer < 0.0:
                return None
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_opt:
        t = t_right if float(opt_v @ line.direction) > 0.0 else t_left
    else:
        t = float(line.direction @ (opt_v - line.point))
        t = min(max(t, t_left), t_right)
    return line.point + t * line.direction


def _lp2(lines: list[_Line], radius: float, opt_v: np.ndarray,
         direction_opt: bool) -> tuple[int, np.ndarray]:
    """2-D program: closest feasible point to opt_v inside the speed disc."""
    if direction_opt:
        result = opt_v * radius
    elif float(opt_v @ opt_v) > radius * radius:
        result = opt_v / np.linalg.norm(opt_v) * radius
    else:
        result = opt_v.copy()

    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            fixed = _lp1(lines, i, radius, opt_v, direction_opt)
            if fixed is None:
                return i, result
            result = fixed
    return len(lines), result


def _lp3(lines: list[_Line], begin_line: int, radius: float,
         result: np.ndarray) -> np.ndarray:
    """Infeasible fallback: minimize the worst half-plane violation."""
    distance = 0.0
    for i in range(begin_line, len(lines)):
        if _det(lines[i].direction, lines[i].point - result) > distance:
            proj: list[_Line] = []
            for j in range(i):
                denom = _det(lines[i].direction, lines[j].direction)
                if abs(denom) <= _RVO_EPS:
                    if float(lines[i].direction @ lines[j].direction) > 0.0:
                        continue
                    point = 0.5 * (lines[i].point + lines[j].point)
                else:
                    shift = _det(lines[j].direction, lines[i].point - lines[j].point) / denom
                    point = lines[i].point + shift * lines[i].direction
                direction = lines[j].direction - lines[i].direction
                direction = direction / np.linalg.norm(direction)
                proj.append(_Line(point, direction))
            perp = np.array([-lines[i].direction[1], lines[i].direction[0]])
            count, fixed = _lp2(proj, radius, perp, True)
            if count >= len(proj):
                result = fixed
            distance = _det(lines[i].direction, lines[i].point - result)
    return result


def orca_lines(
    p: Pedestrian,
    others: Sequence,
    dt: float,
    params: OrcaParams = DEFAULT_ORCA,
) -> list[_Line]:
    """One reciprocal half-plane per neighbor within range."""
    lines: list[_Line] = []
    pos = np.array(p.position, dtype=float)
    vel = np.array(p.velocity, dtype=float)
    inv_horizon = 1.0 / params.time_horizon

    for other in others:
        o = _as_disc(other)
        rel_pos = np.array(o.position, dtype=float) - pos
        if float(rel_pos @ rel_pos) > params.neighbor_dist**2:
            continue
        rel_vel = vel - np.array(o.velocity, dtype=float)
        dist_sq = float(rel_pos @ rel_pos)
        r_sum = p.radius + o.radius
        r_sum_sq = r_sum * r_sum

        if dist_sq > r_sum_sq:
            w = rel_vel - inv_horizon * rel_pos
            w_len_sq = float(w @ w)
            dot1 = float(w @ rel_pos)
            if dot1 < 0.0 and dot1 * dot1 > r_sum_sq * w_len_sq:
                # closest point on the cut-off arc
                w_len = math.sqrt(w_len_sq)
                unit_w = w / w_len
                direction = np.array([unit_w[1], -unit_w[0]])
                u = (r_sum * inv_horizon - w_len) * unit_w
            else:
                leg = math.sqrt(dist_sq - r_sum_sq)
                if _det(rel_pos, w) > 0.0:
                    direction = np.array([
                        rel_pos[0] * leg - rel_pos[1] * r_sum,
                        rel_pos[0] * r_sum + rel_pos[1] * leg,
                    ]) / dist_sq
                else:
                    direction = -np.array([
                        rel_pos[0] * leg + rel_pos[1] * r_sum,
                        -rel_pos[0] * r_sum + rel_pos[1] * leg,
                    ]) / dist_sq
                u = float(rel_vel @ direction) * direction - rel_vel
        else:
            # already overlapping: resolve within one step
            inv_step = 1.0 / dt
            w = rel_vel - inv_step * rel_pos
            w_len = float(np.linalg.norm(w))
            if w_len < 1e-12:
                direction = np.array([1.0, 0.0])
                u = np.zeros(2)
            else:
                unit_w = w / w_len
                direction = np.array([unit_w[1], -unit_w[0]])
                u = (r_sum * inv_step - w_len) * unit_w
        lines.append(_Line(point=vel + 0.5 * u, direction=direction))
    return lines


def orca_velocity(
    p: Pedestrian,
    others: Sequence,
    dt: float,
    params: OrcaParams = DEFAULT_ORCA,
) -> Point:
    """Velocity closest to preferred under all reciprocal half-planes."""
    ex, ey = _desired_direction(p)
    pref = np.array([p.v0 * ex, p.v0 * ey])
    lines = orca_lines(p, others, dt, params)
    count, result = _lp2(lines, p.max_speed, pref, False)
    if count < len(lines):
        result = _lp3(lines, count, p.max_speed, result)
    return (float(result[0]), float(result[1]))


def _advance_waypoint(p: Pedestrian) -> Pedestrian:
    if p.model is PedModel.SCRIPTED or not p.waypoints:
        return p
    idx = p.waypoint_index
    for _ in range(len(p.waypoints)):
        if idx >= len(p.waypoints):
            break
        wx, wy = p.waypoints[idx]
        if math.hypot(wx - p.position[0], wy - p.position[1]) > WAYPOINT_TOLERANCE:
            break
        idx += 1
        if idx >= len(p.waypoints) and p.loop:
            idx = 0
    return p if idx == p.waypoint_index else replace(p, waypoint_index=idx)


def _clamp_speed(v: Point, cap: float) -> Point:
    speed = math.hypot(*v)
    if speed <= cap or speed < 1e-12:
        return v
    return (v[0] * cap / speed, v[1] * cap / speed)


def step_crowd(
    peds: Sequence[Pedestrian],
    world: Optional[World],
    dt: float,
    robot: Optional[DiscAgent] = None,
    sfm: SfmParams = DEFAULT_SFM,
    orca: OrcaParams = DEFAULT_ORCA,
) -> list[Pedestrian]:
    """Advance every pedestrian one tick from the shared previous snapshot."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out: list[Pedestrian] = []
    for p in peds:
        p = _advance_waypoint(p)
        others: list = [q for q in peds if q.id != p.id]
        if robot is not None:
            others.append(robot)

        if p.model is PedModel.SCRIPTED:
            idx = min(p.tick, len(p.script) - 1) if p.script else -1
            nxt = p.script[idx] if idx >= 0 else p.position
            vel = ((nxt[0] - p.position[0]) / dt, (nxt[1] - p.position[1]) / dt)
            vel = _clamp_speed(vel, p.max_speed)
            out.append(replace(p, position=nxt, velocity=vel, tick=p.tick + 1))
            continue

        if p.model is PedModel.SFM:
            ax, ay = sfm_accel(p, others, world, sfm)
            vel = (p.velocity[0] + ax * dt, p.velocity[1] + ay * dt)
            vel = _clamp_speed(vel, p.max_speed)
        else:
            vel = orca_velocity(p, others, dt, orca)
            vel = _clamp_speed(vel, p.max_speed)

        pos = (p.position[0] + vel[0] * dt, p.position[1] + vel[1] * dt)
        out.append(replace(p, position=pos, velocity=vel, tick=p.tick + 1))
    return out


def observe_pedestrians(
    peds: Sequence[Pedestrian],
    sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> list[Pedestrian]:
    """Detector view of the crowd: optional Gaussian noise, VIP stays exact."""
    if sigma <= 0.0 or rng is None:
        return list(peds)
    out = []
    for p in peds:
        if p.vip:
            out.append(p)
            continue
        nx, ny = rng.normal(0.0, sigma, size=2)
        out.append(replace(p, position=(p.position[0] + nx, p.position[1] + ny)))
    return out
