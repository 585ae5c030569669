"""Target selection: TaskSpec + robot + pedestrians -> current goal point g.

Pure transition function; the service loop owns the TaskProgress value.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .command import TaskSpec, TaskType
from .constraints import SemanticMap, resolve_fixture
from .geometry import Point
from .world import RobotState

APPROACH_CLEARANCE = 0.5  # stand-off from a fixture footprint when grounding


class Phase(enum.Enum):
    TO_VIA = "ToVia"
    TO_VIP = "ToVip"
    TO_GOAL = "ToGoal"
    DONE = "Done"


class TaskFaultError(RuntimeError):
    """Required VIP absent from the pedestrian feed; the robot must halt."""


@dataclass(frozen=True)
class TaskParams:
    d_near: float = 1.0
    d_far: float = 2.5
    via_radius: float = 0.8
    goal_radius: float = 0.5

    def __post_init__(self):
        if not self.d_near < self.d_far:
            raise ValueError("d_near must be strictly less than d_far")


DEFAULT_TASK_PARAMS = TaskParams()


@dataclass(frozen=True)
class GroundedTask:
    """TaskSpec with every fixture reference resolved to a reachable point."""
    task: TaskType
    goal: Optional[Point] = None
    via: tuple[Point, ...] = ()
    vip_id: Optional[str] = None


@dataclass(frozen=True)
class TaskProgress:
    phase: Phase
    via_index: int = 0
    vias_visited: tuple[bool, ...] = ()
    params: TaskParams = field(default=DEFAULT_TASK_PARAMS)

    @property
    def done(self) -> bool:
        return self.phase is Phase.DONE

    def missed_vias(self) -> int:
        return sum(1 for v in self.vias_visited if not v)


def approach_point(smap: SemanticMap, name: str, from_xy: Point) -> Point:
    """Reachable stand-off point on the near side of a fixture footprint."""
    f = resolve_fixture(smap, name)
    cx, cy = f.center
    hx, hy = f.length / 2.0, f.width / 2.0
    qx = min(max(from_xy[0], cx - hx), cx + hx)
    qy = min(max(from_xy[1], cy - hy), cy + hy)
    dx, dy = from_xy[0] - qx, from_xy[1] - qy
    d = math.hypot(dx, dy)
    if d < 1e-9:
        # robot inside the footprint: push straight out the nearest face
        gaps = [
            (from_xy[0] - (cx - hx), (-1.0, 0.0)),
            ((cx + hx) - from_xy[0], (1.0, 0.0)),
            (from_xy[1] - (cy - hy), (0.0, -1.0)),
            ((cy + hy) - from_xy[1], (0.0, 1.0)),
        ]
        gap, (dx, dy) = min(gaps)
        return (
            from_xy[0] + dx * (gap + APPROACH_CLEARANCE),
            from_xy[1] + dy * (gap + APPROACH_CLEARANCE),
        )
    return (qx + dx / d * APPROACH_CLEARANCE, qy + dy / d * APPROACH_CLEARANCE)


def ground_task(spec: TaskSpec, smap: SemanticMap, robot_xy: Point) -> GroundedTask:
    """Resolve fixture names to points; raw coordinates pass through."""

    def to_point(ref, origin: Point) -> Point:
        if isinstance(ref, tuple):
            return ref
        return approach_point(smap, ref, origin)

    origin = robot_xy
    via_points = []
    for ref in spec.via:
        pt = to_point(ref, origin)
        via_points.append(pt)
        origin = pt  # approach each leg from the previous one
    goal = to_point(spec.goal, origin) if spec.goal is not None else None
    return GroundedTask(
        task=spec.task, goal=goal, via=tuple(via_points), vip_id=spec.vip_id
    )


def start_progress(task: GroundedTask, params: TaskParams = DEFAULT_TASK_PARAMS) -> TaskProgress:
    visited = (False,) * len(task.via)
    if task.task is TaskType.FOLLOWING:
        return TaskProgress(Phase.TO_VIP, params=params)
    if task.task is TaskType.GUIDING:
        return TaskProgress(Phase.TO_VIP, vias_visited=visited, params=params)
    phase = Phase.TO_VIA if task.via else Phase.TO_GOAL
    return TaskProgress(phase, vias_visited=visited, params=params)


def _find_vip(peds: Sequence, vip_id: str):
    for p in peds:
        if p.id == vip_id:
            return p
    raise TaskFaultError(f"pedestrian {vip_id!r} not in feed")


def _mark_visited(progress: TaskProgress, task: GroundedTask, xy: Point) -> TaskProgress:
    """A via counts as passed whenever the robot is within via_radius of it,
    targeted or not; already-passed vias are skipped by the sequencer."""
    if not task.via:
        return progress
    visited = list(progress.vias_visited)
    for i, (vx, vy) in enumerate(task.via):
        if not visited[i] and math.hypot(vx - xy[0], vy - xy[1]) <= progress.params.via_radius:
            visited[i] = True
    idx = progress.via_index
    while idx < len(task.via) and visited[idx]:
        idx += 1
    if visited == list(progress.vias_visited) and idx == progress.via_index:
        return progress
    return replace(progress, vias_visited=tuple(visited), via_index=idx)


def _route_target(
    task: GroundedTask, progress: TaskProgress, xy: Point
) -> tuple[Point, TaskProgress]:
    """Walk via points in order, then the goal; Done inside goal_radius."""
    progress = _mark_visited(progress, task, xy)
    if progress.via_index < len(task.via):
        phase = Phase.TO_VIA
        if progress.phase is not phase:
            progress = replace(progress, phase=phase)
        return task.via[progress.via_index], progress
    goal = task.goal
    if math.hypot(goal[0] - xy[0], goal[1] - xy[1]) <= progress.params.goal_radius:
        return goal, replace(progress, phase=Phase.DONE)
    if progress.phase is not Phase.TO_GOAL:
        progress = replace(progress, phase=Phase.TO_GOAL)
    return goal, progress


def next_target(
    task: GroundedTask,
    progress: TaskProgress,
    robot: RobotState,
    peds: Sequence = (),
) -> tuple[Point, TaskProgress]:
    """One FSM step: emits the current target and the successor progress."""
    xy = robot.pose.xy()
    prm = progress.params

    if progress.phase is Phase.DONE:
        return (task.goal if task.goal is not None else xy), progress

    if task.task is TaskType.FOLLOWING:
        vip = _find_vip(peds, task.vip_id)
        return vip.position, progress  # never Done on its own

    if task.task is TaskType.POINT_TO_POINT:
        return _route_target(task, progress, xy)

    # Guiding: shuttle between serving the VIP and leading the route.
    vip = _find_vip(peds, task.vip_id)
    d_vip = math.hypot(vip.position[0] - xy[0], vip.position[1] - xy[1])
    phase = progress.phase
    if phase is Phase.TO_VIP:
        if d_vip <= prm.d_near:
            phase = Phase.TO_GOAL
    elif d_vip > prm.d_far:
        phase = Phase.TO_VIP  # VIP fell behind: go back for them

    if phase is Phase.TO_VIP:
        if progress.phase is not phase:
            progress = replace(progress, phase=phase)
        return vip.position, progress

    progress = _mark_visited(progress, task, xy)
    if progress.via_index < len(task.via):
        if progress.phase is not Phase.TO_VIA:
            progress = replace(progress, phase=Phase.TO_VIA)
        return task.via[progress.via_index], progress
    goal = task.goal
    reached = math.hypot(goal[0] - xy[0], goal[1] - xy[1]) <= prm.goal_radius
    if reached and d_vip <= prm.d_far:
        return goal, replace(progress, phase=Phase.DONE)
    if progress.phase is not Phase.TO_GOAL:
        progress = replace(progress, phase=Phase.TO_GOAL)
    return goal, progress
