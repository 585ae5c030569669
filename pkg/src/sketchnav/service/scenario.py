"""Scenario files: a world, its semantic map, pedestrians, and scripted tests."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..constraints import SemanticMap, Sketch
from ..crowd import Pedestrian
from ..world import Pose, World

PEDESTRIAN_MODE_COUNT = 3


class ScenarioMode(enum.Enum):
    STATIC = "Static"
    PEDESTRIAN = "Pedestrian"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioTest:
    """One scripted trial: an instruction, pre-placed sketches, expected vias."""

    command: str
    sketches: tuple[Sketch, ...] = ()
    expected_vias: tuple[str, ...] = ()

    @classmethod
    def from_json(cls, data: dict) -> "ScenarioTest":
        return cls(
            command=str(data["command"]),
            sketches=tuple(Sketch.from_json(s) for s in data.get("sketches", [])),
            expected_vias=tuple(str(v) for v in data.get("expected_vias", [])),
        )

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "sketches": [s.to_json() for s in self.sketches],
            "expected_vias": list(self.expected_vias),
        }


def _is_moving(ped: Pedestrian) -> bool:
    return bool(ped.waypoints) or bool(ped.script)


@dataclass(frozen=True)
class Scenario:
    name: str
    world: World
    semantic_map: SemanticMap
    robot_pose: Pose
    mode: ScenarioMode = ScenarioMode.STATIC
    pedestrians: tuple[Pedestrian, ...] = ()
    tests: tuple[ScenarioTest, ...] = field(default=())
    # escape hatch: pedestrian-mode scenarios normally carry exactly three walkers
    allow_pedestrian_count: bool = False

    def __post_init__(self):
        moving = sum(1 for p in self.pedestrians if _is_moving(p))
        if self.mode is ScenarioMode.STATIC and moving > 0:
            raise ScenarioError(f"static scenario has {moving} moving pedestrian(s)")
        if (
            self.mode is ScenarioMode.PEDESTRIAN
            and moving != PEDESTRIAN_MODE_COUNT
            and not self.allow_pedestrian_count
        ):
            raise ScenarioError(
                f"pedestrian scenario needs exactly {PEDESTRIAN_MODE_COUNT} moving "
                f"pedestrians, got {moving}; set allow_pedestrian_count to override"
            )
        if not self.world.inside_bounds(self.robot_pose.xy()):
            raise ScenarioError("robot start pose outside world bounds")

    @classmethod
    def from_json(cls, data: dict, base_dir: Optional[Path] = None) -> "Scenario":
        base = Path(base_dir) if base_dir is not None else Path(".")
        world = (
            World.load(base / data["world"])
            if isinstance(data["world"], str)
            else World.from_json(data["world"])
        )
        smap = (
            SemanticMap.load(base / data["semantic_map"])
            if isinstance(data["semantic_map"], str)
            else SemanticMap.from_json(data["semantic_map"])
        )
        pose = data.get("robot_pose", [1.0, 1.0, 0.0])
        return cls(
            name=str(data.get("name", "unnamed")),
            world=world,
            semantic_map=smap,
            robot_pose=Pose(float(pose[0]), float(pose[1]), float(pose[2])),
            mode=ScenarioMode(data.get("mode", "Static")),
            pedestrians=tuple(Pedestrian.from_json(p) for p in data.get("pedestrians", [])),
            tests=tuple(ScenarioTest.from_json(t) for t in data.get("tests", [])),
            allow_pedestrian_count=bool(data.get("allow_pedestrian_count", False)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ScenarioError(f"scenario file not found: {path}") from None
        except ValueError as exc:
            raise ScenarioError(f"bad scenario JSON in {path}: {exc}") from exc
        return cls.from_json(data, base_dir=path.parent)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "world": self.world.to_json(),
            "semantic_map": self.semantic_map.to_json(),
            "robot_pose": [self.robot_pose.x, self.robot_pose.y, self.robot_pose.theta],
            "mode": self.mode.value,
            "pedestrians": [p.to_json() for p in self.pedestrians],
            "tests": [t.to_json() for t in self.tests],
        }
        if self.allow_pedestrian_count:
            out["allow_pedestrian_count"] = True
        return out
