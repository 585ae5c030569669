"""Sketches and parsed restrictions compiled into geometric constraint sets.

Hosts the semantic map (named fixtures) and the small function library the
command parser grounds phrases with.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import geometry
from .geometry import Point

CLOSING_TOLERANCE = 0.2   # hand-drawn loops snap closed within this distance
ROUTE_MAX_POINTS = 10
ZONE_HULL_SAMPLES = 32    # keeps hull within 1 cm of the true inflation


class UnknownFixtureError(KeyError):
    """Lookup of a fixture name absent from the semantic map."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class SketchValidationError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"sketch {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class Fixture:
    """A named world feature: axis-aligned footprint around a center."""

    name: str
    center: Point
    length: float  # x extent
    width: float   # y extent

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"fixture {self.name!r} needs positive extents")

    def footprint(self) -> list[Point]:
        return expand_location(self, 0.0)


class SemanticMap:
    """Case-insensitive registry of fixtures."""

    def __init__(self, fixtures: Sequence[Fixture] = ()):
        self._by_name: dict[str, Fixture] = {}
        for f in fixtures:
            key = f.name.casefold()
            if key in self._by_name:
                raise ValueError(f"duplicate fixture name {f.name!r}")
            self._by_name[key] = f

    @property
    def fixtures(self) -> list[Fixture]:
        return list(self._by_name.values())

    def names(self) -> list[str]:
        return [f.name for f in self._by_name.values()]

    def get(self, name: str) -> Optional[Fixture]:
        return self._by_name.get(name.casefold())

    @classmethod
    def from_json(cls, data: dict) -> "SemanticMap":
        return cls(
            [
                Fixture(
                    name=str(f["name"]),
                    center=(float(f["center"][0]), float(f["center"][1])),
                    length=float(f["length"]),
                    width=float(f["width"]),
                )
                for f in data["fixtures"]
            ]
        )

    @classmethod
    def load(cls, path: str | Path) -> "SemanticMap":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return {
            "fixtures": [
                {
                    "name": f.name,
                    "center": [f.center[0], f.center[1]],
                    "length": f.length,
                    "width": f.width,
                }
                for f in self.fixtures
            ]
        }


def resolve_fixture(smap: SemanticMap, name: str) -> Fixture:
    """Case-insensitive exact lookup; raises UnknownFixtureError when absent."""
    fixture = smap.get(name.strip())
    if fixture is None:
        raise UnknownFixtureError(name.strip())
    return fixture


class SketchKind(enum.Enum):
    CLOSED_REGION = "ClosedRegion"
    ROUTE_PATH = "RoutePath"
    SAFETY_OUTLINE = "SafetyOutline"
    GOAL_MARK = "GoalMark"


@dataclass(frozen=True)
class Sketch:
    kind: SketchKind
    points: tuple[Point, ...]
    margin: Optional[float] = None

    @classmethod
    def from_json(cls, data: dict) -> "Sketch":
        return cls(
            kind=SketchKind(data["kind"]),
            points=tuple((float(p[0]), float(p[1])) for p in data["points"]),
            margin=float(data["margin"]) if data.get("margin") is not None else None,
        )

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind.value, "points": [[x, y] for x, y in self.points]}
        if self.margin is not None:
            out["margin"] = self.margin
        return out


class Source(enum.Enum):
    SKETCH_INPUT = "SketchInput"
    PARSED_INSTRUCTION = "ParsedInstruction"


@dataclass(frozen=True)
class ConstraintPolygon:
    id: str
    vertices: tuple[Point, ...]
    source: Source
    # convex parts back the raycast/collision kernels; the outline stays for UI echo
    parts: tuple[tuple[Point, ...], ...] = field(default=())

    @staticmethod
    def make(id: str, vertices: Sequence[Point], source: Source) -> "ConstraintPolygon":
        verts = geometry.ensure_ccw(vertices)
        parts = tuple(tuple(p) for p in geometry.convex_decompose(verts))
        return ConstraintPolygon(id=id, vertices=tuple(verts), source=source, parts=parts)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "vertices": [[x, y] for x, y in self.vertices],
            "source": self.source.value,
        }


@dataclass
class ConstraintSet:
    virtual_obstacles: list[ConstraintPolygon] = field(default_factory=list)
    keep_out_zones: list[ConstraintPolygon] = field(default_factory=list)

    def __post_init__(self):
        ids = [p.id for p in self.virtual_obstacles] + [p.id for p in self.keep_out_zones]
        if len(ids) != len(set(ids)):
            raise ValueError("constraint ids must be unique")

    def is_empty(self) -> bool:
        return not self.virtual_obstacles and not self.keep_out_zones

    def merged_with(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(
            virtual_obstacles=self.virtual_obstacles + other.virtual_obstacles,
            keep_out_zones=self.keep_out_zones + other.keep_out_zones,
        )

    def all_polygons(self) -> list[ConstraintPolygon]:
        return self.virtual_obstacles + self.keep_out_zones

    def to_json(self) -> dict:
        return {
            "virtual_obstacles": [p.to_json() for p in self.virtual_obstacles],
            "keep_out_zones": [p.to_json() for p in self.keep_out_zones],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ConstraintSet":
        def poly(entry: dict) -> ConstraintPolygon:
            return ConstraintPolygon.make(
                str(entry["id"]),
                [(float(x), float(y)) for x, y in entry["vertices"]],
                Source(entry.get("source", "SketchInput")),
            )

        return cls(
            virtual_obstacles=[poly(e) for e in data.get("virtual_obstacles", [])],
            keep_out_zones=[poly(e) for e in data.get("keep_out_zones", [])],
        )


def expand_location(fixture: Fixture, r: float) -> list[Point]:
    """Axis-aligned rectangle: the footprint grown by `r` on every side."""
    if r < 0:
        raise ValueError(f"expansion radius must be >= 0, got {r}")
    cx, cy = fixture.center
    hx = fixture.length / 2.0 + r
    hy = fixture.width / 2.0 + r
    return [(cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy)]


def midpoint(a: Fixture, b: Fixture) -> Point:
    return ((a.center[0] + b.center[0]) / 2.0, (a.center[1] + b.center[1]) / 2.0)


def region_between(a: Fixture, b: Fixture) -> list[Point]:
    """Axis-aligned rectangle hull spanning both fixture footprints."""
    pts = expand_location(a, 0.0) + expand_location(b, 0.0)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


# Signatures exposed to the LLM backend prompt.
FUNCTION_LIBRARY_DOCS = {
    "expand_location(fixture, r)": "rectangle covering the named fixture grown by r meters on every side",
    "resolve_fixture(name)": "look up a fixture by name (case-insensitive); fails on unknown names",
    "midpoint(a, b)": "point halfway between the centers of fixtures a and b",
    "region_between(a, b)": "axis-aligned rectangle hull spanning the footprints of fixtures a and b",
}


def _validate_sketch(index: int, sketch: Sketch) -> None:
    n = len(sketch.points)
    if sketch.kind is SketchKind.CLOSED_REGION:
        if n < 3:
            raise SketchValidationError(index, f"closed region needs >= 3 points, got {n}")
        first, last = sketch.points[0], sketch.points[-1]
        gap = math.hypot(first[0] - last[0], first[1] - last[1])
        if gap > CLOSING_TOLERANCE:
            raise SketchValidationError(index, f"closed region does not close (gap {gap:.2f} m)")
    elif sketch.kind is SketchKind.ROUTE_PATH:
        if n < 2:
            raise SketchValidationError(index, f"route needs >= 2 points, got {n}")
    elif sketch.kind is SketchKind.SAFETY_OUTLINE:
        if n < 2:
            raise SketchValidationError(index, f"safety outline needs >= 2 points, got {n}")
        if sketch.margin is None or sketch.margin <= 0:
            raise SketchValidationError(index, "safety outline needs a positive margin")
    elif sketch.kind is SketchKind.GOAL_MARK:
        if n != 1:
            raise SketchValidationError(index, f"goal mark needs exactly 1 point, got {n}")


def _region_polygon(sketch: Sketch) -> list[Point]:
    pts = list(sketch.points)
    first, last = pts[0], pts[-1]
    if math.hypot(first[0] - last[0], first[1] - last[1]) <= 1e-9:
        pts = pts[:-1]  # drop explicit closing point
    if len(pts) < 3:
        raise geometry.PolygonError("degenerate region after closing")
    return pts


def compile_sketches(
    sketches: Sequence[Sketch], id_prefix: str = "sketch"
) -> tuple[ConstraintSet, list[Point], Optional[Point]]:
    """Turn raw sketches into (constraints, via points, goal).

    Closed regions become virtual obstacles, safety outlines become inflated
    keep-out zones, routes become ordered via points, and the last goal mark
    wins.
    """
    obstacles: list[ConstraintPolygon] = []
    zones: list[ConstraintPolygon] = []
    via_points: list[Point] = []
    goal: Optional[Point] = None
    for i, sketch in enumerate(sketches):
        _validate_sketch(i, sketch)
        if sketch.kind is SketchKind.CLOSED_REGION:
            try:
                poly = ConstraintPolygon.make(
                    f"{id_prefix}-region-{i}", _region_polygon(sketch), Source.SKETCH_INPUT
                )
            except geometry.PolygonError as exc:
                raise SketchValidationError(i, str(exc)) from exc
            obstacles.append(poly)
        elif sketch.kind is SketchKind.SAFETY_OUTLINE:
            hull = geometry.inflate_polyline(sketch.points, float(sketch.margin), ZONE_HULL_SAMPLES)
            zones.append(
                ConstraintPolygon.make(f"{id_prefix}-zone-{i}", hull, Source.SKETCH_INPUT)
            )
        elif sketch.kind is SketchKind.ROUTE_PATH:
            via_points.extend(geometry.resample_polyline(sketch.points, ROUTE_MAX_POINTS))
        elif sketch.kind is SketchKind.GOAL_MARK:
            goal = sketch.points[0]
    return ConstraintSet(virtual_obstacles=obstacles, keep_out_zones=zones), via_points, goal
