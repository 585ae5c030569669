import math

import numpy as np
import pytest

from sketchnav.constraints import (
    CLOSING_TOLERANCE,
    ROUTE_MAX_POINTS,
    ConstraintPolygon,
    ConstraintSet,
    Fixture,
    SemanticMap,
    Sketch,
    SketchKind,
    SketchValidationError,
    Source,
    UnknownFixtureError,
    compile_sketches,
    expand_location,
    midpoint,
    region_between,
    resolve_fixture,
)
from sketchnav.geometry import dist_point_segment, point_in_polygon


def rand_fixture(rng) -> Fixture:
    return Fixture(
        name=f"f{rng.integers(1_000_000)}",
        center=(float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5))),
        length=float(rng.uniform(0.1, 3.0)),
        width=float(rng.uniform(0.1, 3.0)),
    )


def test_fixture_rejects_nonpositive_extents():
    with pytest.raises(ValueError):
        Fixture("bad", (0, 0), 0.0, 1.0)
    with pytest.raises(ValueError):
        Fixture("bad", (0, 0), 1.0, -0.5)


def test_semantic_map_lookup_case_insensitive():
    smap = SemanticMap([Fixture("Sofa", (1, 1), 2.0, 1.0)])
    assert smap.get("sofa").name == "Sofa"
    assert smap.get("SOFA") is not None
    assert smap.get("table") is None
    assert resolve_fixture(smap, "  sofa ").name == "Sofa"
    with pytest.raises(UnknownFixtureError) as e:
        resolve_fixture(smap, "lamp")
    assert e.value.name == "lamp"


def test_semantic_map_duplicate_names_rejected():
    with pytest.raises(ValueError):
        SemanticMap([Fixture("sofa", (0, 0), 1, 1), Fixture("SOFA", (2, 2), 1, 1)])


def test_semantic_map_json_round_trip():
    smap = SemanticMap([Fixture("sofa", (1.5, 2.0), 2.0, 0.9), Fixture("table", (4, 4), 1.2, 1.2)])
    again = SemanticMap.from_json(smap.to_json())
    assert again.names() == smap.names()
    assert again.get("sofa").center == (1.5, 2.0)


def test_expand_location_zero_is_footprint_identity():
    rng = np.random.default_rng(2)
    for _ in range(200):
        f = rand_fixture(rng)
        rect = expand_location(f, 0.0)
        assert rect == f.footprint()
        xs = [p[0] for p in rect]
        ys = [p[1] for p in rect]
        assert math.isclose(max(xs) - min(xs), f.length)
        assert math.isclose(max(ys) - min(ys), f.width)
        assert math.isclose((max(xs) + min(xs)) / 2, f.center[0])
        assert math.isclose((max(ys) + min(ys)) / 2, f.center[1])


def test_expand_location_monotone_in_r():
    # growing r strictly contains the smaller rectangle
    rng = np.random.default_rng(3)
    for _ in range(200):
        f = rand_fixture(rng)
        r1, r2 = sorted(rng.uniform(0, 2, size=2))
        small = expand_location(f, float(r1))
        big = expand_location(f, float(r2))
        for p in small:
            assert point_in_polygon(p, big)
    with pytest.raises(ValueError):
        expand_location(rand_fixture(rng), -0.1)


def test_midpoint_and_region_between():
    a = Fixture("a", (0, 0), 1.0, 1.0)
    b = Fixture("b", (4, 2), 2.0, 1.0)
    assert midpoint(a, b) == (2.0, 1.0)
    rect = region_between(a, b)
    assert rect == [(-0.5, -0.5), (5.0, -0.5), (5.0, 2.5), (-0.5, 2.5)]
    xs = [p[0] for p in rect]
    ys = [p[1] for p in rect]
    for f in (a, b):
        for x, y in f.footprint():
            assert min(xs) <= x <= max(xs) and min(ys) <= y <= max(ys)


def test_sketch_validation_closed_region():
    with pytest.raises(SketchValidationError):
        compile_sketches([Sketch(SketchKind.CLOSED_REGION, ((0, 0), (1, 0)))])
    # last point misses the first by more than the closing tolerance
    gap = CLOSING_TOLERANCE + 0.1
    bad = Sketch(SketchKind.CLOSED_REGION, ((0, 0), (1, 0), (1, 1), (0, 1), (0, gap)))
    with pytest.raises(SketchValidationError) as e:
        compile_sketches([bad])
    assert e.value.index == 0
    # within tolerance compiles
    ok = Sketch(SketchKind.CLOSED_REGION, ((0, 0), (1, 0), (1, 1), (0, 1), (0, 0.1)))
    cons, _, _ = compile_sketches([ok])
    assert len(cons.virtual_obstacles) == 1


def test_sketch_validation_other_kinds():
    with pytest.raises(SketchValidationError):
        compile_sketches([Sketch(SketchKind.ROUTE_PATH, ((0, 0),))])
    with pytest.raises(SketchValidationError):
        compile_sketches([Sketch(SketchKind.SAFETY_OUTLINE, ((0, 0), (1, 0)))])  # no margin
    with pytest.raises(SketchValidationError):
        compile_sketches([Sketch(SketchKind.SAFETY_OUTLINE, ((0, 0), (1, 0)), margin=0.0)])
    with pytest.raises(SketchValidationError):
        compile_sketches([Sketch(SketchKind.GOAL_MARK, ((0, 0), (1, 1)))])


def test_compile_sketches_ids_and_buckets():
    sketches = [
        Sketch(SketchKind.CLOSED_REGION, ((2, 2), (3, 2), (3, 3), (2, 3), (2, 2))),
        Sketch(SketchKind.SAFETY_OUTLINE, ((5, 5), (6, 5)), margin=0.4),
        Sketch(SketchKind.ROUTE_PATH, ((0, 0), (1, 0), (2, 0))),
        Sketch(SketchKind.GOAL_MARK, ((8, 8),)),
        Sketch(SketchKind.GOAL_MARK, ((9, 9),)),
    ]
    cons, vias, goal = compile_sketches(sketches, id_prefix="ui")
    assert [p.id for p in cons.virtual_obstacles] == ["ui-region-0"]
    assert [p.id for p in cons.keep_out_zones] == ["ui-zone-1"]
    assert goal == (9, 9)  # last mark wins
    assert vias[0] == (0, 0) and vias[-1] == (2, 0)
    assert len(vias) <= ROUTE_MAX_POINTS
    assert all(s.source is Source.SKETCH_INPUT for s in cons.all_polygons())


def test_compile_region_drops_duplicate_closing_point():
    sketches = [Sketch(SketchKind.CLOSED_REGION, ((0, 0), (2, 0), (2, 2), (0, 2), (0, 0)))]
    cons, _, _ = compile_sketches(sketches)
    assert len(cons.virtual_obstacles[0].vertices) == 4


def test_compile_region_degenerate_after_closing():
    # triangle whose third point repeats the first: collapses below 3 vertices
    sketches = [Sketch(SketchKind.CLOSED_REGION, ((0, 0), (1, 0), (0, 0)))]
    with pytest.raises(SketchValidationError):
        compile_sketches(sketches)


def test_safety_outline_zone_contains_polyline_with_margin():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        pts = [(float(rng.uniform(0, 8)), float(rng.uniform(0, 8))) for _ in range(n)]
        margin = float(rng.uniform(0.1, 1.0))
        cons, _, _ = compile_sketches([Sketch(SketchKind.SAFETY_OUTLINE, tuple(pts), margin=margin)])
        zone = cons.keep_out_zones[0]
        verts = zone.vertices
        for p in pts:
            assert point_in_polygon(p, verts)
        # hull edge never cuts inside the true inflation by more than the chord error
        slack = margin * (1.0 - math.cos(math.pi / 32)) + 1e-9
        m = len(verts)
        for k in range(m):
            a, b = verts[k], verts[(k + 1) % m]
            for p in pts:
                assert dist_point_segment(p, a, b) >= margin - slack


def test_route_resampled_to_cap():
    pts = tuple((float(i) * 0.3, 0.0) for i in range(40))
    _, vias, _ = compile_sketches([Sketch(SketchKind.ROUTE_PATH, pts)])
    assert len(vias) == ROUTE_MAX_POINTS
    assert vias[0] == pts[0] and vias[-1] == pts[-1]


def test_constraint_polygon_make_normalizes_winding():
    cw = [(0, 0), (0, 1), (1, 1), (1, 0)]
    poly = ConstraintPolygon.make("p", cw, Source.SKETCH_INPUT)
    from sketchnav.geometry import polygon_area

    assert polygon_area(poly.vertices) > 0
    assert len(poly.parts) >= 1


def test_constraint_set_unique_ids_and_merge():
    a = ConstraintPolygon.make("x", [(0, 0), (1, 0), (1, 1)], Source.SKETCH_INPUT)
    b = ConstraintPolygon.make("x", [(2, 2), (3, 2), (3, 3)], Source.PARSED_INSTRUCTION)
    with pytest.raises(ValueError):
        ConstraintSet(virtual_obstacles=[a], keep_out_zones=[b])
    c = ConstraintPolygon.make("y", [(2, 2), (3, 2), (3, 3)], Source.PARSED_INSTRUCTION)
    merged = ConstraintSet(virtual_obstacles=[a]).merged_with(ConstraintSet(keep_out_zones=[c]))
    assert [p.id for p in merged.all_polygons()] == ["x", "y"]
    assert not merged.is_empty() and ConstraintSet().is_empty()


def test_constraint_set_json_round_trip():
    cons, _, _ = compile_sketches(
        [
            Sketch(SketchKind.CLOSED_REGION, ((1, 1), (2, 1), (2, 2), (1, 2), (1, 1))),
            Sketch(SketchKind.SAFETY_OUTLINE, ((4, 4), (5, 5)), margin=0.3),
        ]
    )
    again = ConstraintSet.from_json(cons.to_json())
    assert [p.id for p in again.all_polygons()] == [p.id for p in cons.all_polygons()]
    for p, q in zip(again.all_polygons(), cons.all_polygons()):
        assert np.allclose(np.asarray(p.vertices), np.asarray(q.vertices))
        assert p.source is q.source


def test_sketch_json_round_trip():
    s = Sketch(SketchKind.SAFETY_OUTLINE, ((1.25, 2.5), (3.0, 4.0)), margin=0.4)
    assert Sketch.from_json(s.to_json()) == s
    s2 = Sketch(SketchKind.GOAL_MARK, ((7.0, 1.0),))
    assert Sketch.from_json(s2.to_json()) == s2
