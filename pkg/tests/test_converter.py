import math
import shlex
import sys

import numpy as np
import pytest

from conftest import RECORDS, REJECTS, read_record
from ecadkit.converter import (
    DatasetStats,
    DegenerateArc,
    FilterPolicy,
    InconsistentPlane,
    MalformedRecord,
    UnsupportedEntity,
    apply_filter,
    arc_params,
    arc_reparam,
    convert_record,
    dataset_stats,
    deepcad_to_neutral,
    load_records,
    refit_arc,
    run_annotation_hook,
)
from ecadkit.dsl import parse_program, serialize_program
from ecadkit.kernel import build_program, mesh_metrics, occupancy_grid
from ecadkit.model import extract_pairs, validate_program
from voxel import voxel_agreement


def sq_record(side=1.0, depth=1.0, op="new_body"):
    p = [(0, 0), (side, 0), (side, side), (0, side)]
    loop = [{"type": "line", "start": p[i], "end": p[(i + 1) % 4]} for i in range(4)]
    return {"id": "sq", "sequence": [
        {"type": "sketch", "name": "s", "plane": {"origin": [0, 0, 0], "x_axis": [1, 0, 0],
                                                  "y_axis": [0, 1, 0], "z_axis": [0, 0, 1]},
         "profile": [loop]},
        {"type": "extrude", "sketch": "s", "operation": op, "extent_type": "one_sided",
         "extent_one": depth}]}


# arc re-parameterization


def test_semicircle_ccw():
    arc = arc_reparam((0, 0), 1, 0, math.pi, True)
    assert arc.start == pytest.approx((1, 0))
    assert arc.end == pytest.approx((-1, 0), abs=1e-15)
    assert arc.mid == pytest.approx((0, 1), abs=1e-15)


def test_semicircle_cw_bulges_down():
    assert arc_reparam((0, 0), 1, 0, math.pi, False).mid == pytest.approx((0, -1), abs=1e-15)


def test_quarter_arc_mid():
    arc = arc_reparam((0, 0), 1, 0, math.pi / 2, True)
    assert arc.mid == pytest.approx((math.cos(math.pi / 4), math.sin(math.pi / 4)))


def test_degenerate_arc():
    with pytest.raises(DegenerateArc):
        arc_reparam((0, 0), 1, 0.3, 0.3, True)
    with pytest.raises(DegenerateArc):
        arc_reparam((0, 0), 0.0, 0, 1, True)


def test_arc_round_trip_random():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(2000):
        c = rng.uniform(-10, 10, 2)
        r = float(rng.uniform(0.01, 10))
        a0 = float(rng.uniform(-10, 10))
        a1 = a0 + float(rng.uniform(0.01, 6.2)) * (1 if rng.random() < 0.5 else -1)
        ccw = bool(rng.random() < 0.5)
        center, radius = refit_arc(arc_reparam(c, r, a0, a1, ccw))
        worst = max(worst, abs(center[0] - c[0]), abs(center[1] - c[1]), abs(radius - r))
    assert worst <= 1e-9


def test_arc_params_inverts_reparam():
    c, r, a0, a1, ccw = arc_params(arc_reparam((0.5, -1.0), 2.0, 0.2, 1.7, False))
    assert c == pytest.approx((0.5, -1.0)) and r == pytest.approx(2.0)
    assert not ccw
    assert math.cos(a0) == pytest.approx(math.cos(0.2)) and math.sin(a1) == pytest.approx(math.sin(1.7))


# record conversion


def test_square_record_volume():
    program = convert_record(sq_record(2.0, 0.5))
    assert mesh_metrics(build_program(program)[0]).volume == pytest.approx(2.0, rel=0.02)


def test_spline_rejected():
    rec = read_record([p for p in REJECTS if "spline" in p.name][0])
    with pytest.raises(UnsupportedEntity):
        convert_record(rec)


def test_inconsistent_z_axis():
    rec = sq_record()
    rec["sequence"][0]["plane"]["z_axis"] = [1, 0, 0]
    with pytest.raises(InconsistentPlane):
        convert_record(rec)


def test_missing_field_is_malformed():
    rec = sq_record()
    del rec["sequence"][1]["extent_one"]
    with pytest.raises(MalformedRecord):
        convert_record(rec)


def test_unknown_sketch_reference():
    rec = sq_record()
    rec["sequence"][1]["sketch"] = "nope"
    with pytest.raises(MalformedRecord):
        convert_record(rec)


def test_record_annotation_lands_on_first_statement():
    rec = dict(sq_record(), annotation="a plain block")
    assert convert_record(rec).statements[0].annotation == "a plain block"


def test_loop_curves_are_flipped_head_to_tail():
    rec = sq_record()
    loop = rec["sequence"][0]["profile"][0]
    loop[0] = {"type": "line", "start": loop[0]["end"], "end": loop[0]["start"]}
    loop[2] = {"type": "line", "start": loop[2]["end"], "end": loop[2]["start"]}
    program = convert_record(rec)
    assert validate_program(program) == []
    assert mesh_metrics(build_program(program)[0]).volume == pytest.approx(1.0)


def test_loop_grouping_preserved():
    program = convert_record(read_record([p for p in RECORDS if "three_holes" in p.name][0]))
    assert len(extract_pairs(program)) == 1 + 3


def _occupancy(record, n=40):
    lo, hi = np.array([-1.5, -1.5, -0.5]), np.array([1.5, 1.5, 1.0])
    axes = [np.linspace(lo[i], hi[i], n) for i in range(3)]
    return occupancy_grid(build_program(convert_record(record))[0], *axes)


def test_cw_and_ccw_slots_occupy_the_same_cells():
    by = {p.stem: read_record(p) for p in RECORDS}
    a = _occupancy(by["04_slot_ccw"])
    b = _occupancy(by["05_slot_cw"])
    assert np.mean(a == b) >= 0.995


@pytest.mark.parametrize("path", RECORDS, ids=[p.stem for p in RECORDS])
def test_fixture_matches_oracle_coarse(path):
    assert voxel_agreement(read_record(path), n=24).fraction >= 0.995


def test_fixtures_cover_arcs_extents_and_ops():
    ops, exts, arcs = set(), set(), set()
    for p in RECORDS:
        for item in read_record(p)["sequence"]:
            if item["type"] == "extrude":
                ops.add(item["operation"])
                exts.add(item["extent_type"])
            else:
                arcs |= {e.get("ccw", True) for loop in item["profile"] for e in loop
                         if e["type"] == "arc"}
    assert len(RECORDS) >= 20
    assert ops == {"new_body", "join", "cut", "intersect"}
    assert exts == {"one_sided", "symmetric", "two_sided"}
    assert arcs == {True, False}


def test_load_records_formats(tmp_path):
    one = tmp_path / "one.json"
    one.write_text('{"id": "a", "sequence": []}')
    lines = tmp_path / "many.jsonl"
    lines.write_text('{"id": "a", "sequence": []}\n{"id": "b", "sequence": []}\n')
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert [r["id"] for r in load_records(one)] == ["a"]
    assert [r["id"] for r in load_records(lines)] == ["a", "b"]
    assert load_records(empty) == []


# DeepCAD-style adapter


def _pt(x, y):
    return {"x": x, "y": y, "z": 0.0}


def deepcad_half_disc(normal_z):
    """Half disc below the x axis: a cw arc (normal -z) or the ccw equivalent."""
    if normal_z > 0:
        arc = {"type": "Arc3D", "center_point": _pt(0, 0), "radius": 1.0,
               "start_angle": 0.0, "end_angle": math.pi, "reference_vector": _pt(-1, 0),
               "normal": {"x": 0, "y": 0, "z": 1.0}}
    else:
        arc = {"type": "Arc3D", "center_point": _pt(0, 0), "radius": 1.0,
               "start_angle": 0.0, "end_angle": math.pi, "reference_vector": _pt(1, 0),
               "normal": {"x": 0, "y": 0, "z": -1.0}}
    line = {"type": "Line3D", "start_point": _pt(-1, 0), "end_point": _pt(1, 0)}
    sketch = {"type": "Sketch", "transform": {"origin": _pt(0, 0), "x_axis": _pt(1, 0),
                                              "y_axis": _pt(0, 1),
                                              "z_axis": {"x": 0, "y": 0, "z": 1}},
              "profiles": {"p0": {"loops": [{"profile_curves": [line, arc]}]}}}
    ext = {"type": "ExtrudeFeature", "profiles": [{"sketch": "sk", "profile": "p0"}],
           "operation": "NewBodyFeatureOperation", "extent_type": "OneSideFeatureExtentType",
           "extent_one": {"distance": {"value": 0.5}}}
    return {"entities": {"sk": sketch, "ex": ext},
            "sequence": [{"entity": "sk"}, {"entity": "ex"}]}


@pytest.mark.parametrize("normal_z", [1.0, -1.0])
def test_deepcad_half_disc_lies_below_axis(normal_z):
    rec = deepcad_to_neutral(deepcad_half_disc(normal_z), "hd")
    m = mesh_metrics(build_program(convert_record(rec))[0])
    assert m.aabb[1][1] == pytest.approx(0.0, abs=1e-12)
    assert m.aabb[0][1] == pytest.approx(-1.0, abs=1e-3)
    assert m.volume == pytest.approx(math.pi / 4, rel=0.01)


def test_deepcad_spline_rejected():
    data = deepcad_half_disc(1.0)
    data["entities"]["sk"]["profiles"]["p0"]["loops"][0]["profile_curves"].append(
        {"type": "BSpline3D"})
    with pytest.raises(UnsupportedEntity):
        deepcad_to_neutral(data)


# filtering


def test_tiny_cube_kept():
    res = apply_filter(convert_record(sq_record()))
    assert res.keep and res.reason is None


def test_overlong_program_dropped():
    rec = read_record([p for p in REJECTS if "overlong" in p.name][0])
    program = convert_record(rec)
    assert len(serialize_program(program).encode()) > 4 * 1536
    assert apply_filter(program).reason == "TooLong"


def test_emptying_cut_dropped():
    rec = read_record([p for p in REJECTS if "cut_everything" in p.name][0])
    assert apply_filter(convert_record(rec)).reason == "BuildFailure"


def test_filter_threshold_is_configurable():
    program = convert_record(sq_record())
    assert apply_filter(program, FilterPolicy(max_tokens=10)).reason == "TooLong"
    with pytest.raises(ValueError):
        FilterPolicy(max_tokens=0)


def test_filter_is_order_independent():
    programs = [convert_record(read_record(p)) for p in RECORDS[:6] + REJECTS[:2]]
    fwd = [apply_filter(p).keep for p in programs]
    back = [apply_filter(p).keep for p in reversed(programs)][::-1]
    assert fwd == back


# statistics


def _pairs_program(n):
    rec = sq_record()
    for k in range(1, n):
        rec["sequence"].append(dict(rec["sequence"][1], operation="join", extent_one=1.0 + k))
    return convert_record(rec)


def test_pair_histogram():
    stats = dataset_stats([_pairs_program(1), _pairs_program(1), _pairs_program(2)])
    assert dict(stats.pair_hist) == {1: 2, 2: 1}
    assert sum(stats.pair_hist.values()) == stats.n_programs == 3


def test_empty_stream():
    s = dataset_stats([])
    assert s.n_programs == 0 and s.total_pairs == 0 and not s.pair_hist


def test_curves_and_constraints_counted():
    text = "\n".join(["a = add_line((0,0),(1,0))", "b = add_line((1,0),(1,1))",
                      "c = add_line((1,1),(0,1))", "d = add_line((0,1),(0,0))",
                      "make_horizontal(a)", "make_horizontal(c)", "make_vertical(b)",
                      "make_vertical(d)", "make_parallel(a, c)", "make_perpendicular(a, b)"])
    s = dataset_stats([parse_program(text)])
    assert dict(s.curve_hist) == {4: 1} and dict(s.constraint_hist) == {6: 1}


def test_stats_merge_is_associative():
    ps = [_pairs_program(k) for k in (1, 2, 2, 3)]
    whole = dataset_stats(ps).as_dict()
    parts = dataset_stats(ps[:1]).merge(dataset_stats(ps[1:3])).merge(dataset_stats(ps[3:]))
    assert parts.as_dict() == whole
    assert DatasetStats().merge(dataset_stats(ps)).as_dict() == whole


# annotation hook


def _py(code):
    return f"{shlex.quote(sys.executable)} -c {shlex.quote(code)}"


def test_annotation_hook_adds_comment():
    program = convert_record(sq_record())
    hook = _py("import sys; sys.stdout.write('# a unit block\\n' + sys.stdin.read())")
    out = run_annotation_hook(hook, program)
    assert out.statements[0].annotation == "a unit block"
    assert out.without_annotations() == program.without_annotations()


def test_annotation_hook_cannot_change_geometry():
    program = convert_record(sq_record())
    hook = _py("import sys; sys.stdout.write(sys.stdin.read().replace('1.0', '2.0'))")
    assert run_annotation_hook(hook, program) == program


def test_failing_hook_keeps_program():
    program = convert_record(sq_record())
    assert run_annotation_hook(_py("raise SystemExit(3)"), program) == program
    assert run_annotation_hook("/nonexistent/hook", program) == program
