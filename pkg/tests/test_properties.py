import functools
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from programs import random_program, random_sketch
from ecadkit.constraints import ConstraintSystem, matrix_rank
from ecadkit.converter import arc_params, arc_reparam
from ecadkit.curves import Line, distance
from ecadkit.dsl import parse_program, serialize_program
from ecadkit.kernel import extrude, is_watertight, mesh_metrics
from ecadkit.model import (
    ExtentType,
    Extrusion,
    Loop,
    Operation,
    Sketch,
    classify_profile,
    make_sketchplane,
)
from ecadkit.render import ISO_AXIS, sample_view_dir
from ecadkit.scorer import extract_features, score_features

seeds = st.integers(0, 2**32 - 1)
finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_serialize_parse_round_trip(seed):
    program = random_program(np.random.default_rng(seed))
    text = serialize_program(program)
    back = parse_program(text)
    assert back == program
    assert serialize_program(back) == text


@settings(max_examples=300, deadline=None)
@given(cx=finite, cy=finite, r=st.floats(1e-2, 1e3), a0=st.floats(-10, 10),
       sweep=st.floats(0.01, 2 * math.pi - 0.01), ccw=st.booleans())
def test_arc_reparam_round_trip(cx, cy, r, a0, sweep, ccw):
    a1 = a0 + sweep if ccw else a0 - sweep
    arc = arc_reparam((cx, cy), r, a0, a1, ccw)
    center, r2, b0, b1, ccw2 = arc_params(arc)
    tol = 1e-9 * max(1.0, abs(cx), abs(cy), r)
    assert ccw2 == ccw
    assert distance(center, (cx, cy)) <= 1e4 * tol  # the circumcenter is conditioned by r
    back = arc_reparam(center, r2, b0, b1, ccw2)
    for p, q in zip((arc.start, arc.end, arc.mid), (back.start, back.end, back.mid)):
        assert distance(p, q) <= 1e4 * tol


vec3 = st.tuples(*[st.floats(-10, 10, allow_nan=False)] * 3)


@settings(max_examples=200, deadline=None)
@given(vec3, vec3, vec3)
def test_sketchplane_is_orthonormal(o, x, y):
    xa, ya = np.array(x), np.array(y)
    if np.linalg.norm(xa) < 1e-3 or np.linalg.norm(ya) < 1e-3:
        return
    if np.linalg.norm(np.cross(xa / np.linalg.norm(xa), ya / np.linalg.norm(ya))) < 1e-3:
        return
    pl = make_sketchplane(o, x, y)
    frame = np.array([pl.x_axis, pl.y_axis, pl.normal])
    assert np.allclose(frame @ frame.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(frame) > 0


def _square(c, s):
    p = [(c[0] - s, c[1] - s), (c[0] + s, c[1] - s), (c[0] + s, c[1] + s), (c[0] - s, c[1] + s)]
    return Loop(tuple(Line(p[i], p[(i + 1) % 4]) for i in range(4)))


@settings(max_examples=100, deadline=None)
@given(st.permutations(range(4)))
def test_classify_profile_ignores_loop_order(perm):
    # nested squares 4 > 2 > 1 plus a separate island
    loops = [_square((0, 0), 4), _square((0, 0), 2), _square((0, 0), 1), _square((10, 0), 1)]
    ref = classify_profile(loops)
    got = classify_profile([loops[i] for i in perm])
    assert [got.depths[perm.index(k)] for k in range(4)] == list(ref.depths) == [0, 1, 2, 0]


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(0, 7))
def test_adding_constraints_never_adds_freedom(seed, k):
    curves, cons = random_sketch(np.random.default_rng(seed), n_constraints=8)
    sub = ConstraintSystem(curves, cons[:k])
    full = ConstraintSystem(curves, cons[:k + 1])
    x = full.x0
    dof_sub = sub.n_params - (matrix_rank(sub.jacobian(x)) if cons[:k] else 0)
    dof_full = full.n_params - matrix_rank(full.jacobian(x))
    assert dof_full <= dof_sub


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 12), st.floats(0.1, 5), st.floats(0.05, 3), seeds)
def test_convex_prism_is_watertight_with_exact_volume(n, r, h, seed):
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * math.pi, n))
    ang = np.unique(np.round(ang, 3))
    if len(ang) < 3:
        return
    pts = [(float(r * math.cos(a)), float(r * math.sin(a))) for a in ang]
    area = 0.5 * abs(sum(p[0] * q[1] - q[0] * p[1] for p, q in zip(pts, pts[1:] + pts[:1])))
    if area < 1e-3 * r * r:
        return
    loop = Loop(tuple(Line(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts))))
    plane = make_sketchplane((0, 0, 0), (1, 0, 0), (0, 1, 0))
    mesh = extrude(Sketch(plane, classify_profile([loop])),
                   Extrusion(Operation.NEW_BODY, ExtentType.ONE_SIDED, h))
    assert is_watertight(mesh)
    assert abs(mesh_metrics(mesh).volume - area * h) <= 1e-9 * max(1.0, area * h)


@settings(max_examples=200, deadline=None)
@given(seeds, st.floats(0, 89))
def test_view_direction_inside_cap(seed, deg):
    d = sample_view_dir(seed, math.radians(deg))
    assert abs(np.linalg.norm(d) - 1) < 1e-12
    assert math.acos(min(1.0, float(d @ ISO_AXIS))) <= math.radians(deg) + 1e-9


@functools.lru_cache(maxsize=1)
def corpus_features():
    from test_scorer import corpus
    return [f for p in corpus() for f in extract_features(p)]


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_total_stays_within_bounds(seed):
    rng = np.random.default_rng(seed)
    feats = corpus_features()

    def pick():
        return [feats[i] for i in rng.choice(len(feats), int(rng.integers(0, 6)), replace=False)]

    gen, ref = pick(), pick()
    if not ref:
        return
    rep = score_features(gen, ref)
    assert 0.0 <= rep.total <= 100.0
    assert len(rep.pairs) == min(len(gen), len(ref))
