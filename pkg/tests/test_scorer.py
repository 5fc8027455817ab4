import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import RECORDS, read_record
from ecadkit.converter import convert_record
from ecadkit.dsl import parse_program, serialize_program
from ecadkit.model import ExtentType, Operation, ProgramBuilder
from ecadkit.scorer import (
    Failure,
    InvalidReference,
    PairFeatures,
    Stage,
    Thresholds,
    aggregate,
    chamfer,
    execute_guarded,
    extract_features,
    match_pairs,
    pair_scores,
    reference_features,
    score,
    score_features,
    similarity_matrix,
)


def brute_force_best(S):
    """Best total over every one-to-one assignment, by enumeration."""
    ng, nr = S.shape
    if ng == 0 or nr == 0:
        return 0.0
    k = min(ng, nr)
    best = -1.0
    for rows in itertools.permutations(range(ng), k):
        for cols in itertools.combinations(range(nr), k):
            best = max(best, sum(S[r, c] for r, c in zip(rows, cols)))
    return best


def box_and_hole(with_hole=True, scale=1.0, shift=(0.0, 0.0, 0.0)):
    """2x2x1 block, optionally with a through hole that leaves the bbox unchanged."""
    b = ProgramBuilder()
    pl = b.add_sketchplane(shift, (1, 0, 0), (0, 1, 0))
    p = [(0, 0), (2, 0), (2, 2), (0, 2)]
    sq = [b.add_line(p[i], p[(i + 1) % 4]) for i in range(4)]
    b.add_extrude(b.add_sketch(pl, b.add_profile([b.add_loop(sq)]), size=scale),
                  "new_body", "one_sided", 1.0 * scale)
    if with_hole:
        c = b.add_circle((1.0, 1.0), 0.3)
        b.add_extrude(b.add_sketch(pl, b.add_profile([b.add_loop([c])]), size=scale),
                      "cut", "symmetric", 4.0 * scale)
    return b.build()


def corpus():
    out = [convert_record(read_record(p)) for p in RECORDS]
    return out + [box_and_hole(), box_and_hole(False)]


# execution guard


def test_valid_program_runs(cube_code):
    assert not isinstance(execute_guarded(cube_code), Failure)


def test_truncated_text_is_unfinished_parse_failure(cube_code):
    res = execute_guarded(cube_code[:-20])
    assert isinstance(res, Failure) and res.stage is Stage.PARSE and res.unfinished


def test_emptying_cut_is_build_failure(cube_code):
    text = cube_code + "\n".join([
        "SP = add_sketchplane((-1.0, -1.0, -1.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))",
        "A = add_line((0.0, 0.0), (3.0, 0.0))", "B = add_line((3.0, 0.0), (3.0, 3.0))",
        "C = add_line((3.0, 3.0), (0.0, 3.0))", "D = add_line((0.0, 3.0), (0.0, 0.0))",
        "L = add_loop([A, B, C, D])", "P = add_profile([L])", "S = add_sketch(SP, P)",
        "E = add_extrude(S, cut, one_sided, 3.0)", ""])
    res = execute_guarded(text)
    assert isinstance(res, Failure) and res.stage is Stage.BUILD


def test_open_loop_is_validate_failure(cube_code):
    text = cube_code.replace("Line3 = add_line((0.0, 1.0), (0.0, 0.0))",
                             "Line3 = add_line((0.0, 1.0), (0.0, 0.5))")
    res = execute_guarded(text)
    assert isinstance(res, Failure) and res.stage is Stage.VALIDATE


def test_step_budget_is_enforced(table_program):
    res = execute_guarded(serialize_program(table_program), max_steps=1)
    assert isinstance(res, Failure) and res.stage is Stage.BUILD


# laws


def test_self_score_is_100_on_corpus(table_program, alg1_text):
    programs = corpus() + [table_program, parse_program(alg1_text)]
    for p in programs:
        assert score(serialize_program(p), p).total == pytest.approx(100.0, abs=1e-6)


def test_unrunnable_text_scores_zero(cube_code):
    rep = score("this is ( not code", parse_program(cube_code))
    assert rep.total == 0.0 and rep.R == 0
    assert rep.failure.stage is Stage.PARSE


def test_one_of_two_pairs_scores_55():
    rep = score(serialize_program(box_and_hole(False)), box_and_hole(True))
    assert rep.n_ref == 2 and len(rep.pairs) == 1
    assert rep.total == pytest.approx(55.0, abs=1e-6)


def test_cut_instead_of_join_gives_o_half():
    ref = extract_features(box_and_hole())
    g = replace(ref[0], operation=Operation.CUT)
    s = pair_scores(g, ref[0])
    assert s.O == pytest.approx(0.5) and s.P == 1.0 and s.L == 1.0


def test_loop_offset_along_normal_hits_l_boundary():
    r = extract_features(box_and_hole())[0]
    for t, expected in [(0.25, 0.0), (0.2, 0.2), (0.1, 0.6)]:
        g = replace(r, loop=r.loop + t * r.normal)
        assert pair_scores(g, r).L == pytest.approx(expected, abs=1e-9)


def test_chamfer_of_translated_copy_along_normal():
    a = np.column_stack([np.cos(np.linspace(0, 6, 50)), np.sin(np.linspace(0, 6, 50)), np.zeros(50)])
    assert chamfer(a, a + [0, 0, 0.3]) == pytest.approx(0.3)


def test_scale_and_translation_invariance():
    ref = box_and_hole()
    for s, t in [(10.0, (0, 0, 0)), (0.01, (3.0, -2.0, 5.0))]:
        rep = score(serialize_program(box_and_hole(scale=s, shift=t)), ref)
        assert rep.total == pytest.approx(100.0, abs=1e-6)


def test_features_scale_invariant():
    a = extract_features(box_and_hole())
    b = extract_features(box_and_hole(scale=10.0))
    for fa, fb in zip(a, b):
        assert np.allclose(fa.loop, fb.loop, atol=1e-9)
        assert np.allclose(fa.origin, fb.origin, atol=1e-9)
        assert fa.extents == pytest.approx(fb.extents, abs=1e-9)


def test_table_has_five_features(table_program):
    assert len(extract_features(table_program)) == 5


def test_circle_loop_is_resampled_on_circle():
    f = extract_features(box_and_hole())[1]
    c = f.loop.mean(axis=0)
    d = np.linalg.norm(f.loop - c, axis=1)
    assert np.ptp(d) <= 1e-6
    assert len(f.loop) == 256


def test_reference_must_build():
    with pytest.raises(InvalidReference):
        score("x", "not a program (")


def test_thresholds_change_partial_credit():
    r = extract_features(box_and_hole())[0]
    g = replace(r, loop=r.loop + 0.2 * r.normal)
    assert pair_scores(g, r, Thresholds(distance=0.5)).L == pytest.approx(0.6, abs=1e-9)


# matching


def test_identity_and_reversal():
    feats = extract_features(box_and_hole())
    S = similarity_matrix(feats, feats)
    assert match_pairs(S) == [(0, 0), (1, 1)]
    S = similarity_matrix(feats[::-1], feats)
    assert match_pairs(S) == [(1, 0), (0, 1)]


def test_matching_equals_brute_force_random_matrices():
    rng = np.random.default_rng(4)
    for _ in range(300):
        S = rng.random((int(rng.integers(0, 7)), int(rng.integers(0, 7))))
        got = sum(S[i, j] for i, j in match_pairs(S))
        assert got == pytest.approx(brute_force_best(S), abs=1e-12)
        assert len(match_pairs(S)) == min(S.shape)


def test_matching_equals_brute_force_on_corpus_pairs():
    feats = [f for p in corpus() for f in extract_features(p)]
    rng = np.random.default_rng(6)
    for _ in range(40):
        g = [feats[i] for i in rng.choice(len(feats), int(rng.integers(1, 7)), replace=False)]
        r = [feats[i] for i in rng.choice(len(feats), int(rng.integers(1, 7)), replace=False)]
        S = similarity_matrix(g, r)
        assert sum(S[i, j] for i, j in match_pairs(S)) == pytest.approx(brute_force_best(S), abs=1e-12)


def test_total_bounds_and_deletion_monotone():
    progs = corpus()
    rng = np.random.default_rng(8)
    for _ in range(30):
        ref = progs[int(rng.integers(0, len(progs)))]
        gen = progs[int(rng.integers(0, len(progs)))]
        rf, gf = reference_features(ref), extract_features(gen)
        full = score_features(gf, rf)
        assert 0.0 <= full.total <= 100.0
        for p in full.pairs:
            fewer = [f for k, f in enumerate(gf) if k != p.gen_index]
            assert score_features(fewer, rf).total <= full.total + 1e-9


def test_surplus_generated_pairs_are_reported():
    ref = reference_features(box_and_hole(False))
    gen = extract_features(box_and_hole(True))
    rep = score_features(gen, ref)
    assert len(rep.pairs) == 1 and len(rep.unmatched_gen) == 1


# aggregate


def test_aggregate_counts(cube_code):
    ref = parse_program(cube_code)
    reps = [score(cube_code, ref), score(cube_code[:-15], ref), score("bogus(1)", ref)]
    agg = aggregate(reps)
    assert (agg.n, agg.executable, agg.unfinished, agg.run_with_errors, agg.completely_correct) \
        == (3, 1, 1, 1, 1)
    assert agg.mean_total == pytest.approx(100 / 3)


def test_pair_features_are_plain_data():
    f = extract_features(box_and_hole())[0]
    assert isinstance(f, PairFeatures)
    assert f.operation is Operation.NEW_BODY and f.extent_type is ExtentType.ONE_SIDED
    assert abs(np.linalg.norm(f.normal) - 1) < 1e-12
    assert math.isfinite(f.extents[0])
