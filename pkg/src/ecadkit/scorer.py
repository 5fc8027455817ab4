"""Deterministic scoring of generated CAD code against a reference program.

total = 10 R + (90 / n_ref) * sum over matched pairs of (0.2 P + 0.2 O + 0.6 L)

R is executability; P compares sketch placement, O the extrusion, L the loop
shape.  Both models are normalized to their own bounding box (center at the
origin, diagonal 1) before comparing, so only proportions matter.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .curves import sample_curves
from .dsl import DSLParseError, parse_program
from .kernel.build import build_program
from .kernel.mesh import SolidMesh, mesh_metrics
from .model import CADProgram, ExtentType, InvalidProgram, Operation, check_program, extract_pairs

LOOP_POINTS = 256
NORMAL_THRESHOLD_DEG = 45.0
DISTANCE_THRESHOLD = 0.25
TIME_BUDGET_S = 30.0
MAX_STEPS = 1000
COMPLETE_THRESHOLD = 99.5
W_P, W_O, W_L = 0.2, 0.2, 0.6


class Stage(str, Enum):
    PARSE = "Parse"
    VALIDATE = "Validate"
    BUILD = "Build"


class InvalidReference(ValueError):
    pass


@dataclass(frozen=True)
class Failure:
    stage: Stage
    detail: str
    unfinished: bool = False  # parse failed because the text ends mid-statement


@dataclass(frozen=True)
class Execution:
    program: CADProgram
    mesh: SolidMesh


def execute_guarded(text: str, time_budget: float = TIME_BUDGET_S,
                    max_steps: int = MAX_STEPS) -> Execution | Failure:
    """Parse, validate and build; every failure comes back as a value."""
    deadline = time.monotonic() + time_budget
    try:
        program = parse_program(text)
    except DSLParseError as exc:
        return Failure(Stage.PARSE, str(exc), exc.truncated)
    except Exception as exc:
        return Failure(Stage.PARSE, f"{type(exc).__name__}: {exc}")
    try:
        check_program(program)
    except InvalidProgram as exc:
        return Failure(Stage.VALIDATE, str(exc))
    except Exception as exc:
        return Failure(Stage.VALIDATE, f"{type(exc).__name__}: {exc}")
    try:
        mesh, _ = build_program(program, deadline=deadline, max_steps=max_steps)
    except Exception as exc:
        return Failure(Stage.BUILD, f"{type(exc).__name__}: {exc}")
    if mesh.is_empty:  # nothing was modelled, so nothing ran in any useful sense
        return Failure(Stage.BUILD, "program produced no solid")
    return Execution(program, mesh)


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True, eq=False)
class PairFeatures:
    origin: np.ndarray  # placed sketch origin, normalized frame
    normal: np.ndarray
    operation: Operation
    extent_type: ExtentType
    extents: tuple[float, float]  # normalized extent_one, extent_two
    loop: np.ndarray  # (M, 3) normalized points on the loop

    @property
    def loop_centroid(self) -> np.ndarray:
        return self.loop.mean(axis=0)


def normalization(mesh: SolidMesh) -> tuple[np.ndarray, float]:
    """Bounding-box center and diagonal of a mesh."""
    lo, hi = (np.asarray(x) for x in mesh_metrics(mesh).aabb)
    diag = float(np.linalg.norm(hi - lo))
    return 0.5 * (lo + hi), diag if diag > 0 else 1.0


def extract_features(program: CADProgram, mesh: SolidMesh | None = None,
                     m: int = LOOP_POINTS) -> list[PairFeatures]:
    pairs = extract_pairs(program)
    if not pairs:
        return []
    if mesh is None:
        mesh, _ = build_program(program)
    center, diag = normalization(mesh)
    out = []
    for pe in pairs:
        sk = pe.sketch
        uv = sample_curves(pe.loop.curves, m)
        pts = (sk.to_world(uv) - center) / diag
        out.append(PairFeatures(
            (sk.origin_world() - center) / diag,
            np.asarray(sk.plane.normal, dtype=float),
            pe.extrusion.operation,
            pe.extrusion.extent_type,
            (pe.extrusion.extent_one / diag, pe.extrusion.extent_two / diag),
            pts,
        ))
    return out


# ---------------------------------------------------------------------------
# pair similarity


@dataclass(frozen=True)
class Thresholds:
    normal_deg: float = NORMAL_THRESHOLD_DEG
    distance: float = DISTANCE_THRESHOLD


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def normal_angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between plane normals, ignoring orientation."""
    c = abs(float(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.degrees(math.acos(min(1.0, c)))


def placement_distance(g: PairFeatures, r: PairFeatures) -> float:
    """Offset along the reference normal plus in-plane offset of the loops."""
    n = r.normal / np.linalg.norm(r.normal)
    along = abs(float(n @ (g.origin - r.origin)))
    d = g.loop_centroid - r.loop_centroid
    in_plane = float(np.linalg.norm(d - (d @ n) * n))
    return along + in_plane


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-point distance."""
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return 0.5 * (float(da.mean()) + float(db.mean()))


@dataclass(frozen=True)
class PairScore:
    P: float
    O: float  # noqa: E741 - factor names follow the score formula
    L: float

    @property
    def value(self) -> float:
        return W_P * self.P + W_O * self.O + W_L * self.L


def pair_scores(g: PairFeatures, r: PairFeatures, th: Thresholds = Thresholds()) -> PairScore:
    theta = normal_angle_deg(g.normal, r.normal)
    P = _clamp01(1 - theta / th.normal_deg) * _clamp01(1 - placement_distance(g, r) / th.distance)
    e_g, e_r = g.extents[0], r.extents[0]
    O = 0.5 * (g.operation == r.operation) + 0.3 * (g.extent_type == r.extent_type) \
        + 0.2 * _clamp01(1 - abs(e_g - e_r) / max(abs(e_r), 1e-6))
    L = _clamp01(1 - chamfer(g.loop, r.loop) / th.distance)
    return PairScore(P, O, L)


def similarity_matrix(gen, ref, th: Thresholds = Thresholds()) -> np.ndarray:
    S = np.zeros((len(gen), len(ref)))
    for i, g in enumerate(gen):
        for j, r in enumerate(ref):
            S[i, j] = pair_scores(g, r, th).value
    return S


def match_pairs(S: np.ndarray) -> list[tuple[int, int]]:
    """Optimal one-to-one assignment maximizing total similarity."""
    if S.size == 0:
        return []
    rows, cols = linear_sum_assignment(S, maximize=True)
    return sorted(zip(rows.tolist(), cols.tolist()), key=lambda rc: rc[1])


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class MatchedPair:
    gen_index: int
    ref_index: int
    P: float
    O: float  # noqa: E741
    L: float


@dataclass
class ScoreReport:
    R: int
    total: float
    n_ref: int
    n_gen: int = 0
    pairs: list[MatchedPair] = field(default_factory=list)
    unmatched_gen: list[int] = field(default_factory=list)
    failure: Failure | None = None

    def as_dict(self) -> dict:
        return {
            "R": self.R, "total": self.total, "n_ref": self.n_ref, "n_gen": self.n_gen,
            "pairs": [{"gen": p.gen_index, "ref": p.ref_index, "P": p.P, "O": p.O, "L": p.L}
                      for p in self.pairs],
            "unmatched_gen": self.unmatched_gen,
            "failure": None if self.failure is None else {
                "stage": self.failure.stage.value, "detail": self.failure.detail,
                "unfinished": self.failure.unfinished},
        }


def reference_features(ref: CADProgram | str, m: int = LOOP_POINTS) -> list[PairFeatures]:
    if isinstance(ref, str):
        res = execute_guarded(ref)
        if isinstance(res, Failure):
            raise InvalidReference(f"reference does not run: {res.stage.value}: {res.detail}")
        ref, mesh = res.program, res.mesh
    else:
        try:
            check_program(ref)
            mesh, _ = build_program(ref)
        except Exception as exc:
            raise InvalidReference(f"reference does not build: {exc}") from exc
    feats = extract_features(ref, mesh, m)
    if not feats:
        raise InvalidReference("reference has no loop-extrusion pairs")
    return feats


def score_features(gen: list[PairFeatures], ref: list[PairFeatures],
                   th: Thresholds = Thresholds()) -> ScoreReport:
    n_ref = len(ref)
    S = similarity_matrix(gen, ref, th)
    matched = []
    acc = 0.0
    for i, j in match_pairs(S):
        ps = pair_scores(gen[i], ref[j], th)
        matched.append(MatchedPair(i, j, ps.P, ps.O, ps.L))
        acc += ps.value
    total = 10.0 + 90.0 / n_ref * acc
    total = min(100.0, max(0.0, total))
    used = {p.gen_index for p in matched}
    return ScoreReport(1, total, n_ref, len(gen), matched,
                       [i for i in range(len(gen)) if i not in used])


def score(gen_text: str, ref: CADProgram | str, th: Thresholds = Thresholds(),
          time_budget: float = TIME_BUDGET_S, max_steps: int = MAX_STEPS,
          m: int = LOOP_POINTS) -> ScoreReport:
    """Score generated text against a reference program (or reference text)."""
    ref_feats = reference_features(ref, m)
    res = execute_guarded(gen_text, time_budget, max_steps)
    if isinstance(res, Failure):
        return ScoreReport(0, 0.0, len(ref_feats), failure=res)
    gen_feats = extract_features(res.program, res.mesh, m)
    return score_features(gen_feats, ref_feats, th)


@dataclass
class Aggregate:
    n: int = 0
    mean_total: float = 0.0
    executable: int = 0
    unfinished: int = 0
    run_with_errors: int = 0
    completely_correct: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def aggregate(reports: list[ScoreReport]) -> Aggregate:
    n = len(reports)
    agg = Aggregate(n=n)
    if not n:
        return agg
    agg.mean_total = float(np.mean([r.total for r in reports]))
    for r in reports:
        if r.R:
            agg.executable += 1
        elif r.failure is not None and r.failure.unfinished:
            agg.unfinished += 1
        else:
            agg.run_with_errors += 1
        if r.total >= COMPLETE_THRESHOLD:
            agg.completely_correct += 1
    return agg
