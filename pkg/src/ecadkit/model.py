"""In-memory CAD program model.

A program is an ordered tuple of statements.  Statements refer to earlier
statements by index, which keeps the model free of identifier names; the DSL
layer owns naming.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np

from .curves import (
    EPS_DEGENERATE,
    Arc,
    Circle,
    Curve,
    Line,
    Vec2,
    Vec3,
    curve_bbox,
    distance,
    endpoints,
    is_degenerate,
    tessellate_curve,
)

EPS_JOIN = 1e-6
DEFAULT_CHORD_REL = 0.005


class ModelError(ValueError):
    pass


class DegenerateAxes(ModelError):
    pass


class DanglingReference(ModelError):
    pass


class CrossingLoops(ModelError):
    def __init__(self, i: int, j: int, message: str = ""):
        super().__init__(message or f"loops {i} and {j} cross or coincide")
        self.pair = (i, j)


class InvalidProgram(ModelError):
    def __init__(self, issues: list["Issue"]):
        super().__init__("; ".join(str(i) for i in issues[:5]))
        self.issues = issues


class Operation(str, Enum):
    NEW_BODY = "new_body"
    JOIN = "join"
    CUT = "cut"
    INTERSECT = "intersect"


class ExtentType(str, Enum):
    ONE_SIDED = "one_sided"
    SYMMETRIC = "symmetric"
    TWO_SIDED = "two_sided"


# ---------------------------------------------------------------------------
# geometric values


def _vec(v, n: int) -> tuple:
    out = tuple(float(x) for x in v)
    if len(out) != n:
        raise ValueError(f"expected {n} components, got {len(out)}")
    return out


def _norm3(v: Sequence[float]) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def _cross3(a: Sequence[float], b: Sequence[float]) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot3(a: Sequence[float], b: Sequence[float]) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@dataclass(frozen=True)
class SketchPlane:
    """Orthonormal sketch frame.  Build it with make_sketchplane."""

    origin: Vec3
    x_axis: Vec3
    y_axis: Vec3

    @property
    def normal(self) -> Vec3:
        return _cross3(self.x_axis, self.y_axis)

    def to_world(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return (
            np.asarray(self.origin)
            + uv[..., 0:1] * np.asarray(self.x_axis)
            + uv[..., 1:2] * np.asarray(self.y_axis)
        )


def make_sketchplane(origin, x_axis, y_axis, normal=None) -> SketchPlane:
    """Normalize the axes, re-orthogonalize y against x, derive the normal.

    An explicit normal is accepted for compatibility and only checked
    against x cross y.
    """
    o = _vec(origin, 3)
    x = _vec(x_axis, 3)
    y = _vec(y_axis, 3)
    nx, ny = _norm3(x), _norm3(y)
    if not (nx > 0 and ny > 0) or not all(math.isfinite(c) for c in x + y + o):
        raise DegenerateAxes("sketch plane axes must be finite and nonzero")
    x = (x[0] / nx, x[1] / nx, x[2] / nx)
    yn = (y[0] / ny, y[1] / ny, y[2] / ny)
    if _norm3(_cross3(x, yn)) <= 1e-6:
        raise DegenerateAxes("sketch plane axes are parallel")
    d = _dot3(x, yn)
    y = (yn[0] - d * x[0], yn[1] - d * x[1], yn[2] - d * x[2])
    ny = _norm3(y)
    y = (y[0] / ny, y[1] / ny, y[2] / ny)
    plane = SketchPlane(o, x, y)
    if normal is not None:
        n = _vec(normal, 3)
        nn = _norm3(n)
        if nn == 0 or _dot3(n, plane.normal) / nn < math.cos(math.radians(1.0)):
            warnings.warn("sketch plane normal disagrees with x_axis cross y_axis; ignored",
                          stacklevel=2)
    return plane


@dataclass(frozen=True)
class Loop:
    curves: tuple[Curve, ...]


@dataclass(frozen=True)
class Profile:
    loops: tuple[Loop, ...]
    depths: tuple[int, ...]
    # index of the innermost enclosing loop, -1 for outer loops
    parents: tuple[int, ...]


@dataclass(frozen=True)
class Sketch:
    plane: SketchPlane
    profile: Profile
    position: Vec2 = (0.0, 0.0)
    size: float = 1.0

    def to_world(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        placed = uv * self.size + np.asarray(self.position)
        return self.plane.to_world(placed)

    def origin_world(self) -> np.ndarray:
        return self.to_world(np.zeros(2))


@dataclass(frozen=True)
class Extrusion:
    operation: Operation
    extent_type: ExtentType
    extent_one: float
    extent_two: float = 0.0

    def span(self) -> tuple[float, float]:
        """Signed (low, high) offsets along the sketch normal."""
        e1, e2 = self.extent_one, self.extent_two
        if self.extent_type is ExtentType.ONE_SIDED:
            lo, hi = 0.0, e1
        elif self.extent_type is ExtentType.SYMMETRIC:
            lo, hi = -abs(e1) / 2.0, abs(e1) / 2.0
        else:
            lo, hi = -e2, e1
        return (min(lo, hi), max(lo, hi))


# ---------------------------------------------------------------------------
# constraints


POINT_SELECTORS = {
    "line": ("start", "end"),
    "arc": ("start", "end", "mid", "center"),
    "circle": ("center",),
}


@dataclass(frozen=True)
class PointRef:
    curve: int
    which: str


PointArg = Union[PointRef, Vec2]


@dataclass(frozen=True)
class Horizontal:
    line: int
    command = "make_horizontal"


@dataclass(frozen=True)
class Vertical:
    line: int
    command = "make_vertical"


@dataclass(frozen=True)
class FixSize:
    curve: int
    size: float
    command = "fix_size"


@dataclass(frozen=True)
class Coincident:
    point_a: PointArg
    point_b: PointArg
    command = "make_coincident"


@dataclass(frozen=True)
class Parallel:
    line_a: int
    line_b: int
    command = "make_parallel"


@dataclass(frozen=True)
class Perpendicular:
    line_a: int
    line_b: int
    command = "make_perpendicular"


@dataclass(frozen=True)
class Tangent:
    curve_a: int
    curve_b: int
    command = "make_tangent"


@dataclass(frozen=True)
class Mirror:
    curve_a: int
    curve_b: int
    axis: int
    command = "make_mirror"


@dataclass(frozen=True)
class Angle:
    line_a: int
    line_b: int
    angle: float
    clockwise: bool = False
    command = "make_angle"


Constraint = Union[Horizontal, Vertical, FixSize, Coincident, Parallel, Perpendicular,
                   Tangent, Mirror, Angle]


def constraint_curves(c: Constraint) -> tuple[int, ...]:
    """Curve statement indices referenced by a constraint, in argument order."""
    if isinstance(c, (Horizontal, Vertical)):
        return (c.line,)
    if isinstance(c, FixSize):
        return (c.curve,)
    if isinstance(c, Coincident):
        return tuple(p.curve for p in (c.point_a, c.point_b) if isinstance(p, PointRef))
    if isinstance(c, (Parallel, Perpendicular, Angle)):
        return (c.line_a, c.line_b)
    if isinstance(c, Tangent):
        return (c.curve_a, c.curve_b)
    return (c.curve_a, c.curve_b, c.axis)


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class PlaneDef:
    origin: Vec3
    x_axis: Vec3
    y_axis: Vec3
    annotation: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class CurveDef:
    curve: Curve
    annotation: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class LoopDef:
    curves: tuple[int, ...]
    annotation: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class ProfileDef:
    loops: tuple[int, ...]
    annotation: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class SketchDef:
    plane: int
    profile: int
    position: Vec2 = (0.0, 0.0)
    size: float = 1.0
    annotation: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class ConstraintDef:
    constraint: Constraint
    annotation: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class ExtrudeDef:
    sketch: int
    operation: Operation
    extent_type: ExtentType
    extent_one: float
    extent_two: float = 0.0
    annotation: str | None = field(default=None, kw_only=True)

    @property
    def extrusion(self) -> Extrusion:
        return Extrusion(self.operation, self.extent_type, self.extent_one, self.extent_two)


Statement = Union[PlaneDef, CurveDef, LoopDef, ProfileDef, SketchDef, ConstraintDef, ExtrudeDef]


@dataclass(frozen=True)
class PairEntry:
    loop: Loop
    sketch: Sketch
    extrusion: Extrusion
    sketch_stmt: int
    extrude_stmt: int
    loop_index: int


@dataclass(frozen=True)
class CADProgram:
    statements: tuple[Statement, ...] = ()

    def _get(self, index: int, kind: type):
        if not 0 <= index < len(self.statements):
            raise DanglingReference(f"reference to missing statement {index}")
        stmt = self.statements[index]
        if not isinstance(stmt, kind):
            raise DanglingReference(
                f"statement {index} is {type(stmt).__name__}, expected {kind.__name__}")
        return stmt

    def plane(self, index: int) -> SketchPlane:
        p = self._get(index, PlaneDef)
        return make_sketchplane(p.origin, p.x_axis, p.y_axis)

    def curve(self, index: int) -> Curve:
        return self._get(index, CurveDef).curve

    def loop(self, index: int) -> Loop:
        return Loop(tuple(self.curve(i) for i in self._get(index, LoopDef).curves))

    def sketch(self, index: int, chord_tol: float | None = None) -> Sketch:
        s = self._get(index, SketchDef)
        prof = self._get(s.profile, ProfileDef)
        profile = classify_profile([self.loop(i) for i in prof.loops], chord_tol)
        return Sketch(self.plane(s.plane), profile, s.position, s.size)

    def sketch_curve_ids(self, index: int) -> tuple[int, ...]:
        s = self._get(index, SketchDef)
        out: list[int] = []
        for li in self._get(s.profile, ProfileDef).loops:
            for ci in self._get(li, LoopDef).curves:
                if ci not in out:
                    out.append(ci)
        return tuple(out)

    def indices(self, kind: type) -> list[int]:
        return [i for i, s in enumerate(self.statements) if isinstance(s, kind)]

    def extrudes(self) -> list[tuple[int, ExtrudeDef]]:
        return [(i, s) for i, s in enumerate(self.statements) if isinstance(s, ExtrudeDef)]

    def constraints(self) -> list[tuple[int, Constraint]]:
        return [(i, s.constraint) for i, s in enumerate(self.statements)
                if isinstance(s, ConstraintDef)]

    def without_annotations(self) -> "CADProgram":
        from dataclasses import replace
        return CADProgram(tuple(replace(s, annotation=None) for s in self.statements))

    def replace_curves(self, curves: dict[int, Curve]) -> "CADProgram":
        from dataclasses import replace
        stmts = list(self.statements)
        for i, c in curves.items():
            stmts[i] = replace(self._get(i, CurveDef), curve=c)
        return CADProgram(tuple(stmts))


class ProgramBuilder:
    """Imperative construction mirroring the command set.

    Every add_* returns the statement index used to reference the result.
    """

    def __init__(self) -> None:
        self._stmts: list[Statement] = []

    def _push(self, stmt: Statement) -> int:
        self._stmts.append(stmt)
        return len(self._stmts) - 1

    def add_sketchplane(self, origin, x_axis, y_axis, *, annotation=None) -> int:
        return self._push(PlaneDef(_vec(origin, 3), _vec(x_axis, 3), _vec(y_axis, 3),
                                   annotation=annotation))

    def add_line(self, start, end, *, annotation=None) -> int:
        return self._push(CurveDef(Line(_vec(start, 2), _vec(end, 2)), annotation=annotation))

    def add_arc(self, start, end, mid, *, annotation=None) -> int:
        return self._push(CurveDef(Arc(_vec(start, 2), _vec(end, 2), _vec(mid, 2)),
                                   annotation=annotation))

    def add_circle(self, center, radius, *, annotation=None) -> int:
        return self._push(CurveDef(Circle(_vec(center, 2), float(radius)), annotation=annotation))

    def add_curve(self, curve: Curve, *, annotation=None) -> int:
        return self._push(CurveDef(curve, annotation=annotation))

    def add_loop(self, curves: Iterable[int], *, annotation=None) -> int:
        return self._push(LoopDef(tuple(int(c) for c in curves), annotation=annotation))

    def add_profile(self, loops: Iterable[int], *, annotation=None) -> int:
        return self._push(ProfileDef(tuple(int(i) for i in loops), annotation=annotation))

    def add_sketch(self, plane: int, profile: int, position=(0.0, 0.0), size=1.0, *,
                   annotation=None) -> int:
        return self._push(SketchDef(int(plane), int(profile), _vec(position, 2), float(size),
                                    annotation=annotation))

    def add_extrude(self, sketch: int, operation, extent_type, extent_one, extent_two=0.0, *,
                    annotation=None) -> int:
        return self._push(ExtrudeDef(int(sketch), Operation(operation), ExtentType(extent_type),
                                     float(extent_one), float(extent_two), annotation=annotation))

    def add_constraint(self, constraint: Constraint, *, annotation=None) -> int:
        return self._push(ConstraintDef(constraint, annotation=annotation))

    def make_horizontal(self, line: int, **kw) -> int:
        return self.add_constraint(Horizontal(line), **kw)

    def make_vertical(self, line: int, **kw) -> int:
        return self.add_constraint(Vertical(line), **kw)

    def fix_size(self, curve: int, size: float, **kw) -> int:
        return self.add_constraint(FixSize(curve, float(size)), **kw)

    def make_coincident(self, point_a, point_b, **kw) -> int:
        return self.add_constraint(Coincident(_point_arg(point_a), _point_arg(point_b)), **kw)

    def make_parallel(self, line_a: int, line_b: int, **kw) -> int:
        return self.add_constraint(Parallel(line_a, line_b), **kw)

    def make_perpendicular(self, line_a: int, line_b: int, **kw) -> int:
        return self.add_constraint(Perpendicular(line_a, line_b), **kw)

    def make_tangent(self, curve_a: int, curve_b: int, **kw) -> int:
        return self.add_constraint(Tangent(curve_a, curve_b), **kw)

    def make_mirror(self, curve_a: int, curve_b: int, axis: int, **kw) -> int:
        return self.add_constraint(Mirror(curve_a, curve_b, axis), **kw)

    def make_angle(self, line_a: int, line_b: int, angle: float, clockwise: bool = False,
                   **kw) -> int:
        return self.add_constraint(Angle(line_a, line_b, float(angle), bool(clockwise)), **kw)

    def build(self) -> CADProgram:
        return CADProgram(tuple(self._stmts))


def _point_arg(p) -> PointArg:
    if isinstance(p, PointRef):
        return p
    if isinstance(p, tuple) and len(p) == 2 and isinstance(p[1], str):
        return PointRef(int(p[0]), p[1])
    return _vec(p, 2)


# ---------------------------------------------------------------------------
# loops and profiles


@dataclass
class ValidationReport:
    closed: bool
    gaps: list[float]
    degenerate: list[int]
    mixed_circle: bool = False

    @property
    def max_gap(self) -> float:
        return max(self.gaps, default=0.0)


def validate_loop(loop: Loop, eps_join: float = EPS_JOIN) -> ValidationReport:
    curves = loop.curves
    if not curves:
        return ValidationReport(False, [], [])
    degenerate = [i for i, c in enumerate(curves) if is_degenerate(c)]
    circles = [isinstance(c, Circle) for c in curves]
    if any(circles):
        if len(curves) == 1:
            return ValidationReport(not degenerate, [], degenerate)
        return ValidationReport(False, [], degenerate, mixed_circle=True)
    gaps = []
    for i, c in enumerate(curves):
        nxt = curves[(i + 1) % len(curves)]
        gaps.append(distance(endpoints(c)[1], endpoints(nxt)[0]))
    closed = not degenerate and all(g <= eps_join for g in gaps)
    return ValidationReport(closed, gaps, degenerate)


def loop_bbox(loop: Loop) -> tuple[float, float, float, float]:
    boxes = np.array([curve_bbox(c) for c in loop.curves])
    return (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())


def loops_diag(loops: Sequence[Loop]) -> float:
    boxes = np.array([loop_bbox(lp) for lp in loops])
    return float(math.hypot(boxes[:, 2].max() - boxes[:, 0].min(),
                            boxes[:, 3].max() - boxes[:, 1].min()))


def tessellate_loop(loop: Loop, chord_tol: float) -> np.ndarray:
    """Closed ring of (n, 2) points; the closing point is not repeated."""
    parts = []
    for c in loop.curves:
        poly = tessellate_curve(c, chord_tol)
        parts.append(poly.points if poly.closed else poly.points[:-1])
    return np.concatenate(parts, axis=0)


def signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def points_in_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd containment of points in a closed polygon."""
    px = points[:, 0:1]
    py = points[:, 1:2]
    x0, y0 = ring[:, 0], ring[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < xint)
    return (hits.sum(axis=1) % 2) == 1


def distance_to_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    a = ring
    b = np.roll(ring, -1, axis=0)
    ab = b - a
    ap = points[:, None, :] - a[None, :, :]
    denom = np.maximum((ab * ab).sum(axis=1), 1e-300)
    t = np.clip((ap * ab[None]).sum(axis=2) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.sqrt(((points[:, None, :] - closest) ** 2).sum(axis=2)).min(axis=1)


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - \
        (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def rings_cross(r1: np.ndarray, r2: np.ndarray, tol: float = 0.0) -> bool:
    """True if any pair of segments from the two rings properly intersects."""
    a = r1[:, None, :]
    b = np.roll(r1, -1, axis=0)[:, None, :]
    c = r2[None, :, :]
    d = np.roll(r2, -1, axis=0)[None, :, :]
    o1 = _orient(a, b, c)
    o2 = _orient(a, b, d)
    o3 = _orient(c, d, a)
    o4 = _orient(c, d, b)
    return bool(np.any((o1 * o2 < -tol) & (o3 * o4 < -tol)))


def classify_profile(loops: Sequence[Loop], chord_tol: float | None = None) -> Profile:
    """Assign even-odd nesting depths to closed loops; reject crossing loops."""
    loops = tuple(loops)
    if not loops:
        return Profile((), (), ())
    diag = loops_diag(loops)
    tol = chord_tol if chord_tol is not None else DEFAULT_CHORD_REL * max(diag, EPS_DEGENERATE)
    rings = [tessellate_loop(lp, tol) for lp in loops]
    boxes = [(r[:, 0].min(), r[:, 1].min(), r[:, 0].max(), r[:, 1].max()) for r in rings]
    n = len(rings)
    touch = 1e-9 * max(diag, 1.0)
    contains = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            bi, bj = boxes[i], boxes[j]
            overlap = not (bi[2] < bj[0] or bj[2] < bi[0] or bi[3] < bj[1] or bj[3] < bi[1])
            if not overlap:
                continue
            if i < j and rings_cross(rings[i], rings[j], tol=touch * touch):
                raise CrossingLoops(i, j)
            probe = rings[j]
            away = distance_to_ring(probe, rings[i]) > 10 * touch
            if not away.any():
                raise CrossingLoops(min(i, j), max(i, j))
            inside = points_in_ring(probe[away], rings[i])
            contains[i, j] = inside.sum() * 2 > len(inside)
    depths = contains.sum(axis=0)
    parents = []
    for j in range(n):
        enclosing = [i for i in range(n) if contains[i, j]]
        parents.append(max(enclosing, key=lambda i: depths[i]) if enclosing else -1)
    return Profile(loops, tuple(int(d) for d in depths), tuple(parents))


# ---------------------------------------------------------------------------
# program-level structure


def extract_pairs(program: CADProgram) -> list[PairEntry]:
    """One entry per (loop, extrusion) combination, in statement order."""
    out = []
    for ei, ex in program.extrudes():
        sketch = program.sketch(ex.sketch)
        for li, lp in enumerate(sketch.profile.loops):
            out.append(PairEntry(lp, sketch, ex.extrusion, ex.sketch, ei, li))
    return out


@dataclass(frozen=True)
class Issue:
    statement: int
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.statement}] {self.code}: {self.message}"


_REF_FIELDS = {
    LoopDef: ("curves", CurveDef),
    ProfileDef: ("loops", LoopDef),
}


def _finite(values: Iterable[float]) -> bool:
    return all(math.isfinite(v) for v in values)


def validate_program(program: CADProgram, eps_join: float = EPS_JOIN) -> list[Issue]:
    """Collect every structural and geometric problem; empty list means valid."""
    issues: list[Issue] = []
    stmts = program.statements
    curve_sketch: dict[int, int] = {}

    def ref_ok(i: int, ref: int, kind: type) -> bool:
        if not (0 <= ref < i) or not isinstance(stmts[ref], kind):
            issues.append(Issue(i, "DanglingReference",
                                f"statement {ref} is not an earlier {kind.__name__}"))
            return False
        return True

    seen_extrude = False
    for i, st in enumerate(stmts):
        if isinstance(st, PlaneDef):
            try:
                make_sketchplane(st.origin, st.x_axis, st.y_axis)
            except DegenerateAxes as exc:
                issues.append(Issue(i, "DegenerateAxes", str(exc)))
        elif isinstance(st, CurveDef):
            c = st.curve
            vals = (c.center + (c.radius,)) if isinstance(c, Circle) else \
                sum((tuple(p) for p in (c.start, c.end) + ((c.mid,) if isinstance(c, Arc) else ())), ())
            if not _finite(vals):
                issues.append(Issue(i, "NonFinite", "curve has non-finite coordinates"))
            elif is_degenerate(c):
                issues.append(Issue(i, "DegenerateCurve", f"degenerate {c.kind}"))
        elif isinstance(st, (LoopDef, ProfileDef)):
            attr, kind = _REF_FIELDS[type(st)]
            refs = getattr(st, attr)
            if not refs:
                issues.append(Issue(i, "EmptyList", f"{type(st).__name__} has no members"))
                continue
            if not all(ref_ok(i, r, kind) for r in refs):
                continue
            if isinstance(st, LoopDef):
                loop = program.loop(i)
                if any(is_degenerate(c) for c in loop.curves):
                    continue
                rep = validate_loop(loop, eps_join)
                if rep.mixed_circle:
                    issues.append(Issue(i, "MixedCircle", "circle mixed with other curves"))
                elif not rep.closed:
                    issues.append(Issue(i, "OpenLoop", f"loop not closed, max gap {rep.max_gap:.6g}"))
        elif isinstance(st, SketchDef):
            ok = ref_ok(i, st.plane, PlaneDef) & ref_ok(i, st.profile, ProfileDef)
            if not (st.size > 0 and math.isfinite(st.size)):
                issues.append(Issue(i, "BadSize", "sketch size must be positive"))
            if not _finite(st.position):
                issues.append(Issue(i, "NonFinite", "sketch position not finite"))
            if ok and not any(iss.statement in _profile_deps(program, st.profile) for iss in issues):
                try:
                    program.sketch(i)
                except CrossingLoops as exc:
                    issues.append(Issue(i, "CrossingLoops", str(exc)))
                except ModelError as exc:
                    issues.append(Issue(i, "InvalidSketch", str(exc)))
                for ci in program.sketch_curve_ids(i):
                    curve_sketch.setdefault(ci, i)
        elif isinstance(st, ExtrudeDef):
            ref_ok(i, st.sketch, SketchDef)
            if not _finite((st.extent_one, st.extent_two)):
                issues.append(Issue(i, "NonFinite", "extent not finite"))
            elif abs(st.extent_one) <= EPS_DEGENERATE or (
                    st.extent_type is ExtentType.TWO_SIDED and abs(st.extent_two) <= EPS_DEGENERATE):
                issues.append(Issue(i, "DegenerateExtent", "extent too small"))
            else:
                lo, hi = st.extrusion.span()
                if hi - lo <= EPS_DEGENERATE:
                    issues.append(Issue(i, "DegenerateExtent", "empty extrusion span"))
            if not seen_extrude and st.operation is not Operation.NEW_BODY:
                issues.append(Issue(i, "FirstNotNewBody",
                                    "first extrusion must create a new body"))
            seen_extrude = True

    for i, st in enumerate(stmts):
        if isinstance(st, ConstraintDef):
            issues.extend(_constraint_issues(program, i, st.constraint, curve_sketch))
    return issues


def _profile_deps(program: CADProgram, profile: int) -> set[int]:
    deps = {profile}
    for li in program.statements[profile].loops:
        deps.add(li)
        loop = program.statements[li]
        if isinstance(loop, LoopDef):
            deps.update(loop.curves)
    return deps


def _constraint_issues(program: CADProgram, i: int, c: Constraint,
                       curve_sketch: dict[int, int]) -> list[Issue]:
    stmts = program.statements
    out: list[Issue] = []
    refs = constraint_curves(c)
    for r in refs:
        if not (0 <= r < len(stmts)) or not isinstance(stmts[r], CurveDef):
            out.append(Issue(i, "DanglingReference", f"constraint references non-curve {r}"))
    if out:
        return out
    kinds = [stmts[r].curve.kind for r in refs]
    need_lines = {Horizontal: refs, Vertical: refs, Parallel: refs, Perpendicular: refs,
                  Angle: refs}
    if type(c) in need_lines and any(k != "line" for k in kinds):
        out.append(Issue(i, "TypeMismatch", f"{c.command} requires lines"))
    if isinstance(c, Mirror):
        if kinds[0] != kinds[1]:
            out.append(Issue(i, "TypeMismatch", "mirror requires curves of the same type"))
        if kinds[2] != "line":
            out.append(Issue(i, "TypeMismatch", "mirror axis must be a line"))
    if isinstance(c, Tangent) and kinds == ["line", "line"]:
        out.append(Issue(i, "UnsupportedPair", "tangent between two lines"))
    if isinstance(c, Coincident):
        pts = [p for p in (c.point_a, c.point_b) if isinstance(p, PointRef)]
        if not pts:
            out.append(Issue(i, "TypeMismatch", "coincident needs at least one curve point"))
        for p in pts:
            kind = stmts[p.curve].curve.kind
            if p.which not in POINT_SELECTORS[kind]:
                out.append(Issue(i, "TypeMismatch", f"{kind} has no point '{p.which}'"))
        for p in (c.point_a, c.point_b):
            if not isinstance(p, PointRef) and not _finite(p):
                out.append(Issue(i, "NonFinite", "anchor not finite"))
    sketches = {curve_sketch[r] for r in refs if r in curve_sketch}
    if len(sketches) > 1:
        out.append(Issue(i, "CrossSketch", "constraint spans curves of different sketches"))
    return out


def check_program(program: CADProgram, eps_join: float = EPS_JOIN) -> CADProgram:
    issues = validate_program(program, eps_join)
    if issues:
        raise InvalidProgram(issues)
    return program
