"""Conversion of external sketch-and-extrude records into CAD programs,
the length/build filter, and dataset statistics.

Input records use a neutral JSON layout::

    {"id": "...", "annotation": "optional text",
     "sequence": [
        {"type": "sketch", "name": "s0",
         "plane": {"origin": [x, y, z], "x_axis": [...], "y_axis": [...], "z_axis": [...]},
         "position": [u, v], "size": 1.0,
         "profile": [[entity, ...], ...]},            # one list of entities per loop
        {"type": "extrude", "sketch": "s0", "operation": "new_body",
         "extent_type": "one_sided", "extent_one": 1.0, "extent_two": 0.0}]}

Entities are {"type": "line", "start", "end"}, {"type": "arc", "center",
"radius", "start_angle", "end_angle", "ccw"} or {"type": "circle", "center",
"radius"}.  Arcs are stored by center and angles there and re-parameterized
to the start/end/mid form used by programs.  Curves inside a loop may point
either way; conversion flips them so each loop runs head to tail.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable

from .curves import Arc, Circle, Line, circumcircle, distance, endpoints
from .dsl import DSLParseError, count_tokens, parse_program, serialize_program
from .model import (
    EPS_JOIN,
    CADProgram,
    ConstraintDef,
    CurveDef,
    ExtentType,
    ExtrudeDef,
    LoopDef,
    Operation,
    PlaneDef,
    ProfileDef,
    SketchDef,
    check_program,
)

DEFAULT_MAX_TOKENS = 1536
PLANE_AXIS_TOL_DEG = 1.0


class ConversionError(ValueError):
    reason = "ConversionError"


class UnsupportedEntity(ConversionError):
    reason = "UnsupportedEntity"


class DegenerateArc(ConversionError):
    reason = "DegenerateArc"


class InconsistentPlane(ConversionError):
    reason = "InconsistentPlane"


class MalformedRecord(ConversionError):
    reason = "MalformedRecord"


_OPERATION_TAGS = {
    "new_body": Operation.NEW_BODY, "newbody": Operation.NEW_BODY,
    "newbodyfeatureoperation": Operation.NEW_BODY,
    "join": Operation.JOIN, "joinfeatureoperation": Operation.JOIN,
    "cut": Operation.CUT, "cutfeatureoperation": Operation.CUT,
    "intersect": Operation.INTERSECT, "intersectfeatureoperation": Operation.INTERSECT,
}
_EXTENT_TAGS = {
    "one_sided": ExtentType.ONE_SIDED, "onesided": ExtentType.ONE_SIDED,
    "onesidefeatureextenttype": ExtentType.ONE_SIDED,
    "symmetric": ExtentType.SYMMETRIC, "symmetricfeatureextenttype": ExtentType.SYMMETRIC,
    "two_sided": ExtentType.TWO_SIDED, "twosided": ExtentType.TWO_SIDED,
    "twosidesfeatureextenttype": ExtentType.TWO_SIDED,
}
_ENTITY_TAGS = {"line": "line", "line3d": "line", "arc": "arc", "arc3d": "arc",
                "circle": "circle", "circle3d": "circle"}


def arc_reparam(center, radius: float, start_angle: float, end_angle: float,
                ccw: bool) -> Arc:
    """Center/radius/angles to start/end/mid.  The mid point sits halfway
    along the traversed direction."""
    if not radius > 0:
        raise DegenerateArc(f"arc radius must be positive, got {radius}")
    if not all(math.isfinite(a) for a in (start_angle, end_angle, radius, *center)):
        raise DegenerateArc("arc parameters must be finite")
    tau = 2.0 * math.pi
    if ccw:
        sweep = (end_angle - start_angle) % tau
    else:
        sweep = -((start_angle - end_angle) % tau)
    if abs(sweep) < 1e-9:
        raise DegenerateArc("arc sweeps no angle")
    cx, cy = float(center[0]), float(center[1])

    def at(a):
        return (cx + radius * math.cos(a), cy + radius * math.sin(a))

    return Arc(at(start_angle), at(end_angle), at(start_angle + 0.5 * sweep))


def arc_params(arc: Arc) -> tuple[tuple[float, float], float, float, float, bool]:
    """Inverse of arc_reparam: (center, radius, start_angle, end_angle, ccw)."""
    from .curves import arc_geometry
    center, r, a0, sweep = arc_geometry(arc)
    return center, r, a0, a0 + sweep, sweep > 0


def _tag(value, table: dict, what: str):
    key = str(value).strip().lower().replace("-", "_").replace(" ", "")
    if key in table:
        return table[key]
    raise MalformedRecord(f"unknown {what} tag {value!r}")


def _vec(v, n: int, what: str) -> tuple:
    if isinstance(v, dict):
        v = [v[k] for k in ("x", "y", "z")[:n]]
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"{what} must be a list of {n} numbers") from exc
    if len(out) != n or not all(math.isfinite(x) for x in out):
        raise MalformedRecord(f"{what} must hold {n} finite numbers")
    return out


def _entity(ent: dict):
    kind = _ENTITY_TAGS.get(str(ent.get("type", "")).lower())
    if kind is None:
        raise UnsupportedEntity(f"unsupported entity type {ent.get('type')!r}")
    if kind == "line":
        return Line(_vec(ent["start"], 2, "line start"), _vec(ent["end"], 2, "line end"))
    if kind == "circle":
        r = float(ent["radius"])
        if not r > 0:
            raise MalformedRecord("circle radius must be positive")
        return Circle(_vec(ent["center"], 2, "circle center"), r)
    return arc_reparam(_vec(ent["center"], 2, "arc center"), float(ent["radius"]),
                       float(ent["start_angle"]), float(ent["end_angle"]),
                       bool(ent.get("ccw", True)))


def _flip(curve):
    if isinstance(curve, Line):
        return Line(curve.end, curve.start)
    return Arc(curve.end, curve.start, curve.mid)


def orient_loop(curves: list) -> list:
    """Flip curves so the loop runs head to tail, keeping the source order.

    Source datasets store each curve in its own direction; programs need
    every curve to start where the previous one ends.  Loops that cannot be
    chained by flipping are returned as given and fail validation later.
    """
    if len(curves) < 2 or any(isinstance(c, Circle) for c in curves):
        return list(curves)

    def chain(first):
        out = [first]
        for c in curves[1:]:
            end = endpoints(out[-1])[1]
            s0, s1 = endpoints(c)
            if distance(end, s0) <= distance(end, s1):
                out.append(c)
            else:
                out.append(_flip(c))
        return out

    def gap(seq):
        return sum(distance(endpoints(a)[1], endpoints(b)[0])
                   for a, b in zip(seq, seq[1:] + seq[:1]))

    a, b = chain(curves[0]), chain(_flip(curves[0]))
    return a if gap(a) <= gap(b) else b


def _plane(plane: dict) -> tuple:
    o = _vec(plane["origin"], 3, "plane origin")
    x = _vec(plane["x_axis"], 3, "plane x_axis")
    y = _vec(plane["y_axis"], 3, "plane y_axis")
    if plane.get("z_axis") is not None:
        z = _vec(plane["z_axis"], 3, "plane z_axis")
        n = (x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0])
        nn = math.sqrt(sum(c * c for c in n))
        zn = math.sqrt(sum(c * c for c in z))
        if nn == 0 or zn == 0:
            raise InconsistentPlane("plane axes are degenerate")
        cos = sum(a * b for a, b in zip(n, z)) / (nn * zn)
        if cos < math.cos(math.radians(PLANE_AXIS_TOL_DEG)):
            raise InconsistentPlane("z_axis disagrees with x_axis cross y_axis")
    return o, x, y


def convert_record(record: dict) -> CADProgram:
    """Map one neutral record onto program statements."""
    if "sequence" not in record:
        raise MalformedRecord("record has no 'sequence'")
    stmts: list = []
    sketches: dict[str, int] = {}
    annotation = record.get("annotation")
    for k, item in enumerate(record["sequence"]):
        kind = str(item.get("type", "")).lower()
        try:
            if kind == "sketch":
                o, x, y = _plane(item["plane"])
                stmts.append(PlaneDef(o, x, y))
                plane_idx = len(stmts) - 1
                loop_ids = []
                for loop in item["profile"]:
                    curve_ids = []
                    for curve in orient_loop([_entity(ent) for ent in loop]):
                        stmts.append(CurveDef(curve))
                        curve_ids.append(len(stmts) - 1)
                    if not curve_ids:
                        raise MalformedRecord("empty loop")
                    stmts.append(LoopDef(tuple(curve_ids)))
                    loop_ids.append(len(stmts) - 1)
                if not loop_ids:
                    raise MalformedRecord("sketch without loops")
                stmts.append(ProfileDef(tuple(loop_ids)))
                prof = len(stmts) - 1
                pos = _vec(item.get("position", (0.0, 0.0)), 2, "sketch position")
                size = float(item.get("size", 1.0))
                stmts.append(SketchDef(plane_idx, prof, pos, size))
                sketches[str(item.get("name", f"sketch{k}"))] = len(stmts) - 1
            elif kind == "extrude":
                name = str(item["sketch"])
                if name not in sketches:
                    raise MalformedRecord(f"extrude references unknown sketch {name!r}")
                ext = _tag(item.get("extent_type", "one_sided"), _EXTENT_TAGS, "extent type")
                stmts.append(ExtrudeDef(sketches[name],
                                        _tag(item["operation"], _OPERATION_TAGS, "operation"),
                                        ext, float(item["extent_one"]),
                                        float(item.get("extent_two", 0.0) or 0.0)))
            else:
                raise UnsupportedEntity(f"unsupported sequence item {item.get('type')!r}")
        except KeyError as exc:
            raise MalformedRecord(f"sequence item {k} misses field {exc}") from exc
    if annotation and stmts:
        stmts[0] = replace(stmts[0], annotation=str(annotation))
    return CADProgram(tuple(stmts))


# ---------------------------------------------------------------------------
# DeepCAD-style adapter


def _xy(p) -> list[float]:
    return [float(p["x"]), float(p["y"])]


def deepcad_to_neutral(data: dict, record_id: str = "") -> dict:
    """Normalize a DeepCAD-style JSON (entities + sequence) into the neutral layout.

    Best effort: curve coordinates are taken as sketch-local 2D points and
    each extrude gets its own sketch built from the profiles it consumes.
    """
    entities = data["entities"]
    seq = []
    for step in data["sequence"]:
        ent = entities[step["entity"]]
        if ent.get("type") != "ExtrudeFeature":
            continue
        loops, plane = [], None
        for ref in ent["profiles"]:
            sk = entities[ref["sketch"]]
            t = sk["transform"]
            plane = {"origin": _vec(t["origin"], 3, "origin"),
                     "x_axis": _vec(t["x_axis"], 3, "x_axis"),
                     "y_axis": _vec(t["y_axis"], 3, "y_axis"),
                     "z_axis": _vec(t["z_axis"], 3, "z_axis")}
            for loop in sk["profiles"][ref["profile"]]["loops"]:
                out = []
                for c in loop["profile_curves"]:
                    ctype = c.get("type")
                    if ctype == "Line3D":
                        out.append({"type": "line", "start": _xy(c["start_point"]),
                                    "end": _xy(c["end_point"])})
                    elif ctype == "Circle3D":
                        out.append({"type": "circle", "center": _xy(c["center_point"]),
                                    "radius": float(c["radius"])})
                    elif ctype == "Arc3D":
                        ref_vec = c.get("reference_vector", {"x": 1.0, "y": 0.0})
                        offset = math.atan2(float(ref_vec["y"]), float(ref_vec["x"]))
                        ccw = float(c.get("normal", {"z": 1.0}).get("z", 1.0)) >= 0
                        a0 = float(c["start_angle"])
                        a1 = float(c["end_angle"])
                        if not ccw:
                            a0, a1 = -a0, -a1
                        out.append({"type": "arc", "center": _xy(c["center_point"]),
                                    "radius": float(c["radius"]), "start_angle": a0 + offset,
                                    "end_angle": a1 + offset, "ccw": ccw})
                    else:
                        raise UnsupportedEntity(f"unsupported entity type {ctype!r}")
                loops.append(out)
        name = f"sketch{len(seq)}"
        seq.append({"type": "sketch", "name": name, "plane": plane, "profile": loops})

        def distance(key):
            v = ent.get(key) or {}
            return float(v.get("distance", {}).get("value", 0.0)) if isinstance(v, dict) else 0.0

        seq.append({"type": "extrude", "sketch": name, "operation": ent["operation"],
                    "extent_type": ent["extent_type"], "extent_one": distance("extent_one"),
                    "extent_two": distance("extent_two")})
    return {"id": record_id or data.get("id", ""), "sequence": seq}


def load_records(path) -> list[dict]:
    """Read one JSON record, a JSON list, or JSON-lines."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.strip()
    if not stripped:
        return []
    try:
        data = json.loads(stripped)
    except json.JSONDecodeError:
        return [json.loads(line) for line in stripped.splitlines() if line.strip()]
    return data if isinstance(data, list) else [data]


# ---------------------------------------------------------------------------
# filtering


@dataclass(frozen=True)
class FilterPolicy:
    max_tokens: int = DEFAULT_MAX_TOKENS
    drop_on_convert_error: bool = True
    eps_join: float = EPS_JOIN

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class FilterResult:
    keep: bool
    reason: str | None = None  # TooLong | BuildFailure
    tokens: int = 0
    detail: str = ""


def apply_filter(program: CADProgram, policy: FilterPolicy = FilterPolicy(),
                 chord_rel: float | None = None) -> FilterResult:
    from .kernel.build import build_program
    text = serialize_program(program)
    tokens = count_tokens(text)
    if tokens > policy.max_tokens:
        return FilterResult(False, "TooLong", tokens, f"{tokens} > {policy.max_tokens} tokens")
    try:
        check_program(program, policy.eps_join)
        kw = {} if chord_rel is None else {"chord_rel": chord_rel}
        build_program(program, **kw)
    except Exception as exc:  # any failure to execute drops the design
        return FilterResult(False, "BuildFailure", tokens, f"{type(exc).__name__}: {exc}")
    return FilterResult(True, None, tokens)


# ---------------------------------------------------------------------------
# statistics


@dataclass
class DatasetStats:
    """Histograms keyed by exact counts.  pair_hist counts sketch-extrusion
    steps per program; curve/constraint histograms count statements."""

    n_programs: int = 0
    pair_hist: Counter = field(default_factory=Counter)
    curve_hist: Counter = field(default_factory=Counter)
    constraint_hist: Counter = field(default_factory=Counter)
    total_pairs: int = 0
    total_curves: int = 0
    total_constraints: int = 0

    def add(self, program: CADProgram) -> None:
        pairs = sum(1 for s in program.statements if isinstance(s, ExtrudeDef))
        curves = sum(1 for s in program.statements if isinstance(s, CurveDef))
        cons = sum(1 for s in program.statements if isinstance(s, ConstraintDef))
        self.n_programs += 1
        self.pair_hist[pairs] += 1
        self.curve_hist[curves] += 1
        self.constraint_hist[cons] += 1
        self.total_pairs += pairs
        self.total_curves += curves
        self.total_constraints += cons

    def merge(self, other: "DatasetStats") -> "DatasetStats":
        return DatasetStats(self.n_programs + other.n_programs,
                            self.pair_hist + other.pair_hist,
                            self.curve_hist + other.curve_hist,
                            self.constraint_hist + other.constraint_hist,
                            self.total_pairs + other.total_pairs,
                            self.total_curves + other.total_curves,
                            self.total_constraints + other.total_constraints)

    def as_dict(self) -> dict:
        def hist(c: Counter) -> dict:
            return {str(k): c[k] for k in sorted(c)}
        return {"n_programs": self.n_programs, "pair_hist": hist(self.pair_hist),
                "curve_hist": hist(self.curve_hist),
                "constraint_hist": hist(self.constraint_hist),
                "total_pairs": self.total_pairs, "total_curves": self.total_curves,
                "total_constraints": self.total_constraints}


def dataset_stats(programs: Iterable[CADProgram]) -> DatasetStats:
    stats = DatasetStats()
    for p in programs:
        stats.add(p)
    return stats


# ---------------------------------------------------------------------------
# annotation hook


def run_annotation_hook(command: str, program: CADProgram, timeout: float = 60.0) -> CADProgram:
    """Pipe canonical code through an external command that adds comment
    annotations.  The result is accepted only if it is the same program
    once annotations are ignored; otherwise the input is returned."""
    text = serialize_program(program)
    try:
        proc = subprocess.run(shlex.split(command), input=text, capture_output=True, text=True,
                              timeout=timeout, check=False)
    except (OSError, subprocess.TimeoutExpired):
        return program
    if proc.returncode != 0:
        return program
    try:
        annotated = parse_program(proc.stdout)
    except DSLParseError:
        return program
    if annotated.without_annotations() != program.without_annotations():
        return program
    return annotated


def refit_arc(arc: Arc) -> tuple[tuple[float, float], float]:
    return circumcircle(arc.start, arc.mid, arc.end)
