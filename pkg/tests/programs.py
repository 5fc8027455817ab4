"""Random program generators for round-trip and solver tests."""

from __future__ import annotations

import math

import numpy as np

from ecadkit.curves import Arc
from ecadkit.model import (
    Angle,
    CADProgram,
    Coincident,
    ExtentType,
    FixSize,
    Horizontal,
    Mirror,
    Operation,
    Parallel,
    Perpendicular,
    PointRef,
    ProgramBuilder,
    Tangent,
    Vertical,
)

_WORDS = ["table", "leg", "top", "hole", "boss", "cut the slot", "mount plate", "rib"]


def _num(rng) -> float:
    kind = rng.integers(0, 5)
    if kind == 0:
        return float(rng.integers(-5, 6))
    if kind == 1:
        return float(np.round(rng.uniform(-3, 3), 3))
    if kind == 2:
        return float(rng.uniform(-1e3, 1e3))
    if kind == 3:
        return float(rng.uniform(-1, 1) * 10.0 ** rng.integers(-12, 12))
    return float(rng.normal())


def _pt(rng):
    return (_num(rng), _num(rng))


def _annotation(rng):
    if rng.random() < 0.8:
        return None
    words = rng.choice(_WORDS, size=int(rng.integers(1, 3)))
    return "\n".join(str(w) for w in words)


def _arc(rng) -> Arc:
    c = np.array(_pt(rng)) * 0.1
    r = float(rng.uniform(0.1, 5))
    a0 = rng.uniform(0, 2 * math.pi)
    sweep = rng.uniform(0.2, 6.0) * (1 if rng.random() < 0.5 else -1)

    def at(a):
        return (float(c[0] + r * math.cos(a)), float(c[1] + r * math.sin(a)))

    return Arc(at(a0), at(a0 + sweep), at(a0 + sweep / 2))


def random_program(rng, max_sketches: int = 3) -> CADProgram:
    """Structurally valid program exercising every command (geometry may be arbitrary)."""
    b = ProgramBuilder()
    sketches = []
    for _ in range(int(rng.integers(1, max_sketches + 1))):
        axes = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        plane = b.add_sketchplane(_pt(rng) + (_num(rng),), tuple(axes[:, 0]), tuple(axes[:, 1]),
                                  annotation=_annotation(rng))
        curves = []
        for _ in range(int(rng.integers(1, 6))):
            kind = rng.integers(0, 3)
            ann = _annotation(rng)
            if kind == 0:
                curves.append(b.add_line(_pt(rng), _pt(rng), annotation=ann))
            elif kind == 1:
                curves.append(b.add_curve(_arc(rng), annotation=ann))
            else:
                curves.append(b.add_circle(_pt(rng), float(rng.uniform(0.01, 10)),
                                           annotation=ann))
        loops = []
        pool = list(curves)
        rng.shuffle(pool)
        while pool:
            k = int(rng.integers(1, len(pool) + 1))
            loops.append(b.add_loop(pool[:k], annotation=_annotation(rng)))
            pool = pool[k:]
        prof = b.add_profile(loops, annotation=_annotation(rng))
        pos = _pt(rng) if rng.random() < 0.5 else (0.0, 0.0)
        size = float(rng.uniform(0.1, 3)) if rng.random() < 0.5 else 1.0
        sk = b.add_sketch(plane, prof, pos, size, annotation=_annotation(rng))
        sketches.append(sk)
        _random_constraints(b, rng, curves, b.build())
    for k in range(int(rng.integers(0, 4))):
        sk = sketches[int(rng.integers(0, len(sketches)))]
        ext = list(ExtentType)[int(rng.integers(0, 3))]
        op = Operation.NEW_BODY if k == 0 else list(Operation)[int(rng.integers(0, 4))]
        e2 = _num(rng) if ext is ExtentType.TWO_SIDED or rng.random() < 0.2 else 0.0
        b.add_extrude(sk, op, ext, _num(rng), e2, annotation=_annotation(rng))
    return b.build()


def _random_constraints(b: ProgramBuilder, rng, curves, program: CADProgram, point=_pt) -> None:
    kinds = {c: program.curve(c).kind for c in curves}
    lines = [c for c in curves if kinds[c] == "line"]
    for _ in range(int(rng.integers(0, 5))):
        ann = _annotation(rng)
        choice = int(rng.integers(0, 9))
        c = curves[int(rng.integers(0, len(curves)))]
        if choice == 0 and lines:
            b.add_constraint(Horizontal(int(rng.choice(lines))), annotation=ann)
        elif choice == 1 and lines:
            b.add_constraint(Vertical(int(rng.choice(lines))), annotation=ann)
        elif choice == 2:
            b.add_constraint(FixSize(c, float(rng.uniform(0.1, 5))), annotation=ann)
        elif choice == 3:
            sel = {"line": ("start", "end"), "arc": ("start", "end", "mid", "center"),
                   "circle": ("center",)}
            pa = PointRef(c, str(rng.choice(sel[kinds[c]])))
            c2 = curves[int(rng.integers(0, len(curves)))]
            pb = PointRef(c2, str(rng.choice(sel[kinds[c2]]))) if rng.random() < 0.6 \
                else point(rng)
            b.add_constraint(Coincident(pa, pb), annotation=ann)
        elif choice in (4, 5) and len(lines) >= 2:
            a, d = rng.choice(lines, 2, replace=False)
            cls = Parallel if choice == 4 else Perpendicular
            b.add_constraint(cls(int(a), int(d)), annotation=ann)
        elif choice == 6 and len(curves) >= 2:
            others = [x for x in curves if x != c and not (kinds[x] == kinds[c] == "line")]
            if others:
                b.add_constraint(Tangent(c, int(rng.choice(others))), annotation=ann)
        elif choice == 7 and lines:
            same = [x for x in curves if kinds[x] == kinds[c]]
            b.add_constraint(Mirror(c, int(rng.choice(same)), int(rng.choice(lines))),
                             annotation=ann)
        elif choice == 8 and len(lines) >= 2:
            a, d = rng.choice(lines, 2, replace=False)
            b.add_constraint(Angle(int(a), int(d), float(rng.uniform(-math.pi, math.pi)),
                                   bool(rng.random() < 0.5)), annotation=ann)


def mutate_text(text: str, rng) -> str:
    """Corrupt or truncate canonical code so it must fail to parse."""
    lines = text.splitlines()
    kind = int(rng.integers(0, 6))
    stmt_rows = [i for i, ln in enumerate(lines) if "(" in ln and not ln.startswith("#")]
    i = int(rng.choice(stmt_rows))
    ln = lines[i]
    if kind == 0:
        # cut mid-statement: drop everything after a random point inside a call
        cut = int(rng.integers(ln.find("(") + 1, len(ln)))
        return "\n".join(lines[:i] + [ln[:cut]])
    if kind == 1:
        lines[i] = ln.replace("(", "(@", 1)
    elif kind == 2:
        lines[i] = ln.replace("(", "_bogus(", 1)
    elif kind == 3:
        lines[i] = ln[:ln.rfind(")")] + ", 1, 2, 3, 4, 5)"
    elif kind == 4:
        lines.insert(i, "x = add_line(Undefined_Name, (1, 2))")
    else:
        lines[i] = ln[:-1]
    return "\n".join(lines) + "\n"


def _unit_pt(rng):
    return tuple(float(v) for v in rng.uniform(-3, 3, 2))


def random_sketch(rng, n_curves: int = 4, n_constraints: int = 5):
    """Curves with O(1) coordinates plus random constraints among them."""
    b = ProgramBuilder()
    curves = []
    for _ in range(n_curves):
        kind = rng.integers(0, 3)
        if kind == 0:
            p, q = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
            if np.linalg.norm(p - q) < 0.2:
                q = p + 0.5
            curves.append(b.add_line(tuple(p), tuple(q)))
        elif kind == 1:
            c = rng.uniform(-1, 1, 2)
            r = rng.uniform(0.3, 2)
            a0 = rng.uniform(0, 2 * math.pi)
            sw = rng.uniform(0.5, 5) * rng.choice([-1, 1])
            pts = [tuple(c + r * np.array([math.cos(a), math.sin(a)]))
                   for a in (a0, a0 + sw, a0 + sw / 2)]
            curves.append(b.add_curve(Arc(*pts)))
        else:
            curves.append(b.add_circle(tuple(rng.uniform(-2, 2, 2)), rng.uniform(0.2, 1.5)))
    program = b.build()
    before = len(program.statements)
    while len(b.build().statements) - before < n_constraints:
        _random_constraints(b, rng, curves, program, _unit_pt)
    program = b.build()
    cons = [s.constraint for s in program.statements[before:]]
    return {c: program.curve(c) for c in curves}, cons
