"""Residuals, Jacobians, degrees of freedom and a Levenberg-Marquardt solver
for sketch constraints.

Curves are parameterized by their control points: a line by (sx, sy, ex, ey),
an arc by its start, end and mid points (6 values), a circle by (cx, cy, r).
Residuals are written once over a tiny forward-mode dual number so the same
code yields values and exact derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .curves import Arc, Circle, Curve, Line, distance
from .model import (
    Angle,
    CADProgram,
    Coincident,
    Constraint,
    FixSize,
    Horizontal,
    Mirror,
    Parallel,
    Perpendicular,
    PointRef,
    Tangent,
    Vertical,
    constraint_curves,
)

TOL_RESIDUAL = 1e-10
MAX_ITERATIONS = 100
LAMBDA_INIT = 1e-3
RANK_RTOL = 1e-9
RANK_ATOL = 1e-12  # singular values below this are rounding noise
FD_STEP = 1e-6

_N_PARAMS = {"line": 4, "arc": 6, "circle": 3}


class ConstraintError(ValueError):
    pass


class UnsupportedPair(ConstraintError):
    pass


class NonConvergence(ConstraintError):
    def __init__(self, result: "SolveResult"):
        super().__init__(f"solver did not converge: residual {result.residual_norm:.3e} "
                         f"after {result.iterations} iterations")
        self.result = result
        self.best_residual = result.residual_norm


class DofStatus(str, Enum):
    UNDER_CONSTRAINED = "UnderConstrained"
    FULLY_DEFINED = "FullyDefined"
    OVER_CONSISTENT = "OverConstrainedConsistent"
    OVER_INCONSISTENT = "OverConstrainedInconsistent"


# ---------------------------------------------------------------------------
# forward-mode dual numbers over a local parameter block


class _D:
    __slots__ = ("v", "g")

    def __init__(self, v: float, g: np.ndarray):
        self.v = v
        self.g = g

    def __add__(self, o):
        if isinstance(o, _D):
            return _D(self.v + o.v, self.g + o.g)
        return _D(self.v + o, self.g)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, _D):
            return _D(self.v - o.v, self.g - o.g)
        return _D(self.v - o, self.g)

    def __rsub__(self, o):
        return _D(o - self.v, -self.g)

    def __neg__(self):
        return _D(-self.v, -self.g)

    def __mul__(self, o):
        if isinstance(o, _D):
            return _D(self.v * o.v, self.g * o.v + o.g * self.v)
        return _D(self.v * o, self.g * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, _D):
            return _D(self.v / o.v, (self.g * o.v - o.g * self.v) / (o.v * o.v))
        return _D(self.v / o, self.g / o)

    def __rtruediv__(self, o):
        return _D(o / self.v, -o * self.g / (self.v * self.v))


def _val(x) -> float:
    return x.v if isinstance(x, _D) else float(x)


def _sqrt(x):
    if isinstance(x, _D):
        s = math.sqrt(x.v)
        return _D(s, x.g / (2.0 * s) if s > 0 else np.zeros_like(x.g))
    return math.sqrt(x)


def _atan2(y, x):
    yv, xv = _val(y), _val(x)
    out = math.atan2(yv, xv)
    den = xv * xv + yv * yv
    if not isinstance(y, _D) and not isinstance(x, _D):
        return out
    gy = y.g if isinstance(y, _D) else 0.0
    gx = x.g if isinstance(x, _D) else 0.0
    g = (xv * gy - yv * gx) / den if den > 0 else np.zeros_like(gy + gx)
    return _D(out, g)


def _abs(x):
    if isinstance(x, _D):
        return -x if x.v < 0 else x
    return abs(x)


# 2D helpers over (x, y) pairs of dual-or-float values


def _sub2(a, b):
    return (a[0] - b[0], a[1] - b[1])


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _dot2(a, b):
    return a[0] * b[0] + a[1] * b[1]


def _norm2(a):
    return _sqrt(a[0] * a[0] + a[1] * a[1])


def _unit2(a):
    n = _norm2(a)
    return (a[0] / n, a[1] / n)


def _circum(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    a2 = ax * ax + ay * ay
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    center = (ux, uy)
    return center, _norm2(_sub2(a, center))


def _reflect(p, a, b):
    """Reflect point p across the infinite line through a and b."""
    u = _unit2(_sub2(b, a))
    w = _sub2(p, a)
    t = _dot2(w, u)
    foot = (a[0] + u[0] * t, a[1] + u[1] * t)
    return (2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1])


class _CurveView:
    """Accessors over a curve's parameter block (floats or duals)."""

    def __init__(self, kind: str, p: Sequence):
        self.kind = kind
        self.p = p

    def point(self, which: str):
        p = self.p
        if self.kind == "line":
            return {"start": (p[0], p[1]), "end": (p[2], p[3])}[which]
        if self.kind == "circle":
            if which != "center":
                raise ConstraintError(f"circle has no point {which!r}")
            return (p[0], p[1])
        pts = {"start": (p[0], p[1]), "end": (p[2], p[3]), "mid": (p[4], p[5])}
        if which == "center":
            return _circum(pts["start"], pts["mid"], pts["end"])[0]
        return pts[which]

    def control_points(self):
        p = self.p
        if self.kind == "line":
            return [(p[0], p[1]), (p[2], p[3])]
        if self.kind == "arc":
            return [(p[0], p[1]), (p[2], p[3]), (p[4], p[5])]
        return [(p[0], p[1])]

    def direction(self):
        p = self.p
        return (p[2] - p[0], p[3] - p[1])

    def circle(self):
        """(center, radius) of a circle or an arc's circumcircle."""
        p = self.p
        if self.kind == "circle":
            return (p[0], p[1]), p[2]
        if self.kind == "arc":
            return _circum((p[0], p[1]), (p[4], p[5]), (p[2], p[3]))
        raise ConstraintError("a line has no radius")


# ---------------------------------------------------------------------------
# parameter layout


@dataclass(frozen=True)
class ParamLayout:
    curve_ids: tuple[int, ...]
    kinds: tuple[str, ...]
    offsets: tuple[int, ...]
    n_params: int

    def slice(self, curve_id: int) -> slice:
        k = self.curve_ids.index(curve_id)
        return slice(self.offsets[k], self.offsets[k] + _N_PARAMS[self.kinds[k]])


def make_layout(curves: Mapping[int, Curve]) -> ParamLayout:
    ids = tuple(sorted(curves))
    kinds = tuple(curves[i].kind for i in ids)
    offsets, n = [], 0
    for k in kinds:
        offsets.append(n)
        n += _N_PARAMS[k]
    return ParamLayout(ids, kinds, tuple(offsets), n)


def curve_params(c: Curve) -> list[float]:
    if isinstance(c, Line):
        return [*c.start, *c.end]
    if isinstance(c, Arc):
        return [*c.start, *c.end, *c.mid]
    return [*c.center, c.radius]


def curve_from_params(kind: str, p: Sequence[float]) -> Curve:
    p = [float(x) for x in p]
    if kind == "line":
        return Line((p[0], p[1]), (p[2], p[3]))
    if kind == "arc":
        return Arc((p[0], p[1]), (p[2], p[3]), (p[4], p[5]))
    return Circle((p[0], p[1]), p[2])


def pack(curves: Mapping[int, Curve], layout: ParamLayout | None = None) -> np.ndarray:
    layout = layout or make_layout(curves)
    return np.array([v for i in layout.curve_ids for v in curve_params(curves[i])], dtype=float)


def unpack(x: np.ndarray, layout: ParamLayout) -> dict[int, Curve]:
    return {cid: curve_from_params(kind, x[off:off + _N_PARAMS[kind]])
            for cid, kind, off in zip(layout.curve_ids, layout.kinds, layout.offsets)}


# ---------------------------------------------------------------------------
# residual system


class ConstraintSystem:
    """Residual vector r(x) and Jacobian J(x) for a set of curves and constraints.

    Branch choices (circle/circle tangency) are frozen from the configuration
    passed at construction so the solver never hops between branches.
    """

    def __init__(self, curves: Mapping[int, Curve], constraints: Sequence[Constraint]):
        self.layout = make_layout(curves)
        self.constraints = list(constraints)
        self.x0 = pack(curves, self.layout)
        self._blocks: list[tuple[Constraint, np.ndarray, tuple[str, ...], int]] = []
        self._branch: list[float] = []
        for c in self.constraints:
            ids = constraint_curves(c)
            for i in ids:
                if i not in curves:
                    raise ConstraintError(f"constraint {c} references curve {i} outside the sketch")
            kinds = tuple(curves[i].kind for i in ids)
            idx = np.concatenate([np.arange(self.layout.offsets[self.layout.curve_ids.index(i)],
                                            self.layout.offsets[self.layout.curve_ids.index(i)]
                                            + _N_PARAMS[k]) for i, k in zip(ids, kinds)]) \
                if ids else np.zeros(0, dtype=int)
            self._check(c, kinds)
            branch = 0.0
            if isinstance(c, Tangent) and "line" not in kinds:
                branch = self._pick_branch(c, kinds, idx)
            self._blocks.append((c, idx, kinds, len(self._branch)))
            self._branch.append(branch)
        self.n_residuals = sum(len(self._eval_block(b, self.x0, False)) for b in self._blocks)

    @property
    def n_params(self) -> int:
        return self.layout.n_params

    @staticmethod
    def _check(c: Constraint, kinds: tuple[str, ...]) -> None:
        if isinstance(c, (Horizontal, Vertical, Parallel, Perpendicular, Angle)):
            if any(k != "line" for k in kinds):
                raise ConstraintError(f"{c.command} requires lines, got {kinds}")
        elif isinstance(c, Tangent):
            if kinds == ("line", "line"):
                raise UnsupportedPair("tangency between two lines is not supported")
        elif isinstance(c, Mirror):
            if kinds[0] != kinds[1]:
                raise ConstraintError("mirror requires curves of the same type")
            if kinds[2] != "line":
                raise ConstraintError("mirror axis must be a line")

    def _views(self, kinds, local):
        views, k = [], 0
        for kind in kinds:
            n = _N_PARAMS[kind]
            views.append(_CurveView(kind, local[k:k + n]))
            k += n
        return views

    def _pick_branch(self, c: Tangent, kinds, idx) -> float:
        views = self._views(kinds, list(self.x0[idx]))
        (ca, ra), (cb, rb) = views[0].circle(), views[1].circle()
        d = _val(_norm2(_sub2(ca, cb)))
        ext = abs(d - (ra + rb))
        internal = abs(d - abs(ra - rb))
        if internal < ext:
            return 1.0 if ra >= rb else -1.0
        return 0.0

    def _eval_block(self, block, x: np.ndarray, dual: bool) -> list:
        c, idx, kinds, bi = block
        vals = x[idx]
        if dual:
            eye = np.eye(len(idx))
            local = [_D(float(v), eye[k]) for k, v in enumerate(vals)]
        else:
            local = [float(v) for v in vals]
        v = self._views(kinds, local)
        if isinstance(c, Horizontal):
            p = v[0].p
            return [p[3] - p[1]]
        if isinstance(c, Vertical):
            p = v[0].p
            return [p[2] - p[0]]
        if isinstance(c, FixSize):
            if v[0].kind == "line":
                return [_norm2(v[0].direction()) - c.size]
            return [v[0].circle()[1] - c.size]
        if isinstance(c, Coincident):
            pts = []
            k = 0
            for p in (c.point_a, c.point_b):
                if isinstance(p, PointRef):
                    pts.append(v[k].point(p.which))
                    k += 1
                else:
                    pts.append((float(p[0]), float(p[1])))
            d = _sub2(pts[0], pts[1])
            return [d[0], d[1]]
        if isinstance(c, Parallel):
            return [_cross2(_unit2(v[0].direction()), _unit2(v[1].direction()))]
        if isinstance(c, Perpendicular):
            return [_dot2(_unit2(v[0].direction()), _unit2(v[1].direction()))]
        if isinstance(c, Angle):
            da, db = v[0].direction(), v[1].direction()
            ang = _atan2(_cross2(da, db), _dot2(da, db))
            if c.clockwise:
                ang = -ang
            r = ang - c.angle
            wrap = 2.0 * math.pi * math.floor((_val(r) + math.pi) / (2.0 * math.pi))
            return [r - wrap]
        if isinstance(c, Tangent):
            if "line" in kinds:
                line, other = (v[0], v[1]) if kinds[0] == "line" else (v[1], v[0])
                center, r = other.circle()
                s = (line.p[0], line.p[1])
                d = line.direction()
                dist = _abs(_cross2(d, _sub2(center, s))) / _norm2(d)
                return [dist - r]
            (ca, ra), (cb, rb) = v[0].circle(), v[1].circle()
            d = _norm2(_sub2(ca, cb))
            branch = self._branch[bi]
            if branch == 0.0:
                return [d - (ra + rb)]
            return [d - branch * (ra - rb)]
        if isinstance(c, Mirror):
            a, b, axis = v
            s = (axis.p[0], axis.p[1])
            e = (axis.p[2], axis.p[3])
            rows = []
            for pa, pb in zip(a.control_points(), b.control_points()):
                m = _reflect(pa, s, e)
                rows += [m[0] - pb[0], m[1] - pb[1]]
            if a.kind == "circle":
                rows.append(a.p[2] - b.p[2])
            return rows
        raise ConstraintError(f"unknown constraint {c!r}")

    def residuals(self, x: np.ndarray | None = None) -> np.ndarray:
        x = self.x0 if x is None else np.asarray(x, dtype=float)
        out = []
        for b in self._blocks:
            out.extend(_val(r) for r in self._eval_block(b, x, False))
        return np.array(out, dtype=float)

    def jacobian(self, x: np.ndarray | None = None) -> np.ndarray:
        """Analytic Jacobian via forward-mode dual numbers."""
        x = self.x0 if x is None else np.asarray(x, dtype=float)
        J = np.zeros((self.n_residuals, self.n_params))
        row = 0
        for b in self._blocks:
            idx = b[1]
            for r in self._eval_block(b, x, True):
                if isinstance(r, _D):
                    # a curve may appear twice in one constraint, so accumulate
                    np.add.at(J[row], idx, r.g)
                row += 1
        return J

    def numeric_jacobian(self, x: np.ndarray | None = None, step: float = FD_STEP) -> np.ndarray:
        """Central-difference Jacobian, used to cross-check the analytic one."""
        x = self.x0 if x is None else np.asarray(x, dtype=float)
        J = np.zeros((self.n_residuals, self.n_params))
        for k in range(self.n_params):
            xp = x.copy()
            xm = x.copy()
            xp[k] += step
            xm[k] -= step
            J[:, k] = (self.residuals(xp) - self.residuals(xm)) / (2.0 * step)
        return J

    def curves(self, x: np.ndarray) -> dict[int, Curve]:
        return unpack(x, self.layout)


def build_residuals(curves: Mapping[int, Curve], constraints: Sequence[Constraint],
                    params: np.ndarray | None = None) -> np.ndarray:
    return ConstraintSystem(curves, constraints).residuals(params)


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class SolveResult:
    params: np.ndarray
    curves: dict[int, Curve]
    residual_norm: float
    iterations: int
    converged: bool


def levenberg_marquardt(system: ConstraintSystem, x0: np.ndarray | None = None,
                        tol: float = TOL_RESIDUAL, max_iter: int = MAX_ITERATIONS,
                        lam: float = LAMBDA_INIT) -> SolveResult:
    x = (system.x0 if x0 is None else np.asarray(x0, dtype=float)).copy()
    r = system.residuals(x)
    cost = float(r @ r)
    it = 0
    n = system.n_params
    while math.sqrt(cost) > tol and it < max_iter:
        it += 1
        J = system.jacobian(x)
        A = J.T @ J + lam * np.eye(n)
        g = J.T @ r
        try:
            step = np.linalg.solve(A, -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        x_new = x + step
        with np.errstate(all="ignore"):
            r_new = system.residuals(x_new)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new < cost:
            x, r, cost = x_new, r_new, cost_new
            lam = max(lam / 10.0, 1e-15)
        else:
            lam *= 10.0
            if lam > 1e16:
                break
    norm = math.sqrt(cost)
    return SolveResult(x, system.curves(x), norm, it, norm <= tol)


def solve_constraints(curves: Mapping[int, Curve], constraints: Sequence[Constraint],
                      raise_on_failure: bool = True) -> SolveResult:
    """Solve from the current coordinates; the inputs are left untouched."""
    system = ConstraintSystem(curves, constraints)
    res = levenberg_marquardt(system)
    if not res.converged and raise_on_failure:
        raise NonConvergence(res)
    return res


# ---------------------------------------------------------------------------
# degrees of freedom


@dataclass(frozen=True)
class DofReport:
    n_params: int
    n_residuals: int
    jacobian_rank: int
    dof: int
    status: DofStatus
    residual_norm: float
    converged: bool
    degenerate: tuple[int, ...] = ()


def matrix_rank(J: np.ndarray, rtol: float = RANK_RTOL, atol: float = RANK_ATOL) -> int:
    """Singular values above both rtol * s_max and atol count toward the rank.

    The absolute floor stops a Jacobian made only of rounding noise (a
    constraint that holds identically, e.g. mirroring a line onto itself)
    from having its noise counted as rank.
    """
    if J.size == 0:
        return 0
    s = np.linalg.svd(J, compute_uv=False)
    return int((s > max(s[0] * rtol, atol)).sum())


def _sketch_scale(curves: Mapping[int, Curve]) -> float:
    pts = []
    for c in curves.values():
        if isinstance(c, Circle):
            pts += [(c.center[0] - c.radius, c.center[1] - c.radius),
                    (c.center[0] + c.radius, c.center[1] + c.radius)]
        else:
            pts += [c.start, c.end]
    a = np.array(pts)
    return float(np.hypot(*(a.max(axis=0) - a.min(axis=0)))) or 1.0


def _collapsed(curves: Mapping[int, Curve], eps: float) -> tuple[int, ...]:
    out = []
    for i, c in curves.items():
        if isinstance(c, Line):
            bad = distance(c.start, c.end) <= eps
        elif isinstance(c, Circle):
            bad = c.radius <= eps
        else:
            bad = min(distance(c.start, c.end), distance(c.start, c.mid),
                      distance(c.mid, c.end)) <= eps
        if bad:
            out.append(i)
    return tuple(sorted(out))


def analyze_dof(curves: Mapping[int, Curve], constraints: Sequence[Constraint],
                evaluate_at: str = "solved") -> DofReport:
    """Rank-based DOF count plus a consistency verdict from an actual solve.

    The rank is measured at the solved configuration when the solve
    converges (evaluate_at="solved"), otherwise at the given coordinates.
    A solve that only satisfies the constraints by collapsing a curve to a
    point counts as inconsistent.
    """
    system = ConstraintSystem(curves, constraints)
    res = levenberg_marquardt(system)
    x = res.params if (evaluate_at == "solved" and res.converged) else system.x0
    rank = matrix_rank(system.jacobian(x))
    dof = system.n_params - rank
    scale = _sketch_scale(curves)
    degenerate = _collapsed(res.curves, 1e-6 * scale) if res.converged else ()
    before = _collapsed(curves, 1e-6 * scale)
    degenerate = tuple(i for i in degenerate if i not in before)
    consistent = res.converged and not degenerate
    if rank < system.n_residuals or degenerate:
        status = DofStatus.OVER_CONSISTENT if consistent else DofStatus.OVER_INCONSISTENT
    elif dof == 0:
        status = DofStatus.FULLY_DEFINED
    else:
        status = DofStatus.UNDER_CONSTRAINED
    return DofReport(system.n_params, system.n_residuals, rank, dof, status,
                     res.residual_norm, res.converged, degenerate)


# ---------------------------------------------------------------------------
# program-level helpers


def sketch_systems(program: CADProgram) -> list[tuple[int | None, dict[int, Curve], list[Constraint]]]:
    """Group a program's curves and constraints by owning sketch.

    Curves that belong to no sketch form one extra group keyed None.
    """
    from .model import SketchDef
    owner: dict[int, int] = {}
    for si in program.indices(SketchDef):
        for ci in program.sketch_curve_ids(si):
            owner.setdefault(ci, si)
    groups: dict[int | None, tuple[dict[int, Curve], list[Constraint]]] = {}
    for ci, st in enumerate(program.statements):
        if getattr(st, "curve", None) is not None:
            groups.setdefault(owner.get(ci), ({}, []))[0][ci] = st.curve
    for _, c in program.constraints():
        ids = constraint_curves(c)
        key = owner.get(ids[0]) if ids else None
        groups.setdefault(key, ({}, []))[1].append(c)
    out = []
    for key in sorted(groups, key=lambda k: (k is None, k or 0)):
        curves, cons = groups[key]
        out.append((key, curves, cons))
    return out


def solve_program(program: CADProgram, raise_on_failure: bool = True
                  ) -> tuple[CADProgram, list[SolveResult]]:
    """Solve every sketch's constraints and write the curves back into a copy."""
    results = []
    updated: dict[int, Curve] = {}
    for _, curves, cons in sketch_systems(program):
        if not cons:
            continue
        res = solve_constraints(curves, cons, raise_on_failure)
        results.append(res)
        updated.update(res.curves)
    return program.replace_curves(updated), results
