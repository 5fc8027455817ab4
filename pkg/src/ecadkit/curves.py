"""Sketch curve primitives and their planar geometry.

Three curve kinds are supported: straight lines, three-point arcs and full
circles.  Everything here works in sketch-plane (u, v) coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]

EPS_DEGENERATE = 1e-9

# Tessellation aims for half the requested chord tolerance; see _segment_count.
_CHORD_SAFETY = 0.5
_MAX_SEGMENTS = 4096
MIN_CIRCLE_SEGMENTS = 8
MIN_ARC_SEGMENTS = 4


class DegenerateCurve(ValueError):
    pass


@dataclass(frozen=True)
class Line:
    start: Vec2
    end: Vec2

    kind = "line"


@dataclass(frozen=True)
class Arc:
    start: Vec2
    end: Vec2
    mid: Vec2

    kind = "arc"


@dataclass(frozen=True)
class Circle:
    center: Vec2
    radius: float

    kind = "circle"


Curve = Union[Line, Arc, Circle]


@dataclass(frozen=True)
class Polyline2:
    points: np.ndarray
    closed: bool


def _sub(a: Vec2, b: Vec2) -> Vec2:
    return (a[0] - b[0], a[1] - b[1])


def _cross(a: Vec2, b: Vec2) -> float:
    return a[0] * b[1] - a[1] * b[0]


def distance(a: Vec2, b: Vec2) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def circumcircle(a: Vec2, b: Vec2, c: Vec2) -> tuple[Vec2, float]:
    """Center and radius of the circle through three points."""
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        raise DegenerateCurve("collinear points have no circumcircle")
    a2 = ax * ax + ay * ay
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    return (ux, uy), math.hypot(ax - ux, ay - uy)


def arc_geometry(arc: Arc) -> tuple[Vec2, float, float, float]:
    """Return (center, radius, start_angle, sweep) for an arc.

    The sweep is signed: positive when the arc runs counter-clockwise from
    start through mid to end.
    """
    center, radius = circumcircle(arc.start, arc.mid, arc.end)
    a0 = math.atan2(arc.start[1] - center[1], arc.start[0] - center[0])
    am = math.atan2(arc.mid[1] - center[1], arc.mid[0] - center[0])
    a1 = math.atan2(arc.end[1] - center[1], arc.end[0] - center[0])
    ccw_end = (a1 - a0) % (2.0 * math.pi)
    ccw_mid = (am - a0) % (2.0 * math.pi)
    if ccw_mid < ccw_end:
        sweep = ccw_end
    else:
        sweep = ccw_end - 2.0 * math.pi
    return center, radius, a0, sweep


def is_degenerate(curve: Curve, eps: float = EPS_DEGENERATE) -> bool:
    if isinstance(curve, Line):
        return distance(curve.start, curve.end) <= eps
    if isinstance(curve, Circle):
        return not curve.radius > eps
    s, e, m = curve.start, curve.end, curve.mid
    if distance(s, e) <= eps or distance(s, m) <= eps or distance(m, e) <= eps:
        return True
    area2 = abs(_cross(_sub(m, s), _sub(e, s)))
    return area2 <= eps * distance(s, e) * distance(s, m)


def endpoints(curve: Curve) -> tuple[Vec2, Vec2] | None:
    """(start, end) of an open curve; None for circles."""
    if isinstance(curve, Circle):
        return None
    return curve.start, curve.end


def curve_length(curve: Curve) -> float:
    if isinstance(curve, Line):
        return distance(curve.start, curve.end)
    if isinstance(curve, Circle):
        return 2.0 * math.pi * curve.radius
    _, r, _, sweep = arc_geometry(curve)
    return r * abs(sweep)


def curve_bbox(curve: Curve) -> tuple[float, float, float, float]:
    """Exact (umin, vmin, umax, vmax) of a curve."""
    if isinstance(curve, Line):
        (x0, y0), (x1, y1) = curve.start, curve.end
        return min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)
    if isinstance(curve, Circle):
        (cx, cy), r = curve.center, curve.radius
        return cx - r, cy - r, cx + r, cy + r
    (cx, cy), r, a0, sweep = arc_geometry(curve)
    xs = [curve.start[0], curve.end[0]]
    ys = [curve.start[1], curve.end[1]]
    for k, (dx, dy) in enumerate(((1, 0), (0, 1), (-1, 0), (0, -1))):
        ang = k * math.pi / 2.0
        t = (ang - a0) % (2.0 * math.pi) if sweep > 0 else (a0 - ang) % (2.0 * math.pi)
        if t <= abs(sweep):
            xs.append(cx + r * dx)
            ys.append(cy + r * dy)
    return min(xs), min(ys), max(xs), max(ys)


def _segment_count(radius: float, sweep: float, chord_tol: float, minimum: int) -> int:
    tol = chord_tol * _CHORD_SAFETY
    if tol >= radius:
        return minimum
    step = 2.0 * math.acos(1.0 - tol / radius)
    n = math.ceil(abs(sweep) / step - 1e-12)
    return int(min(max(n, minimum), _MAX_SEGMENTS))


def circle_segments(radius: float, chord_tol: float) -> int:
    return _segment_count(radius, 2.0 * math.pi, chord_tol, MIN_CIRCLE_SEGMENTS)


def tessellate_curve(curve: Curve, chord_tol: float) -> Polyline2:
    """Approximate a curve by a polyline whose chord deviation stays within chord_tol.

    Arcs get an even number of segments so the authored mid point is a
    vertex; start, mid and end are copied verbatim.  Circles return a closed
    polyline starting at angle zero.
    """
    if not chord_tol > 0:
        raise ValueError("chord_tol must be positive")
    if is_degenerate(curve):
        raise DegenerateCurve(f"degenerate {curve.kind}: {curve}")
    if isinstance(curve, Line):
        return Polyline2(np.array([curve.start, curve.end], dtype=float), closed=False)
    if isinstance(curve, Circle):
        n = circle_segments(curve.radius, chord_tol)
        t = np.arange(n) * (2.0 * math.pi / n)
        cx, cy = curve.center
        pts = np.column_stack([cx + curve.radius * np.cos(t), cy + curve.radius * np.sin(t)])
        return Polyline2(pts, closed=True)
    (cx, cy), r, a0, sweep = arc_geometry(curve)
    n = _segment_count(r, sweep, chord_tol, MIN_ARC_SEGMENTS)
    n += n % 2
    t = a0 + np.arange(n + 1) * (sweep / n)
    pts = np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
    pts[0] = curve.start
    pts[n // 2] = curve.mid
    pts[n] = curve.end
    return Polyline2(pts, closed=False)


def point_at(curve: Curve, s: np.ndarray) -> np.ndarray:
    """Evaluate points at normalized arc-length parameters s in [0, 1]."""
    s = np.asarray(s, dtype=float)
    if isinstance(curve, Line):
        p0 = np.asarray(curve.start, dtype=float)
        p1 = np.asarray(curve.end, dtype=float)
        return p0 + s[:, None] * (p1 - p0)
    if isinstance(curve, Circle):
        t = 2.0 * math.pi * s
        center, r = curve.center, curve.radius
        return np.column_stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)])
    (cx, cy), r, a0, sweep = arc_geometry(curve)
    t = a0 + sweep * s
    return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])


def sample_curves(curves: tuple[Curve, ...] | list[Curve], m: int) -> np.ndarray:
    """Resample a closed chain of curves to m points uniformly spaced by arc length.

    Points lie exactly on the analytic curves, not on a tessellation.
    """
    lengths = np.array([curve_length(c) for c in curves])
    total = float(lengths.sum())
    if total <= 0:
        raise DegenerateCurve("zero-length curve chain")
    targets = np.arange(m) * (total / m)
    bounds = np.concatenate([[0.0], np.cumsum(lengths)])
    which = np.clip(np.searchsorted(bounds, targets, side="right") - 1, 0, len(curves) - 1)
    out = np.empty((m, 2))
    for i, curve in enumerate(curves):
        sel = which == i
        if sel.any():
            local = (targets[sel] - bounds[i]) / lengths[i]
            out[sel] = point_at(curve, np.clip(local, 0.0, 1.0))
    return out
