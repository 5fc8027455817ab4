"""Triangulation of nested sketch profiles."""

from __future__ import annotations

from dataclasses import dataclass

import mapbox_earcut
import numpy as np

from ..model import Profile, signed_area, tessellate_loop
from .mesh import KernelError


class TriangulationFailure(KernelError):
    pass


@dataclass(frozen=True)
class ProfileMesh:
    """Planar triangulation of a profile.

    points: (n, 2) vertices shared by caps and walls.
    triangles: (m, 3) counter-clockwise triangles covering the material.
    rings: index arrays, one per loop, oriented with material on the left.
    """

    points: np.ndarray
    triangles: np.ndarray
    rings: tuple[np.ndarray, ...]

    @property
    def area(self) -> float:
        p = self.points[self.triangles]
        return float(0.5 * np.sum((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])))


def clean_ring(ring: np.ndarray, tol: float) -> np.ndarray:
    """Drop repeated and collinear points from a closed ring."""
    pts = list(map(tuple, ring))
    while len(pts) >= 3:
        shorter = _drop_first_removable(pts, tol)
        if len(shorter) == len(pts):
            break
        pts = shorter
    return np.array(pts, dtype=float)


def _drop_first_removable(pts, tol):
    n = len(pts)
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        if abs(b[0] - a[0]) <= tol and abs(b[1] - a[1]) <= tol:
            return pts[:i] + pts[i + 1:]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        span = max(abs(c[0] - a[0]), abs(c[1] - a[1]))
        if abs(cross) <= tol * span and \
                (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]) >= 0:
            return pts[:i] + pts[i + 1:]
    return pts


def triangulate_polygon(outer: np.ndarray, holes: list[np.ndarray]) -> np.ndarray:
    """Ear-clip one outer ring with holes.  Returns indices into the stacked rings."""
    verts = np.concatenate([outer] + holes, axis=0)
    ends = np.cumsum([len(outer)] + [len(h) for h in holes]).astype(np.uint32)
    tri = mapbox_earcut.triangulate_float64(verts, ends).reshape(-1, 3).astype(np.int64)
    return tri


def triangulate_profile(profile: Profile, chord_tol: float) -> ProfileMesh:
    """Triangulate material regions (even nesting depth) of a profile."""
    rings: list[np.ndarray] = []
    for lp, depth in zip(profile.loops, profile.depths):
        ring = tessellate_loop(lp, chord_tol)
        scale = float(np.abs(ring).max()) if len(ring) else 1.0
        ring = clean_ring(ring, 1e-12 * max(scale, 1.0))
        if len(ring) < 3:
            raise TriangulationFailure("loop collapses to fewer than 3 points")
        want_ccw = depth % 2 == 0
        if (signed_area(ring) > 0) != want_ccw:
            ring = ring[::-1]
        rings.append(ring)

    offsets = np.concatenate([[0], np.cumsum([len(r) for r in rings])])
    points = np.concatenate(rings, axis=0) if rings else np.zeros((0, 2))
    ring_idx = tuple(np.arange(offsets[k], offsets[k + 1]) for k in range(len(rings)))

    tris = []
    expected = 0.0
    for k, depth in enumerate(profile.depths):
        if depth % 2:
            continue
        holes = [j for j, p in enumerate(profile.parents) if p == k]
        local = triangulate_polygon(rings[k], [rings[j] for j in holes])
        mapping = np.concatenate([ring_idx[k]] + [ring_idx[j] for j in holes])
        t = mapping[local]
        expected += signed_area(rings[k]) + sum(signed_area(rings[j]) for j in holes)
        tris.append(t)
    triangles = np.concatenate(tris, axis=0) if tris else np.zeros((0, 3), dtype=np.int64)
    if len(triangles):
        p = points[triangles]
        cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        flip = cross < 0
        triangles[flip] = triangles[flip][:, ::-1]
    pm = ProfileMesh(points, triangles, ring_idx)
    if abs(pm.area - expected) > 1e-9 * max(abs(expected), 1e-300) or expected <= 0:
        raise TriangulationFailure(
            f"triangulated area {pm.area:.12g} differs from region area {expected:.12g}")
    return pm
