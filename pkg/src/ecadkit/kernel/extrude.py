"""Prismatic extrusion of sketch profiles into closed meshes."""

from __future__ import annotations

import numpy as np

from ..curves import EPS_DEGENERATE
from ..model import DEFAULT_CHORD_REL, Extrusion, Sketch, loops_diag
from .mesh import KernelError, SolidMesh
from .triangulate import triangulate_profile


class DegenerateExtent(KernelError):
    pass


def default_chord_tol(sketch: Sketch, rel: float = DEFAULT_CHORD_REL) -> float:
    """Chord tolerance in world units: rel times the placed profile's bbox diagonal."""
    return rel * sketch.size * loops_diag(sketch.profile.loops)


def extrude(sketch: Sketch, extrusion: Extrusion, chord_tol: float | None = None) -> SolidMesh:
    """Sweep the profile along the sketch normal over the extent span.

    chord_tol is measured in world units; the profile is tessellated in
    sketch units at chord_tol / size.
    """
    if chord_tol is None:
        chord_tol = default_chord_tol(sketch)
    lo, hi = extrusion.span()
    if not hi - lo > EPS_DEGENERATE:
        raise DegenerateExtent(f"extrusion span [{lo}, {hi}] is empty")
    pm = triangulate_profile(sketch.profile, chord_tol / sketch.size)
    base = sketch.to_world(pm.points)
    normal = np.asarray(sketch.plane.normal, dtype=float)
    n = len(base)
    verts = np.concatenate([base + lo * normal, base + hi * normal])
    tris = [pm.triangles + n, pm.triangles[:, ::-1]]
    for ring in pm.rings:
        b0 = ring
        b1 = np.roll(ring, -1)
        t0, t1 = b0 + n, b1 + n
        tris.append(np.column_stack([b0, b1, t1]))
        tris.append(np.column_stack([b0, t1, t0]))
    return SolidMesh(verts, np.concatenate(tris))
