"""Mesh booleans with BSP trees, followed by a repair pass that welds
vertices, removes T-junctions and re-triangulates, so results are closed
edge-manifold meshes again.

The BSP part follows the classic split-classify-merge scheme: each solid is
stored as a tree of polygons keyed by splitting planes; clipping one tree
against another discards the polygons inside (or outside) the other solid.
Trees are walked with explicit stacks so deep trees do not hit Python's
recursion limit.
"""

from __future__ import annotations

import math
import time
from enum import Enum
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .mesh import KernelError, SolidMesh, compact, is_edge_manifold, merge, signed_volume, \
    weld_groups

WELD_TOL = 1e-7
PLANE_EPS = 1e-8
_RETRIES = ((PLANE_EPS, WELD_TOL), (1e-7, 1e-6), (1e-6, 1e-5))

COPLANAR, FRONT, BACK, SPANNING = 0, 1, 2, 3


class BooleanOp(str, Enum):
    JOIN = "join"
    CUT = "cut"
    INTERSECT = "intersect"


class BooleanFailure(KernelError):
    pass


class EmptyResult(KernelError):
    pass


class BuildTimeout(KernelError):
    pass


# ---------------------------------------------------------------------------
# polygons: (vertices as list of 3-tuples, plane as (nx, ny, nz, w))


def _plane_of(verts):
    nx = ny = nz = 0.0
    n = len(verts)
    cx = cy = cz = 0.0
    for i in range(n):
        x0, y0, z0 = verts[i]
        x1, y1, z1 = verts[(i + 1) % n]
        nx += (y0 - y1) * (z0 + z1)
        ny += (z0 - z1) * (x0 + x1)
        nz += (x0 - x1) * (y0 + y1)
        cx += x0
        cy += y0
        cz += z0
    length = math.sqrt(nx * nx + ny * ny + nz * nz)
    if length == 0.0:
        return None
    nx, ny, nz = nx / length, ny / length, nz / length
    return (nx, ny, nz, (nx * cx + ny * cy + nz * cz) / n)


def _flip(poly):
    verts, (nx, ny, nz, w) = poly
    return (verts[::-1], (-nx, -ny, -nz, -w))


def _split(plane, poly, cof, cob, front, back, eps):
    nx, ny, nz, w = plane
    verts, pplane = poly
    ptype = 0
    ts = []
    types = []
    for v in verts:
        t = nx * v[0] + ny * v[1] + nz * v[2] - w
        ty = BACK if t < -eps else (FRONT if t > eps else COPLANAR)
        ptype |= ty
        ts.append(t)
        types.append(ty)
    if ptype == COPLANAR:
        if nx * pplane[0] + ny * pplane[1] + nz * pplane[2] > 0:
            cof.append(poly)
        else:
            cob.append(poly)
    elif ptype == FRONT:
        front.append(poly)
    elif ptype == BACK:
        back.append(poly)
    else:
        f, b = [], []
        n = len(verts)
        for i in range(n):
            j = (i + 1) % n
            ti, tj = types[i], types[j]
            vi, vj = verts[i], verts[j]
            if ti != BACK:
                f.append(vi)
            if ti != FRONT:
                b.append(vi)
            if (ti | tj) == SPANNING:
                t = ts[i] / (ts[i] - ts[j])
                v = (vi[0] + (vj[0] - vi[0]) * t,
                     vi[1] + (vj[1] - vi[1]) * t,
                     vi[2] + (vj[2] - vi[2]) * t)
                f.append(v)
                b.append(v)
        if len(f) >= 3:
            front.append((f, pplane))
        if len(b) >= 3:
            back.append((b, pplane))


class _Node:
    __slots__ = ("plane", "front", "back", "polygons")

    def __init__(self):
        self.plane = None
        self.front = None
        self.back = None
        self.polygons = []


class _BSP:
    def __init__(self, polygons, eps: float, check: Callable[[], None]):
        self.root = _Node()
        self.eps = eps
        self.check = check
        self.build(polygons)

    def nodes(self):
        out, stack = [], [self.root]
        while stack:
            nd = stack.pop()
            out.append(nd)
            if nd.front is not None:
                stack.append(nd.front)
            if nd.back is not None:
                stack.append(nd.back)
        return out

    def build(self, polygons):
        stack = [(self.root, list(polygons))]
        eps = self.eps
        while stack:
            self.check()
            nd, polys = stack.pop()
            if not polys:
                continue
            if nd.plane is None:
                nd.plane = polys[0][1]
            f, b = [], []
            for p in polys:
                _split(nd.plane, p, nd.polygons, nd.polygons, f, b, eps)
            if f:
                if nd.front is None:
                    nd.front = _Node()
                stack.append((nd.front, f))
            if b:
                if nd.back is None:
                    nd.back = _Node()
                stack.append((nd.back, b))

    def invert(self):
        for nd in self.nodes():
            nd.polygons = [_flip(p) for p in nd.polygons]
            if nd.plane is not None:
                nx, ny, nz, w = nd.plane
                nd.plane = (-nx, -ny, -nz, -w)
            nd.front, nd.back = nd.back, nd.front

    def clip_polygons(self, polygons):
        result = []
        stack = [(self.root, polygons)]
        eps = self.eps
        while stack:
            self.check()
            nd, polys = stack.pop()
            if nd.plane is None:
                result.extend(polys)
                continue
            f, b = [], []
            for p in polys:
                _split(nd.plane, p, f, b, f, b, eps)
            if nd.front is not None:
                if f:
                    stack.append((nd.front, f))
            else:
                result.extend(f)
            if nd.back is not None and b:
                stack.append((nd.back, b))
        return result

    def clip_to(self, other: "_BSP"):
        for nd in self.nodes():
            if nd.polygons:
                nd.polygons = other.clip_polygons(nd.polygons)

    def all_polygons(self):
        out = []
        for nd in self.nodes():
            out.extend(nd.polygons)
        return out


def _mesh_polygons(mesh: SolidMesh, center, scale):
    v = (mesh.vertices - center) / scale
    out = []
    for tri in v[mesh.triangles].tolist():
        verts = [tuple(p) for p in tri]
        plane = _plane_of(verts)
        if plane is not None:
            out.append((verts, plane))
    return out


def _boolean_polygons(op: BooleanOp, pa, pb, eps, check):
    a = _BSP(pa, eps, check)
    b = _BSP(pb, eps, check)
    if op is BooleanOp.JOIN:
        a.clip_to(b)
        b.clip_to(a)
        b.invert()
        b.clip_to(a)
        b.invert()
        a.build(b.all_polygons())
        return a.all_polygons()
    if op is BooleanOp.CUT:
        a.invert()
        a.clip_to(b)
        b.clip_to(a)
        b.invert()
        b.clip_to(a)
        b.invert()
        a.build(b.all_polygons())
        a.invert()
        return a.all_polygons()
    a.invert()
    b.clip_to(a)
    b.invert()
    a.clip_to(b)
    b.clip_to(a)
    a.build(b.all_polygons())
    a.invert()
    return a.all_polygons()


# ---------------------------------------------------------------------------
# repair: polygon soup -> closed triangle mesh


_COLLINEAR_REL = 1e-10


def _convex(a, b, c, eps: float) -> bool:
    """Strictly left turn a -> b -> c; near-collinear corners count as flat."""
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    scale = math.hypot(b[0] - a[0], b[1] - a[1]) * math.hypot(c[0] - b[0], c[1] - b[1])
    return cross > eps + _COLLINEAR_REL * scale


def _ear_clip(pts2: np.ndarray, idx: list[int], eps: float) -> list[tuple[int, int, int]]:
    """Triangulate a simple counter-clockwise polygon given in 2D."""
    ring = list(range(len(idx)))
    out = []
    guard = 0
    while len(ring) > 3 and guard < 10 * len(idx) * len(idx):
        guard += 1
        n = len(ring)
        clipped = False
        for k in range(n):
            i0, i1, i2 = ring[k - 1], ring[k], ring[(k + 1) % n]
            a, b, c = pts2[i0], pts2[i1], pts2[i2]
            if not _convex(a, b, c, eps):
                continue
            ok = True
            for m in ring:
                if m in (i0, i1, i2):
                    continue
                p = pts2[m]
                d0 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                d1 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
                d2 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
                if d0 >= -eps and d1 >= -eps and d2 >= -eps:
                    ok = False
                    break
            if ok:
                out.append((idx[i0], idx[i1], idx[i2]))
                ring.pop(k)
                clipped = True
                break
        if not clipped:
            return out + _fan(pts2, idx, ring, eps)
    if len(ring) == 3:
        a, b, c = (pts2[i] for i in ring)
        if _convex(a, b, c, eps):
            out.append(tuple(idx[i] for i in ring))
    return out


def _fan(pts2, idx, ring, eps):
    # leftovers here are (nearly) degenerate; keep only positive triangles
    out = []
    for k in range(1, len(ring) - 1):
        if _convex(pts2[ring[0]], pts2[ring[k]], pts2[ring[k + 1]], eps):
            out.append((idx[ring[0]], idx[ring[k]], idx[ring[k + 1]]))
    return out


def _insert_t_junctions(polys: list[list[int]], verts: np.ndarray, tol: float):
    edges = {}
    for p in polys:
        n = len(p)
        for i in range(n):
            a, b = p[i], p[(i + 1) % n]
            edges[(min(a, b), max(a, b))] = None
    if not edges:
        return polys
    keys = list(edges)
    ea = np.array([k[0] for k in keys])
    eb = np.array([k[1] for k in keys])
    pa, pb = verts[ea], verts[eb]
    mid = 0.5 * (pa + pb)
    half = 0.5 * np.linalg.norm(pb - pa, axis=1) + tol
    tree = cKDTree(verts)
    cands = tree.query_ball_point(mid, half)
    for k, cand in enumerate(cands):
        if len(cand) <= 2:
            edges[keys[k]] = ()
            continue
        a, b = ea[k], eb[k]
        c = np.array([m for m in cand if m != a and m != b])
        d = pb[k] - pa[k]
        dd = float(d @ d)
        t = (verts[c] - pa[k]) @ d / dd
        foot = pa[k] + t[:, None] * d
        dist = np.linalg.norm(verts[c] - foot, axis=1)
        sel = (t > 0) & (t < 1) & (dist <= tol)
        order = np.argsort(t[sel])
        edges[keys[k]] = tuple(c[sel][order].tolist())
    out = []
    for p in polys:
        n = len(p)
        q = []
        for i in range(n):
            a, b = p[i], p[(i + 1) % n]
            q.append(a)
            inner = edges[(min(a, b), max(a, b))]
            if inner:
                q.extend(inner if a < b else inner[::-1])
        out.append(q)
    return out


def _dedupe_ring(p: list[int]) -> list[int]:
    q = [v for i, v in enumerate(p) if v != p[i - 1]] if len(p) > 1 else p
    # remove spikes a, b, a
    changed = True
    while changed and len(q) >= 3:
        changed = False
        for i in range(len(q)):
            if q[i - 1] == q[(i + 1) % len(q)]:
                j = (i + 1) % len(q)
                q = [v for k, v in enumerate(q) if k not in (i, j)]
                changed = True
                break
    return q


def polygons_to_mesh(polygons, weld_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Weld, fix T-junctions and triangulate a polygon soup."""
    if not polygons:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    flat = np.array([v for verts, _ in polygons for v in verts], dtype=float)
    labels = weld_groups(flat, weld_tol)
    k = int(labels.max()) + 1
    sums = np.zeros((k, 3))
    np.add.at(sums, labels, flat)
    counts = np.bincount(labels, minlength=k)[:, None]
    verts = sums / counts
    polys, normals = [], []
    pos = 0
    for vs, plane in polygons:
        ids = labels[pos:pos + len(vs)].tolist()
        pos += len(vs)
        ids = _dedupe_ring(ids)
        if len(ids) >= 3:
            polys.append(ids)
            normals.append(plane[:3])
    polys = _insert_t_junctions(polys, verts, weld_tol)
    tris = []
    area_eps = weld_tol * weld_tol * 1e-3
    for ids, nrm in zip(polys, normals):
        ids = _dedupe_ring(ids)
        if len(ids) < 3:
            continue
        ax = int(np.argmax(np.abs(nrm)))
        u, v = [(1, 2), (2, 0), (0, 1)][ax]
        pts = verts[ids][:, [u, v]]
        if nrm[ax] < 0:
            pts = pts[:, ::-1]
        x, y = pts[:, 0], pts[:, 1]
        area = 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
        if area <= area_eps:
            continue
        tris.extend(_ear_clip(pts.tolist(), ids, area_eps))
    if not tris:
        return verts, np.zeros((0, 3), dtype=np.int64)
    t = np.array(tris, dtype=np.int64)
    t = _cancel_opposites(t)
    return verts, t


def _cancel_opposites(t: np.ndarray) -> np.ndarray:
    """Drop pairs of identical triangles with opposite winding (zero-thickness sheets)."""
    if len(t) == 0:
        return t
    rot = np.argmin(t, axis=1)
    canon = np.array([np.roll(row, -r) for row, r in zip(t, rot)])
    key = {}
    for i, (a, b, c) in enumerate(canon.tolist()):
        key.setdefault((a, b, c), []).append(i)
    drop = set()
    for (a, b, c), idx in key.items():
        rev = key.get((a, c, b))
        if rev and (a, c, b) > (a, b, c):
            m = min(len(idx), len(rev))
            drop.update(idx[:m])
            drop.update(rev[:m])
    if not drop:
        return t
    keep = np.array([i not in drop for i in range(len(t))])
    return t[keep]


# ---------------------------------------------------------------------------
# public entry point


def _bbox(mesh: SolidMesh):
    return mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)


def csg(op: BooleanOp | str, a: SolidMesh, b: SolidMesh,
        deadline: float | None = None) -> SolidMesh:
    """Boolean of two closed meshes.  Raises EmptyResult when nothing remains."""
    op = BooleanOp(op.value if isinstance(op, Enum) else op)

    def check():
        if deadline is not None and time.monotonic() > deadline:
            raise BuildTimeout("boolean exceeded the time budget")

    if a.is_empty or b.is_empty:
        if op is BooleanOp.JOIN and not (a.is_empty and b.is_empty):
            return b if a.is_empty else a
        if op is BooleanOp.CUT and not a.is_empty:
            return a
        raise EmptyResult(f"{op.value} produced an empty solid")

    alo, ahi = _bbox(a)
    blo, bhi = _bbox(b)
    lo, hi = np.minimum(alo, blo), np.maximum(ahi, bhi)
    center = 0.5 * (lo + hi)
    scale = float(np.linalg.norm(hi - lo)) or 1.0
    gap = 1e-9 * scale
    if np.any(ahi < blo - gap) or np.any(bhi < alo - gap):
        if op is BooleanOp.JOIN:
            return merge([a, b])
        if op is BooleanOp.CUT:
            return a
        raise EmptyResult("intersect of disjoint solids is empty")

    pa = _mesh_polygons(a, center, scale)
    pb = _mesh_polygons(b, center, scale)
    last = None
    for eps, tol in _RETRIES:
        polys = _boolean_polygons(op, pa, pb, eps, check)
        check()
        verts, tris = polygons_to_mesh(polys, tol)
        if len(tris) == 0:
            raise EmptyResult(f"{op.value} produced an empty solid")
        mesh = compact(verts * scale + center, tris)
        if is_edge_manifold(mesh.triangles):
            if signed_volume(mesh) <= 0:
                raise EmptyResult(f"{op.value} produced a solid without volume")
            return mesh
        last = mesh
    raise BooleanFailure(f"{op.value} result is not a closed manifold "
                         f"({len(last.triangles)} triangles after repair)")
