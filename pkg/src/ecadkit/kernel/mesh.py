"""Triangle meshes, their metrics, and point-in-solid classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

EPS_AREA = 1e-14


class KernelError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SolidMesh:
    """Vertices (n, 3) and outward-wound triangles (m, 3).  Arrays are read-only."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @classmethod
    def empty(cls) -> "SolidMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def corners(self) -> np.ndarray:
        """(m, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def transformed(self, scale: float = 1.0, translate=(0.0, 0.0, 0.0)) -> "SolidMesh":
        return SolidMesh(self.vertices * scale + np.asarray(translate, dtype=float),
                         self.triangles)


@dataclass(frozen=True)
class MeshMetrics:
    volume: float
    surface_area: float
    aabb: tuple[tuple[float, float, float], tuple[float, float, float]]
    is_manifold: bool
    euler_characteristic: int
    n_vertices: int
    n_triangles: int

    def as_dict(self) -> dict:
        return {
            "volume": self.volume,
            "surface_area": self.surface_area,
            "aabb": [list(self.aabb[0]), list(self.aabb[1])],
            "is_manifold": self.is_manifold,
            "euler_characteristic": self.euler_characteristic,
            "n_vertices": self.n_vertices,
            "n_triangles": self.n_triangles,
        }


def signed_volume(mesh: SolidMesh) -> float:
    if mesh.is_empty:
        return 0.0
    c = mesh.corners()
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def triangle_areas(mesh: SolidMesh) -> np.ndarray:
    c = mesh.corners()
    return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


def _directed_edges(tris: np.ndarray) -> np.ndarray:
    return np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])


def is_edge_manifold(tris: np.ndarray) -> bool:
    """Every directed edge occurs once and its reverse occurs once."""
    if len(tris) == 0:
        return False
    if np.any((tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])):
        return False
    e = _directed_edges(tris)
    n = int(tris.max()) + 1
    key = e[:, 0] * n + e[:, 1]
    rkey = e[:, 1] * n + e[:, 0]
    if len(np.unique(key)) != len(key):
        return False
    return bool(np.isin(rkey, key, assume_unique=True).all())


def euler_characteristic(tris: np.ndarray) -> int:
    if len(tris) == 0:
        return 0
    e = np.sort(_directed_edges(tris), axis=1)
    n_edges = len(np.unique(e, axis=0))
    n_verts = len(np.unique(tris))
    return int(n_verts - n_edges + len(tris))


def mesh_metrics(mesh: SolidMesh) -> MeshMetrics:
    if mesh.is_empty:
        return MeshMetrics(0.0, 0.0, ((0.0,) * 3, (0.0,) * 3), False, 0, 0, 0)
    used = mesh.vertices[np.unique(mesh.triangles)]
    lo = tuple(float(x) for x in used.min(axis=0))
    hi = tuple(float(x) for x in used.max(axis=0))
    areas = triangle_areas(mesh)
    manifold = is_edge_manifold(mesh.triangles) and bool(np.all(areas > EPS_AREA * max(
        1.0, float(np.sum((np.array(hi) - np.array(lo)) ** 2)))))
    return MeshMetrics(signed_volume(mesh), float(areas.sum()), (lo, hi), manifold,
                       euler_characteristic(mesh.triangles), len(used), len(mesh.triangles))


def is_watertight(mesh: SolidMesh) -> bool:
    m = mesh_metrics(mesh)
    return m.is_manifold and m.volume > 0


def aabb_diagonal(mesh: SolidMesh) -> float:
    lo, hi = mesh_metrics(mesh).aabb
    return float(np.linalg.norm(np.subtract(hi, lo)))


# ---------------------------------------------------------------------------
# welding


def weld_groups(points: np.ndarray, tol: float) -> np.ndarray:
    """Label points so that points within tol (transitively) share a label."""
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return np.arange(n)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    return labels


def weld(vertices: np.ndarray, triangles: np.ndarray, tol: float) -> SolidMesh:
    """Merge nearby vertices, drop collapsed triangles and unused vertices."""
    labels = weld_groups(vertices, tol)
    k = labels.max() + 1 if len(labels) else 0
    # representative = first member of each group, keeps coordinates exact
    rep = np.full(k, -1, dtype=np.int64)
    order = np.arange(len(labels))[::-1]
    rep[labels[order]] = order
    tris = labels[triangles]
    ok = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    return compact(vertices[rep], tris[ok])


def compact(vertices: np.ndarray, triangles: np.ndarray) -> SolidMesh:
    used, inv = np.unique(triangles, return_inverse=True)
    return SolidMesh(vertices[used], inv.reshape(-1, 3))


def merge(meshes) -> SolidMesh:
    vs, ts, off = [], [], 0
    for m in meshes:
        vs.append(m.vertices)
        ts.append(m.triangles + off)
        off += len(m.vertices)
    if not vs:
        return SolidMesh.empty()
    return SolidMesh(np.concatenate(vs), np.concatenate(ts))


# ---------------------------------------------------------------------------
# point-in-solid by +z ray parity

# Tiny irrational offset so rays avoid passing exactly through mesh edges.
_JITTER = np.array([np.sqrt(2.0), np.sqrt(3.0)]) * 1e-9


def _projected(mesh: SolidMesh):
    c = mesh.corners()
    a, b, d = c[:, 0], c[:, 1], c[:, 2]
    det = (b[:, 0] - a[:, 0]) * (d[:, 1] - a[:, 1]) - (d[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    scale = np.abs(c[:, :, :2]).max() if len(c) else 1.0
    keep = np.abs(det) > 1e-14 * max(scale, 1.0) ** 2
    return c[keep], det[keep]


def _column_hits(tri, det, px, py):
    """z of the ray hits of triangle tri over columns (px, py); NaN where missed."""
    a, b, c = tri
    w1 = ((px - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (py - a[1])) / det
    w2 = ((b[0] - a[0]) * (py - a[1]) - (px - a[0]) * (b[1] - a[1])) / det
    w0 = 1.0 - w1 - w2
    inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    z = w0 * a[2] + w1 * b[2] + w2 * c[2]
    return np.where(inside, z, np.nan)


def occupancy_grid(mesh: SolidMesh, xs, ys, zs) -> np.ndarray:
    """Boolean (len(xs), len(ys), len(zs)) inside mask on a rectilinear lattice.

    xs, ys, zs must be sorted ascending.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    zs = np.asarray(zs, dtype=float)
    nx, ny, nz = len(xs), len(ys), len(zs)
    counts = np.zeros((nx, ny, nz + 1), dtype=np.int32)
    if mesh.is_empty:
        return np.zeros((nx, ny, nz), dtype=bool)
    span = max(float(np.ptp(xs)) if nx > 1 else 1.0, float(np.ptp(ys)) if ny > 1 else 1.0, 1e-12)
    jx, jy = _JITTER * span
    cxs, cys = xs + jx, ys + jy
    tris, dets = _projected(mesh)
    for tri, det in zip(tris, dets):
        i0 = np.searchsorted(cxs, tri[:, 0].min(), "left")
        i1 = np.searchsorted(cxs, tri[:, 0].max(), "right")
        j0 = np.searchsorted(cys, tri[:, 1].min(), "left")
        j1 = np.searchsorted(cys, tri[:, 1].max(), "right")
        if i0 >= i1 or j0 >= j1:
            continue
        px, py = np.meshgrid(cxs[i0:i1], cys[j0:j1], indexing="ij")
        z = _column_hits(tri, det, px, py)
        hit = ~np.isnan(z)
        if not hit.any():
            continue
        ii, jj = np.nonzero(hit)
        k = np.searchsorted(zs, z[hit], "left")
        # a hit at height z lies above every sample with index < k
        np.add.at(counts, (ii + i0, jj + j0, np.zeros_like(k)), 1)
        np.add.at(counts, (ii + i0, jj + j0, k), -1)
    return (np.cumsum(counts, axis=2)[:, :, :nz] % 2) == 1


def contains(mesh: SolidMesh, points) -> np.ndarray:
    """Inside test for arbitrary points (n, 3)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if mesh.is_empty or len(pts) == 0:
        return np.zeros(len(pts), dtype=bool)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    jx, jy = _JITTER * max(float(np.linalg.norm(hi - lo)), 1e-12)
    order = np.argsort(pts[:, 0], kind="stable")
    sx = pts[order, 0] + jx
    sy = pts[order, 1] + jy
    sz = pts[order, 2]
    count = np.zeros(len(pts), dtype=np.int64)
    tris, dets = _projected(mesh)
    for tri, det in zip(tris, dets):
        i0 = np.searchsorted(sx, tri[:, 0].min(), "left")
        i1 = np.searchsorted(sx, tri[:, 0].max(), "right")
        if i0 >= i1:
            continue
        y = sy[i0:i1]
        sel = (y >= tri[:, 1].min()) & (y <= tri[:, 1].max())
        if not sel.any():
            continue
        idx = np.nonzero(sel)[0] + i0
        z = _column_hits(tri, det, sx[idx], sy[idx])
        above = ~np.isnan(z) & (z > sz[idx])
        count[idx[above]] += 1
    out = np.empty(len(pts), dtype=bool)
    out[order] = (count % 2) == 1
    return out
