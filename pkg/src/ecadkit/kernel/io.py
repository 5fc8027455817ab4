"""STL (binary and ASCII) and OBJ encoders, plus an STL reader."""

from __future__ import annotations

import struct

import numpy as np

from .mesh import SolidMesh, weld

FORMATS = ("stl_binary", "stl_ascii", "obj")

_STL_DTYPE = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def _normals(mesh: SolidMesh) -> np.ndarray:
    c = mesh.corners()
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


def stl_binary(mesh: SolidMesh) -> bytes:
    rec = np.zeros(len(mesh.triangles), dtype=_STL_DTYPE)
    rec["normal"] = _normals(mesh)
    rec["v"] = mesh.corners()
    return bytes(80) + struct.pack("<I", len(rec)) + rec.tobytes()


def stl_ascii(mesh: SolidMesh, name: str = "solid") -> bytes:
    lines = [f"solid {name}"]
    for n, tri in zip(_normals(mesh).tolist(), mesh.corners().tolist()):
        lines.append(f"  facet normal {n[0]!r} {n[1]!r} {n[2]!r}")
        lines.append("    outer loop")
        for p in tri:
            lines.append(f"      vertex {p[0]!r} {p[1]!r} {p[2]!r}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    return ("\n".join(lines) + "\n").encode("ascii")


def obj(mesh: SolidMesh) -> bytes:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    return ("\n".join(lines) + "\n").encode("ascii")


def export_mesh(mesh: SolidMesh, fmt: str = "stl_binary") -> bytes:
    if fmt == "stl_binary":
        return stl_binary(mesh)
    if fmt == "stl_ascii":
        return stl_ascii(mesh)
    if fmt == "obj":
        return obj(mesh)
    raise ValueError(f"unknown mesh format {fmt!r}; expected one of {FORMATS}")


def read_stl(data: bytes, weld_tol: float = 0.0) -> SolidMesh:
    """Read binary or ASCII STL and merge identical (or nearby) vertices."""
    if data[:5] == b"solid" and b"facet" in data[:512]:
        pts = [tuple(float(x) for x in line.split()[1:4])
               for line in data.decode("ascii").splitlines() if line.strip().startswith("vertex")]
        corners = np.array(pts, dtype=float).reshape(-1, 3, 3)
    else:
        (count,) = struct.unpack_from("<I", data, 80)
        rec = np.frombuffer(data, dtype=_STL_DTYPE, count=count, offset=84)
        corners = rec["v"].astype(float)
    flat = corners.reshape(-1, 3)
    tris = np.arange(len(flat)).reshape(-1, 3)
    if weld_tol > 0:
        return weld(flat, tris, weld_tol)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    return SolidMesh(uniq, inv.reshape(-1, 3))


def infer_format(path: str) -> str:
    p = str(path).lower()
    if p.endswith(".obj"):
        return "obj"
    return "stl_binary"
