"""Orthographic software rendering of solid meshes.

Flat-shaded, z-buffered, back-face culled, white background.  The light is
attached to the camera but tilted slightly up and to the right of the view
direction: with a light exactly along the view axis, the three faces of a
cube seen from the isometric direction would all get the same gray.
"""

from __future__ import annotations

import math
import re
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .kernel.mesh import KernelError, SolidMesh

ISO_AXIS = np.full(3, 1.0 / math.sqrt(3.0))
DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 400
DEFAULT_MARGIN = 0.05
DEFAULT_MAX_ANGLE_DEG = 15.0

# light = normalize(view + LIGHT_UP * up + LIGHT_RIGHT * right)
LIGHT_UP = 0.5
LIGHT_RIGHT = 0.25
AMBIENT = 0.2
# brightest foreground gray stays below the white background
DIFFUSE = 0.75
BACKGROUND = 255


class EmptyMesh(KernelError):
    pass


@dataclass(frozen=True)
class ViewSpec:
    direction: tuple[float, float, float]  # unit vector from the model toward the camera
    up: tuple[float, float, float]
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    margin_frac: float = DEFAULT_MARGIN

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.up, self.direction)


def make_view(direction, up=None, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
              margin_frac: float = DEFAULT_MARGIN) -> ViewSpec:
    """Normalize the direction and derive an up vector (world Z projected)."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if up is None:
        up = np.array([0.0, 0.0, 1.0])
        if abs(d @ up) > 0.999:
            up = np.array([0.0, 1.0, 0.0])
    u = np.asarray(up, dtype=float)
    u = u - (u @ d) * d
    u = u / np.linalg.norm(u)
    if width <= 0 or height <= 0:
        raise ValueError("image size must be positive")
    if not 0 <= margin_frac < 0.5:
        raise ValueError("margin_frac must be in [0, 0.5)")
    return ViewSpec(tuple(d.tolist()), tuple(u.tolist()), int(width), int(height),
                    float(margin_frac))


def sample_view_dir(seed: int, max_angle: float) -> np.ndarray:
    """Uniform direction on the spherical cap of half-angle max_angle (radians)
    around the isometric axis (1, 1, 1)/sqrt(3)."""
    if not 0 <= max_angle < math.pi / 2:
        raise ValueError("max_angle must be in [0, pi/2)")
    if max_angle == 0:
        return ISO_AXIS.copy()
    rng = np.random.default_rng(seed)
    u, v = rng.random(2)
    cos_t = 1.0 - u * (1.0 - math.cos(max_angle))
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * v
    e1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    e2 = np.cross(ISO_AXIS, e1)
    d = cos_t * ISO_AXIS + sin_t * (math.cos(phi) * e1 + math.sin(phi) * e2)
    return d / np.linalg.norm(d)


@dataclass(frozen=True, eq=False)
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8, row-major

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


@dataclass(frozen=True, eq=False)
class Raster:
    image: Image
    depth: np.ndarray  # -inf where background
    face: np.ndarray  # triangle index, -1 where background


def _light(spec: ViewSpec) -> np.ndarray:
    d = np.asarray(spec.direction)
    l_vec = d + LIGHT_UP * np.asarray(spec.up) + LIGHT_RIGHT * spec.right
    return l_vec / np.linalg.norm(l_vec)


def rasterize(mesh: SolidMesh, spec: ViewSpec) -> Raster:
    if mesh.is_empty:
        raise EmptyMesh("cannot render an empty mesh")
    W, H = spec.width, spec.height
    d = np.asarray(spec.direction)
    up = np.asarray(spec.up)
    right = spec.right
    v = mesh.vertices
    sx, sy, sz = v @ right, v @ up, v @ d
    used = np.unique(mesh.triangles)
    x0, x1 = sx[used].min(), sx[used].max()
    y0, y1 = sy[used].min(), sy[used].max()
    m = spec.margin_frac
    wx, wy = max(x1 - x0, 1e-300), max(y1 - y0, 1e-300)
    scale = min(W * (1 - 2 * m) / wx, H * (1 - 2 * m) / wy)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    px = W / 2.0 + (sx - cx) * scale
    py = H / 2.0 - (sy - cy) * scale

    c = mesh.corners()
    normals = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    lengths = np.linalg.norm(normals, axis=1)
    normals = normals / np.where(lengths > 0, lengths, 1.0)[:, None]
    front = normals @ d > 0
    shade = AMBIENT + DIFFUSE * np.clip(normals @ _light(spec), 0.0, 1.0)
    gray = np.round(shade * 255).astype(np.uint8)

    depth = np.full((H, W), -np.inf)
    face = np.full((H, W), -1, dtype=np.int64)
    for t in np.nonzero(front)[0]:
        i, j, k = mesh.triangles[t]
        ax, ay, bx, by, qx, qy = px[i], py[i], px[j], py[j], px[k], py[k]
        # screen y points down, so front faces are clockwise on screen
        area = (bx - ax) * (qy - ay) - (qx - ax) * (by - ay)
        if area >= 0:
            continue
        xmin = max(int(math.floor(min(ax, bx, qx) - 0.5)), 0)
        xmax = min(int(math.ceil(max(ax, bx, qx) - 0.5)), W - 1)
        ymin = max(int(math.floor(min(ay, by, qy) - 0.5)), 0)
        ymax = min(int(math.ceil(max(ay, by, qy) - 0.5)), H - 1)
        if xmin > xmax or ymin > ymax:
            continue
        gx, gy = np.meshgrid(np.arange(xmin, xmax + 1) + 0.5, np.arange(ymin, ymax + 1) + 0.5)
        w0 = ((bx - gx) * (qy - gy) - (qx - gx) * (by - gy)) / area
        w1 = ((qx - gx) * (ay - gy) - (ax - gx) * (qy - gy)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        z = w0 * sz[i] + w1 * sz[j] + w2 * sz[k]
        sub = depth[ymin:ymax + 1, xmin:xmax + 1]
        win = inside & (z > sub)
        sub[win] = z[win]
        face[ymin:ymax + 1, xmin:xmax + 1][win] = t
    pixels = np.full((H, W, 3), BACKGROUND, dtype=np.uint8)
    hit = face >= 0
    pixels[hit] = gray[face[hit]][:, None]
    return Raster(Image(W, H, pixels), depth, face)


def render_view(mesh: SolidMesh, spec: ViewSpec) -> Image:
    return rasterize(mesh, spec).image


def render_mesh(mesh: SolidMesh, seed: int = 0, max_angle_deg: float = DEFAULT_MAX_ANGLE_DEG,
                width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                margin_frac: float = DEFAULT_MARGIN) -> Image:
    """Render from a seeded direction near the isometric axis."""
    d = sample_view_dir(seed, math.radians(max_angle_deg))
    return render_view(mesh, make_view(d, width=width, height=height, margin_frac=margin_frac))


# ---------------------------------------------------------------------------
# encoders


def encode_ppm(img: Image) -> bytes:
    return f"P6 {img.width} {img.height} 255\n".encode("ascii") + img.tobytes()


def decode_ppm(data: bytes) -> Image:
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None or int(m.group(3)) != 255:
        raise ValueError("only binary 8-bit PPM is supported")
    w, h = int(m.group(1)), int(m.group(2))
    payload = data[m.end():m.end() + 3 * w * h]
    return Image(w, h, np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy())


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + tag + payload + \
        struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)


def encode_png(img: Image) -> bytes:
    raw = np.zeros((img.height, 1 + 3 * img.width), dtype=np.uint8)
    raw[:, 1:] = img.pixels.reshape(img.height, -1)
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(raw.tobytes(), 9)) + _chunk(b"IEND", b""))


def export_image(img: Image, fmt: str = "png") -> bytes:
    if fmt == "png":
        return encode_png(img)
    if fmt == "ppm":
        return encode_ppm(img)
    raise ValueError(f"unknown image format {fmt!r}")


def image_format(path: str) -> str:
    return "ppm" if str(path).lower().endswith(".ppm") else "png"
