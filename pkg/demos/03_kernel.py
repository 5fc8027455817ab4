"""Build a block with a through hole, report its metrics and export STL/OBJ."""

import math
import sys
import tempfile
from pathlib import Path

from ecadkit.kernel import build_program, export_mesh, mesh_metrics
from ecadkit.model import ProgramBuilder

b = ProgramBuilder()
plane = b.add_sketchplane((0, 0, 0), (1, 0, 0), (0, 1, 0))
p = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
square = b.add_loop([b.add_line(p[i], p[(i + 1) % 4]) for i in range(4)])
b.add_extrude(b.add_sketch(plane, b.add_profile([square])), "new_body", "one_sided", 2.0)
hole = b.add_loop([b.add_circle((0, 0), 0.5)])
b.add_extrude(b.add_sketch(plane, b.add_profile([hole])), "cut", "symmetric", 10.0)

mesh, trace = build_program(b.build())
m = mesh_metrics(mesh)
analytic = 8 - math.pi * 0.25 * 2
print(f"volume {m.volume:.5f} (analytic {analytic:.5f}, error {100 * abs(m.volume - analytic) / analytic:.2f} %)")
print(f"area {m.surface_area:.4f}, triangles {m.n_triangles}, euler {m.euler_characteristic}, "
      f"manifold {m.is_manifold}")
for step in trace.as_dicts():
    print("step", step)

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
for fmt, name in [("stl_binary", "block.stl"), ("obj", "block.obj")]:
    (out / name).write_bytes(export_mesh(mesh, fmt))
    print("wrote", out / name)
