"""Solve a sloppy rectangle sketch and count its degrees of freedom."""

from ecadkit.constraints import analyze_dof, solve_constraints
from ecadkit.curves import Line
from ecadkit.model import Coincident, FixSize, Horizontal, PointRef, Vertical

pts = [(0.3, -0.2), (2.1, 0.25), (1.8, 1.1), (0.15, 0.7)]
curves = {i: Line(pts[i], pts[(i + 1) % 4]) for i in range(4)}
joins = [Coincident(PointRef(i, "end"), PointRef((i + 1) % 4, "start")) for i in range(4)]
shape = [Horizontal(0), Horizontal(2), Vertical(1), Vertical(3), FixSize(0, 2.0), FixSize(1, 1.0)]
anchor = [Coincident(PointRef(0, "start"), (0.0, 0.0))]

for label, cons in [("joined only", joins), ("plus shape", joins + shape),
                    ("plus anchor", joins + shape + anchor)]:
    rep = analyze_dof(curves, cons)
    print(f"{label:12s} dof {rep.dof:2d}  {rep.status.value}")

res = solve_constraints(curves, joins + shape + anchor)
print(f"converged in {res.iterations} iterations, residual {res.residual_norm:.1e}")
for i, line in sorted(res.curves.items()):
    print(f"  line {i}: ({line.start[0]:+.6f}, {line.start[1]:+.6f}) -> "
          f"({line.end[0]:+.6f}, {line.end[1]:+.6f})")
