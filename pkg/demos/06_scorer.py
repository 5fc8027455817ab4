"""Score a few generated answers against one reference design."""

from ecadkit.dsl import serialize_program
from ecadkit.model import ProgramBuilder
from ecadkit.scorer import aggregate, score


def plate(with_hole=True, hole_r=0.3, op="cut", thickness=1.0):
    b = ProgramBuilder()
    pl = b.add_sketchplane((0, 0, 0), (1, 0, 0), (0, 1, 0))
    p = [(0, 0), (2, 0), (2, 2), (0, 2)]
    b.add_extrude(b.add_sketch(pl, b.add_profile([b.add_loop(
        [b.add_line(p[i], p[(i + 1) % 4]) for i in range(4)])])), "new_body", "one_sided", thickness)
    if with_hole:
        b.add_extrude(b.add_sketch(pl, b.add_profile([b.add_loop([b.add_circle((1, 1), hole_r)])])),
                      op, "symmetric", 4.0)
    return b.build()


reference = plate()
candidates = {
    "exact copy": serialize_program(plate()),
    "missing the hole": serialize_program(plate(False)),
    "hole too large": serialize_program(plate(hole_r=0.6)),
    "join instead of cut": serialize_program(plate(op="join")),
    "cut off mid-line": serialize_program(plate())[:-25],
}
reports = []
for name, text in candidates.items():
    rep = score(text, reference)
    reports.append(rep)
    extra = f" ({rep.failure.stage.value} failure)" if rep.failure else ""
    print(f"{name:22s} total {rep.total:6.2f}{extra}")
    for p in rep.pairs:
        print(f"    pair gen {p.gen_index} -> ref {p.ref_index}: P {p.P:.2f} O {p.O:.2f} L {p.L:.2f}")

print(aggregate(reports).as_dict())
