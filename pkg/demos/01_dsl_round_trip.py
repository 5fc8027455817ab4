"""Write a program in the command language, parse it, and print canonical code.

A malformed copy shows how parse errors are reported with positions.
"""

from ecadkit.dsl import DSLParseError, count_tokens, parse_program, serialize_program
from ecadkit.model import extract_pairs

SOURCE = """\
# a flat plate with a round boss on top
Plane0 = add_sketchplane((0, 0, 0), (1, 0, 0), (0, 1, 0))
Line0 = add_line((0, 0), (4, 0))
Line1 = add_line((4, 0), (4, 3))
Line2 = add_line((4, 3), (0, 3))
Line3 = add_line((0, 3), (0, 0))
Loop0 = add_loop([Line0, Line1, Line2, Line3])
Profile0 = add_profile([Loop0])
Sketch0 = add_sketch(Plane0, Profile0)
Extrude0 = add_extrude(Sketch0, new_body, one_sided, 0.5)
Plane1 = add_sketchplane((0, 0, 0.5), (1, 0, 0), (0, 1, 0))
Circle0 = add_circle((2, 1.5), 0.8)
Loop1 = add_loop([Circle0])
Profile1 = add_profile([Loop1])
Sketch1 = add_sketch(Plane1, Profile1)
Extrude1 = add_extrude(Sketch1, join, one_sided, 1.0)
"""

program = parse_program(SOURCE)
canonical = serialize_program(program)
print(canonical)
print(f"{len(program.statements)} statements, {len(extract_pairs(program))} loop/extrusion pairs, "
      f"{count_tokens(canonical)} tokens")
assert parse_program(canonical) == program

try:
    parse_program(SOURCE.replace("add_circle((2, 1.5), 0.8)", "add_circle((2, 1.5)"))
except DSLParseError as exc:
    for err in exc.errors:
        print(f"error at {err.span.line}:{err.span.column} [{err.kind.value}] {err.message}")
