"""Convert bundled neutral JSON records into programs and filter them."""

from pathlib import Path

from ecadkit.converter import (
    ConversionError,
    FilterPolicy,
    apply_filter,
    arc_reparam,
    convert_record,
    dataset_stats,
    load_records,
)
from ecadkit.dsl import serialize_program

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

arc = arc_reparam((0.0, 0.0), 1.0, 0.0, 3.14159265, ccw=False)
print("clockwise half arc from angle 0 to pi passes through", tuple(round(v, 6) for v in arc.mid))

programs = []
for path in sorted((FIXTURES / "records").glob("*.json")) + sorted((FIXTURES / "rejects").glob("*.json")):
    (record,) = load_records(path)
    try:
        program = convert_record(record)
    except ConversionError as exc:
        print(f"{path.stem:28s} rejected: {exc.reason}")
        continue
    verdict = apply_filter(program, FilterPolicy())
    print(f"{path.stem:28s} {'kept' if verdict.keep else 'dropped: ' + verdict.reason}")
    if verdict.keep:
        programs.append(program)

print()
print(serialize_program(programs[6]))
stats = dataset_stats(programs).as_dict()
print("extrusion steps per program:", stats["pair_hist"])
