import json
from pathlib import Path

import pytest

from ecadkit.dsl import load

HERE = Path(__file__).parent
RECORDS = sorted((HERE / "fixtures" / "records").glob("*.json"))
REJECTS = sorted((HERE / "fixtures" / "rejects").glob("*.json"))
GOLDEN = HERE / "golden"


def read_record(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


@pytest.fixture
def table_program():
    return load(GOLDEN / "table.ecad")


@pytest.fixture
def alg1_text():
    return (GOLDEN / "alg1.ecad").read_text(encoding="utf-8")


CUBE_CODE = """\
SketchPlane0 = add_sketchplane((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
Line0 = add_line((0.0, 0.0), (1.0, 0.0))
Line1 = add_line((1.0, 0.0), (1.0, 1.0))
Line2 = add_line((1.0, 1.0), (0.0, 1.0))
Line3 = add_line((0.0, 1.0), (0.0, 0.0))
Loop0 = add_loop([Line0, Line1, Line2, Line3])
Profile0 = add_profile([Loop0])
Sketch0 = add_sketch(SketchPlane0, Profile0)
Extrude0 = add_extrude(Sketch0, new_body, one_sided, 1.0)
"""


@pytest.fixture
def cube_code():
    return CUBE_CODE


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
