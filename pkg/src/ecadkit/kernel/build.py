"""Execute a CAD program into a single scene mesh."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..model import DEFAULT_CHORD_REL, CADProgram, ModelError, Operation
from .csg import BooleanOp, BuildTimeout, EmptyResult, csg
from .extrude import default_chord_tol, extrude
from .mesh import KernelError, MeshMetrics, SolidMesh, mesh_metrics


class BuildError(KernelError):
    """A step failed; carries the step number and statement index."""

    def __init__(self, step: int, statement: int, cause: Exception):
        super().__init__(f"step {step} (statement {statement}): {type(cause).__name__}: {cause}")
        self.step = step
        self.statement = statement
        self.cause = cause


@dataclass(frozen=True)
class StepRecord:
    step: int
    statement: int
    operation: Operation
    body: int  # index of the NewBody step that started this body
    tool: MeshMetrics
    scene: MeshMetrics


@dataclass
class BuildTrace:
    steps: list[StepRecord] = field(default_factory=list)
    bodies: list[int] = field(default_factory=list)

    def as_dicts(self) -> list[dict]:
        return [{"step": s.step, "statement": s.statement, "operation": s.operation.value,
                 "body": s.body, "tool": s.tool.as_dict(), "scene": s.scene.as_dict()}
                for s in self.steps]


_OPS = {Operation.JOIN: BooleanOp.JOIN, Operation.CUT: BooleanOp.CUT,
        Operation.INTERSECT: BooleanOp.INTERSECT, Operation.NEW_BODY: BooleanOp.JOIN}


def build_program(program: CADProgram, chord_tol: float | None = None,
                  chord_rel: float = DEFAULT_CHORD_REL, deadline: float | None = None,
                  max_steps: int | None = None) -> tuple[SolidMesh, BuildTrace]:
    """Run every extrusion in order and combine the results.

    chord_tol is absolute (world units); when None each extrusion uses
    chord_rel times its placed profile diagonal.  A NewBody after the first
    is unioned into the scene but keeps its own body tag in the trace.
    Programs without extrusions build to an empty mesh.
    """
    scene = SolidMesh.empty()
    trace = BuildTrace()
    body = -1
    for step, (si, ex) in enumerate(program.extrudes()):
        if max_steps is not None and step >= max_steps:
            raise BuildError(step, si, BuildTimeout(f"step budget of {max_steps} exhausted"))
        if deadline is not None and time.monotonic() > deadline:
            raise BuildError(step, si, BuildTimeout("time budget exhausted"))
        try:
            sketch = program.sketch(ex.sketch)
            tol = chord_tol if chord_tol is not None else default_chord_tol(sketch, chord_rel)
            tool = extrude(sketch, ex.extrusion, tol)
            op = ex.operation
            if step == 0 and op is not Operation.NEW_BODY:
                raise ModelError("first extrusion must create a new body")
            if op is Operation.NEW_BODY:
                body = step
                trace.bodies.append(step)
            scene = tool if scene.is_empty and step == 0 else \
                csg(_OPS[op], scene, tool, deadline=deadline)
        except (KernelError, ModelError, ValueError) as exc:
            raise BuildError(step, si, exc) from exc
        trace.steps.append(StepRecord(step, si, ex.operation, body, mesh_metrics(tool),
                                      mesh_metrics(scene)))
    return scene, trace


__all__ = ["BuildError", "BuildTrace", "EmptyResult", "StepRecord", "build_program"]
