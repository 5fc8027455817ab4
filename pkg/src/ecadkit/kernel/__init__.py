"""Geometry kernel: tessellation, triangulation, extrusion, booleans, export."""

from .build import BuildError, BuildTrace, StepRecord, build_program
from .csg import BooleanFailure, BooleanOp, BuildTimeout, EmptyResult, csg
from .extrude import DegenerateExtent, default_chord_tol, extrude
from .io import export_mesh, read_stl
from .mesh import (
    KernelError,
    MeshMetrics,
    SolidMesh,
    contains,
    is_watertight,
    mesh_metrics,
    occupancy_grid,
)
from .triangulate import ProfileMesh, TriangulationFailure, triangulate_profile

__all__ = [
    "BooleanFailure", "BooleanOp", "BuildError", "BuildTimeout", "BuildTrace", "DegenerateExtent",
    "EmptyResult", "KernelError", "MeshMetrics", "ProfileMesh", "SolidMesh", "StepRecord",
    "TriangulationFailure", "build_program", "contains", "csg", "default_chord_tol", "export_mesh",
    "extrude", "is_watertight", "mesh_metrics", "occupancy_grid", "read_stl",
    "triangulate_profile",
]
