"""Parse, solve, build, render, convert and score sketch-and-extrude CAD programs."""

from .config import Config, load_config
from .constraints import analyze_dof, solve_constraints, solve_program
from .converter import apply_filter, arc_reparam, convert_record, dataset_stats
from .dsl import DSLParseError, count_tokens, parse_program, serialize_program
from .kernel import SolidMesh, build_program, export_mesh, mesh_metrics
from .model import CADProgram, ProgramBuilder, check_program, validate_program
from .pipeline import dataset_gen
from .render import render_mesh, sample_view_dir
from .scorer import aggregate, score

__version__ = "0.1.0"

__all__ = [
    "CADProgram", "Config", "DSLParseError", "ProgramBuilder", "SolidMesh", "aggregate",
    "analyze_dof", "apply_filter", "arc_reparam", "build_program", "check_program",
    "convert_record", "count_tokens", "dataset_gen", "dataset_stats", "export_mesh",
    "load_config", "mesh_metrics", "parse_program", "render_mesh", "sample_view_dir", "score",
    "serialize_program", "solve_constraints", "solve_program", "validate_program",
]
