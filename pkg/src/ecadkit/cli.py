"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (bad program, failed build, ...),
2 usage error (bad flags, missing input file, invalid config).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import Config, ConfigError, load_config
from .constraints import analyze_dof, sketch_systems, solve_program
from .converter import (
    ConversionError,
    DatasetStats,
    FilterPolicy,
    apply_filter,
    convert_record,
    deepcad_to_neutral,
    load_records,
)
from .dsl import DSLParseError, count_tokens, dump, parse_program, serialize_program
from .kernel.build import build_program
from .kernel.io import FORMATS, export_mesh, infer_format, read_stl
from .kernel.mesh import KernelError, mesh_metrics
from .model import ExtrudeDef, InvalidProgram, ModelError, validate_program
from .pipeline import dataset_gen
from .render import export_image, image_format, render_mesh
from .scorer import InvalidReference, Thresholds, aggregate, score

OK, FAIL, USAGE = 0, 1, 2

log = logging.getLogger("ecadkit")


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fail(args, kind: str, detail, extra: dict | None = None) -> int:
    """Report a domain failure: JSON on stdout with --json, text on stderr otherwise."""
    if getattr(args, "json", False):
        _emit({"ok": False, "error": kind, "detail": detail, **(extra or {})})
    else:
        if isinstance(detail, list):
            detail = "\n".join(str(d) for d in detail)
        sys.stderr.write(f"error: {kind}: {detail}\n")
    return FAIL


def _read_text(path: str) -> str:
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write_bytes(path: str, data: bytes) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)


def _parse_errors(exc: DSLParseError) -> list[dict]:
    return [{"kind": e.kind.value, "line": e.span.line, "column": e.span.column,
             "message": e.message} for e in exc.errors]


def _load_program(args, path: str):
    """Parse a file; returns (program, None) or (None, exit code)."""
    try:
        return parse_program(_read_text(path)), None
    except DSLParseError as exc:
        return None, _fail(args, "ParseError", [str(e) for e in exc.errors],
                           {"errors": _parse_errors(exc), "truncated": exc.truncated})


# ---------------------------------------------------------------------------
# sub-commands


def cmd_parse(args, cfg: Config) -> int:
    program, code = _load_program(args, args.file)
    if program is None:
        return code
    text = serialize_program(program)
    if args.json:
        _emit({"ok": True, "statements": len(program.statements), "tokens": count_tokens(text),
               "code": text})
    else:
        sys.stdout.write(text)
    return OK


def cmd_validate(args, cfg: Config) -> int:
    program, code = _load_program(args, args.file)
    if program is None:
        return code
    issues = validate_program(program, cfg.eps_join)
    if issues:
        return _fail(args, "InvalidProgram", [str(i) for i in issues],
                     {"issues": [{"statement": i.statement, "code": i.code,
                                  "message": i.message} for i in issues]})
    if args.json:
        _emit({"ok": True, "issues": []})
    else:
        print("ok")
    return OK


def cmd_solve(args, cfg: Config) -> int:
    program, code = _load_program(args, args.file)
    if program is None:
        return code
    reports = []
    for key, curves, cons in sketch_systems(program):
        if not curves:
            continue
        rep = analyze_dof(curves, cons)
        reports.append({"sketch": key, "curves": len(curves), "constraints": len(cons),
                        "dof": rep.dof, "status": rep.status.value, "rank": rep.jacobian_rank,
                        "residual_norm": rep.residual_norm, "converged": rep.converged})
    try:
        solved, _ = solve_program(program, raise_on_failure=True)
    except Exception as exc:
        return _fail(args, type(exc).__name__, str(exc), {"sketches": reports})
    if args.output:
        dump(solved, args.output)
    if args.json:
        _emit({"ok": True, "sketches": reports})
    else:
        for r in reports:
            print(f"sketch {r['sketch']}: dof {r['dof']} {r['status']} "
                  f"({r['curves']} curves, {r['constraints']} constraints)")
        if not args.output:
            sys.stdout.write(serialize_program(solved))
    return OK


def _build(args, cfg: Config, program):
    kw = {"chord_tol": args.chord_tol} if getattr(args, "chord_tol", None) else \
        {"chord_rel": cfg.chord_tol_rel}
    return build_program(program, **kw)


def cmd_build(args, cfg: Config) -> int:
    program, code = _load_program(args, args.file)
    if program is None:
        return code
    issues = validate_program(program, cfg.eps_join)
    if issues:
        return _fail(args, "InvalidProgram", [str(i) for i in issues])
    try:
        mesh, trace = _build(args, cfg, program)
    except (KernelError, ModelError) as exc:
        return _fail(args, type(exc).__name__, str(exc))
    fmt = args.format or infer_format(args.output)
    _write_bytes(args.output, export_mesh(mesh, fmt))
    info = {"ok": True, "output": args.output, "format": fmt, **mesh_metrics(mesh).as_dict()}
    if args.trace:
        info["trace"] = trace.as_dicts()
    if args.json:
        _emit(info)
    else:
        print(f"wrote {args.output}: {len(mesh.triangles)} triangles, "
              f"volume {info['volume']:.6g}, manifold {info['is_manifold']}")
    return OK


def cmd_render(args, cfg: Config) -> int:
    if args.file.lower().endswith(".stl"):
        if not os.path.isfile(args.file):
            raise UsageError(f"no such file: {args.file}")
        mesh = read_stl(Path(args.file).read_bytes())
    else:
        program, code = _load_program(args, args.file)
        if program is None:
            return code
        try:
            check_issues = validate_program(program, cfg.eps_join)
            if check_issues:
                return _fail(args, "InvalidProgram", [str(i) for i in check_issues])
            mesh, _ = _build(args, cfg, program)
        except (KernelError, ModelError) as exc:
            return _fail(args, type(exc).__name__, str(exc))
    if mesh.is_empty:
        return _fail(args, "EmptyMesh", "nothing to render")
    img = render_mesh(mesh, cfg.seed, cfg.max_angle_deg, cfg.width, cfg.height, cfg.margin)
    _write_bytes(args.output, export_image(img, image_format(args.output)))
    if args.json:
        _emit({"ok": True, "output": args.output, "width": img.width, "height": img.height})
    return OK


def cmd_convert(args, cfg: Config) -> int:
    if not os.path.isfile(args.input):
        raise UsageError(f"no such file: {args.input}")
    try:
        records = load_records(args.input)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        return _fail(args, "MalformedInput", str(exc))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = FilterPolicy(cfg.max_tokens, eps_join=cfg.eps_join)
    lines = []
    for k, rec in enumerate(records):
        rid = str(rec.get("id") or f"{Path(args.input).stem}_{k}")
        line = {"id": rid, "code_path": None, "kept": False, "reason": None, "pair_count": 0}
        try:
            program = convert_record(deepcad_to_neutral(rec, rid) if args.deepcad else rec)
        except (ConversionError, KeyError, TypeError, ValueError) as exc:
            line["reason"] = getattr(exc, "reason", "ConversionError")
            line["detail"] = str(exc)
            lines.append(line)
            continue
        line["pair_count"] = sum(1 for s in program.statements if isinstance(s, ExtrudeDef))
        verdict = apply_filter(program, policy, cfg.chord_tol_rel) if not args.no_filter else None
        if verdict is not None and not verdict.keep:
            line["reason"], line["detail"] = verdict.reason, verdict.detail
        else:
            path = out / f"{rid}.ecad"
            dump(program, path)
            line["code_path"] = str(path)
            line["kept"] = True
        lines.append(line)
    lines.sort(key=lambda r: r["id"])
    with open(out / "manifest.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    kept = sum(r["kept"] for r in lines)
    if args.json:
        _emit({"ok": True, "kept": kept, "dropped": len(lines) - kept})
    else:
        print(f"converted {kept} of {len(lines)} records into {out}")
    return OK


def _score_one(gen_path: str, ref_path: str, cfg: Config, th: Thresholds):
    gen_text = Path(gen_path).read_text(encoding="utf-8") if os.path.isfile(gen_path) else ""
    ref_text = _read_text(ref_path)
    return score(gen_text, ref_text, th, cfg.time_budget_s, cfg.max_steps, cfg.loop_points)


def cmd_score(args, cfg: Config) -> int:
    th = Thresholds(cfg.normal_threshold_deg, cfg.distance_threshold)
    if args.batch:
        return _score_batch(args, cfg, th)
    if not (args.gen and args.ref):
        raise UsageError("score needs --gen and --ref, or --batch")
    if not os.path.isfile(args.gen):
        raise UsageError(f"no such file: {args.gen}")
    try:
        report = _score_one(args.gen, args.ref, cfg, th)
    except InvalidReference as exc:
        return _fail(args, "InvalidReference", str(exc))
    if args.json:
        _emit(report.as_dict())
    else:
        line = f"total {report.total:.4f} (R={report.R}, {len(report.pairs)}/{report.n_ref} pairs)"
        if report.failure is not None:
            line += f" failed at {report.failure.stage.value}: {report.failure.detail}"
        print(line)
    return OK


def _score_batch(args, cfg: Config, th: Thresholds) -> int:
    """Manifest lines are {"id", "gen", "ref"} with paths relative to the manifest."""
    if not os.path.isfile(args.batch):
        raise UsageError(f"no such file: {args.batch}")
    base = Path(args.batch).parent
    cases = []
    with open(args.batch, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            if raw.strip():
                item = json.loads(raw)
                if "gen" not in item or "ref" not in item:
                    raise UsageError(f"{args.batch}:{n}: need 'gen' and 'ref'")
                cases.append((str(item.get("id", n)), str(base / item["gen"]),
                              str(base / item["ref"])))
    reports, lines = [], []
    for cid, gen, ref in sorted(cases):
        try:
            rep = _score_one(gen, ref, cfg, th)
        except InvalidReference as exc:
            lines.append({"id": cid, "error": "InvalidReference", "detail": str(exc)})
            continue
        reports.append(rep)
        lines.append({"id": cid, **rep.as_dict()})
    agg = aggregate(reports).as_dict()
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(json.dumps(line, sort_keys=True) + "\n")
    if args.json:
        _emit({"cases": lines if not args.output else len(lines), "aggregate": agg})
    else:
        print(f"cases {agg['n']}  mean {agg['mean_total']:.4f}  executable {agg['executable']}  "
              f"unfinished {agg['unfinished']}  run-with-errors {agg['run_with_errors']}  "
              f"completely-correct {agg['completely_correct']}")
    return OK


def cmd_stats(args, cfg: Config) -> int:
    paths = []
    for p in args.paths:
        if os.path.isdir(p):
            paths += sorted(str(q) for q in Path(p).rglob("*.ecad"))
        elif os.path.isfile(p):
            paths.append(p)
        else:
            raise UsageError(f"no such file: {p}")
    stats = DatasetStats()
    bad = []
    for p in paths:
        try:
            stats.add(parse_program(_read_text(p)))
        except DSLParseError as exc:
            bad.append({"path": p, "errors": len(exc.errors)})
    out = {**stats.as_dict(), "unparsable": bad}
    if args.json:
        _emit(out)
    else:
        print(f"programs {stats.n_programs}  pairs {stats.total_pairs}  curves "
              f"{stats.total_curves}  constraints {stats.total_constraints}")
        for name in ("pair_hist", "curve_hist", "constraint_hist"):
            print(f"{name}: " + ", ".join(f"{k}:{v}" for k, v in out[name].items()))
        for b in bad:
            print(f"unparsable: {b['path']}")
    return OK


def cmd_dataset_gen(args, cfg: Config) -> int:
    if not os.path.isfile(args.manifest):
        raise UsageError(f"no such file: {args.manifest}")
    try:
        summary = dataset_gen(args.manifest, args.out_dir, cfg)
    except (ValueError, json.JSONDecodeError) as exc:
        return _fail(args, "BadManifest", str(exc))
    if args.json:
        _emit(summary)
    else:
        print(f"kept {summary['kept']}, dropped {summary['dropped']} -> {args.out_dir}")
    return OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--max-angle-deg", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--margin", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (falls back to $ECAD_CONFIG)")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ecadkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", parents=[common], help="parse and print canonical code")
    p.add_argument("file")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("validate", parents=[common], help="check program structure and loops")
    p.add_argument("file")
    p.add_argument("--eps-join", type=float)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", parents=[common], help="solve sketch constraints, report DOF")
    p.add_argument("file")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("build", parents=[common], help="build a program into a mesh file")
    p.add_argument("file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--chord-tol", type=float, help="absolute chord tolerance")
    p.add_argument("--chord-tol-rel", type=float)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("render", parents=[common], help="render a program or STL to PNG/PPM")
    p.add_argument("file")
    p.add_argument("-o", "--output", required=True)
    _add_render_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("convert", parents=[common], help="convert JSON records to .ecad files")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--deepcad", action="store_true", help="input uses DeepCAD field names")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--max-tokens", type=int)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("score", parents=[common], help="score generated code against a reference")
    p.add_argument("--gen")
    p.add_argument("--ref")
    p.add_argument("--batch", help="JSON-lines manifest of {id, gen, ref}")
    p.add_argument("-o", "--output", help="per-case reports (batch mode)")
    p.add_argument("--normal-threshold-deg", type=float)
    p.add_argument("--distance-threshold", type=float)
    p.add_argument("--time-budget-s", type=float)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stats", parents=[common], help="pair/curve/constraint histograms")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("dataset-gen", parents=[common], help="emit image/code pairs")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--annotate-cmd")
    _add_render_flags(p)
    p.set_defaults(func=cmd_dataset_gen)
    return parser


_OVERRIDES = ("seed", "max_angle_deg", "width", "height", "margin", "eps_join", "chord_tol_rel",
              "max_tokens", "normal_threshold_deg", "distance_threshold", "time_budget_s",
              "workers", "annotate_cmd")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = cfg.updated(**{k: getattr(args, k, None) for k in _OVERRIDES})
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return USAGE
    except InvalidProgram as exc:
        return _fail(args, "InvalidProgram", str(exc))


if __name__ == "__main__":
    sys.exit(main())
