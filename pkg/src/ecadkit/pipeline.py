"""Image/code pair generation over a manifest of records or .ecad files."""

from __future__ import annotations

import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import Config
from .converter import (
    ConversionError,
    DatasetStats,
    FilterPolicy,
    apply_filter,
    convert_record,
    deepcad_to_neutral,
    load_records,
    run_annotation_hook,
)
from .dsl import DSLParseError, count_tokens, load, serialize_program
from .kernel.build import build_program
from .model import CADProgram, extract_pairs
from .render import encode_png, render_mesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    kind: str  # record | deepcad | ecad
    path: str
    index: int = 0  # record position inside a multi-record file


def read_manifest(path) -> list[ManifestEntry]:
    """JSON-lines; each line {"id", and one of "record"/"deepcad"/"ecad": path}.

    Relative paths resolve against the manifest's directory.  A record file
    holding several records expands to one entry per record.
    """
    base = Path(path).parent
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            item = json.loads(line)
            kinds = [k for k in ("record", "deepcad", "ecad") if k in item]
            if len(kinds) != 1:
                raise ValueError(f"manifest line {n}: need exactly one of record/deepcad/ecad")
            kind = kinds[0]
            p = str((base / item[kind]).resolve()) if not os.path.isabs(item[kind]) \
                else item[kind]
            if kind == "record" and "id" not in item:
                for k, rec in enumerate(load_records(p)):
                    out.append(ManifestEntry(str(rec.get("id", f"{Path(p).stem}_{k}")),
                                             kind, p, k))
                continue
            out.append(ManifestEntry(str(item.get("id", Path(p).stem)), kind, p,
                                     int(item.get("index", 0))))
    return out


def design_seed(design_id: str, seed: int) -> int:
    """Per-design render seed, independent of worker scheduling."""
    return (zlib.crc32(design_id.encode("utf-8")) ^ (seed * 0x9E3779B1)) & 0xFFFFFFFF


def load_entry(entry: ManifestEntry) -> CADProgram:
    if entry.kind == "ecad":
        return load(entry.path)
    rec = load_records(entry.path)[entry.index]
    if entry.kind == "deepcad":
        rec = deepcad_to_neutral(rec, entry.id)
    return convert_record(rec)


def process_entry(entry: ManifestEntry, out_dir: str, cfg: Config) -> dict:
    """Convert, filter, render and write one design.  Returns its index or drop line."""
    try:
        program = load_entry(entry)
    except (ConversionError, DSLParseError, KeyError, ValueError, OSError) as exc:
        return {"id": entry.id, "kept": False, "reason": getattr(exc, "reason", "ConversionError"),
                "detail": f"{type(exc).__name__}: {exc}"}
    verdict = apply_filter(program, FilterPolicy(cfg.max_tokens, eps_join=cfg.eps_join),
                           cfg.chord_tol_rel)
    if not verdict.keep:
        return {"id": entry.id, "kept": False, "reason": verdict.reason, "detail": verdict.detail}
    if cfg.annotate_cmd:
        program = run_annotation_hook(cfg.annotate_cmd, program)
    mesh, _ = build_program(program, chord_rel=cfg.chord_tol_rel)
    text = serialize_program(program)
    code_rel = f"code/{entry.id}.ecad"
    image_rel = f"images/{entry.id}.png"
    out = Path(out_dir)
    with open(out / code_rel, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    pairs = len(extract_pairs(program))  # loop/extrusion pairs, the scorer's unit
    if not mesh.is_empty:
        img = render_mesh(mesh, design_seed(entry.id, cfg.seed), cfg.max_angle_deg,
                          cfg.width, cfg.height, cfg.margin)
        (out / image_rel).write_bytes(encode_png(img))
    else:
        image_rel = None
    return {"id": entry.id, "kept": True, "image": image_rel, "code": code_rel,
            "pairs": pairs, "tokens": count_tokens(text)}


def _work(args):
    entry, out_dir, cfg = args
    try:
        return process_entry(entry, out_dir, cfg), None
    except Exception as exc:  # keep the pipeline going; the design is dropped
        return {"id": entry.id, "kept": False, "reason": "BuildFailure",
                "detail": f"{type(exc).__name__}: {exc}"}, None


def dataset_gen(manifest, out_dir, cfg: Config = Config()) -> dict:
    """Write code/, images/, index.jsonl, drops.jsonl and stats.json under out_dir."""
    entries = read_manifest(manifest)
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("manifest ids must be unique")
    out = Path(out_dir)
    (out / "code").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)
    jobs = [(e, str(out), cfg) for e in entries]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = [r for r, _ in pool.map(_work, jobs)]
    else:
        results = [_work(j)[0] for j in jobs]
    results.sort(key=lambda r: r["id"])
    kept = [r for r in results if r["kept"]]
    drops = [r for r in results if not r["kept"]]
    for r in drops:
        log.warning("dropped %s: %s (%s)", r["id"], r["reason"], r["detail"])
    stats = DatasetStats()
    for r in kept:
        stats.add(load(out / r["code"]))
    with open(out / "index.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in kept:
            fh.write(json.dumps({k: r[k] for k in ("id", "image", "code", "pairs", "tokens")},
                                sort_keys=True) + "\n")
    with open(out / "drops.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in drops:
            fh.write(json.dumps({k: r[k] for k in ("id", "reason", "detail")},
                                sort_keys=True) + "\n")
    with open(out / "stats.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(stats.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"kept": len(kept), "dropped": len(drops), "stats": stats.as_dict()}
