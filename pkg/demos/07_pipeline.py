"""Generate image/code training pairs from the bundled fixtures."""

import json
import sys
import tempfile
from pathlib import Path

from ecadkit.config import Config
from ecadkit.pipeline import dataset_gen

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
manifest = out / "manifest.jsonl"
paths = sorted((FIXTURES / "records").glob("*.json")) + sorted((FIXTURES / "rejects").glob("*.json"))
manifest.write_text("".join(json.dumps({"id": p.stem, "record": str(p)}) + "\n" for p in paths))

summary = dataset_gen(manifest, out / "dataset", Config(workers=2))
print(f"kept {summary['kept']}, dropped {summary['dropped']}")
print((out / "dataset" / "drops.jsonl").read_text())
print("extrusion steps per design:", summary["stats"]["pair_hist"])
print("first index rows:")
for line in (out / "dataset" / "index.jsonl").read_text().splitlines()[:3]:
    print("  ", line)
