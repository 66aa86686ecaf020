"""
The staged pipeline and its artifacts
=====================================

Each stage reads only its declared inputs from the output directory. The
student stage sees the noisy labels and nothing else.
"""

import json
import sys
import tempfile
from pathlib import Path

from pate_forge import cli
from pate_forge.pipeline import STAGES

for stage in STAGES.values():
    print(f"{stage.name:15s} reads {list(stage.inputs)} writes {list(stage.outputs)}")

quick = {
    "teachers": {"train": {"epochs": 10}},
    "student": {"train": {"epochs": 10}},
    "aae": {"epochs": 5},
    "privacy": {"epsilon_targets": [0.1, 100]},
    "trials": 1,
}

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
config = out / "quick.json"
out.mkdir(parents=True, exist_ok=True)
config.write_text(json.dumps(quick))

for name in STAGES:
    code = cli.main([name, "--config", str(config), "--out", str(out / "run")])
    print(f"pate-forge {name}: exit {code}")

print((out / "run" / "results.csv").read_text())
print((out / "run" / "MANIFEST").read_text())

# a missing checkpoint stops a later stage with exit code 3
(out / "run" / "teachers.json").unlink()
print("label without teachers:", cli.main(["label", "--config", str(config), "--out", str(out / "run")]))
