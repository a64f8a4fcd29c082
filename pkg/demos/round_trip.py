"""Generate synthetic programs, reconstruct them through the CLI, then score.

Mirrors the command line workflow:

    cadfit gen --n 3 --complexity easy --out shapes/
    cadfit reconstruct shapes/easy_000.stl --out runs/easy_000
    cadfit eval --pred runs/easy_000/program.json --gt shapes/easy_000.stl

    python3 demos/round_trip.py [easy|medium|hard]
"""

import contextlib
import io
import json
import sys
import tempfile
from pathlib import Path

from cadfit.cli import main


def run(*argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main([str(a) for a in argv])
    return code, json.loads(buf.getvalue().strip().splitlines()[-1])


complexity = sys.argv[1] if len(sys.argv) > 1 else "easy"
with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    run("gen", "--n", 3, "--complexity", complexity, "--seed", 0, "--out", root / "shapes")
    for stl in sorted((root / "shapes").glob("*.stl")):
        out = root / "runs" / stl.stem
        code, _ = run("reconstruct", stl, "--out", out, "--seed", 0)
        _, ev = run("eval", "--pred", out / "program.json", "--gt", stl)
        n_true = len(json.loads(stl.with_suffix(".json").read_text())["ops"])
        n_fit = len(json.loads((out / "program.json").read_text())["ops"])
        print(f"{stl.stem}: exit {code}, ops {n_true} -> {n_fit}, IoU {ev['iou']:.4f}, CD {ev['cd']:.5f}")
