"""Command line: ``cadfit reconstruct | eval | gen``; one JSON line on stdout per run."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .assembly import iterative_fit
from .config import ConfigError, FitConfig
from .geometry import (
    MeshError,
    NotWatertightError,
    TriMesh,
    load_mesh,
    normalize_mesh,
    points_in_mesh,
    sample_surface,
    save_stl,
)
from .grid import GridSpec
from .metrics import align_similarity, chamfer_distance, voxelize
from .program import (
    ProgramError,
    deserialize_program,
    emit_script,
    serialize_program,
    tessellate_solid,
    transform_program,
)
from .synth import COMPLEXITY_OPS, generate_programs

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3
CD_SENTINEL = "Infinity"
STL_RESOLUTION = 96

logger = logging.getLogger("cadfit")


class InputError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _emit(obj: dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":"), sort_keys=True) + "\n")
    sys.stdout.flush()


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_config(path: str | None, seed: int | None) -> FitConfig:
    cfg = FitConfig.from_json(path) if path else FitConfig()
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def _read_mesh(path: str) -> TriMesh:
    try:
        return load_mesh(path)
    except MeshError as exc:
        raise InputError(getattr(exc, "kind", "unreadable"), str(exc)) from exc


def _set_threads(threads: int) -> None:
    if threads and threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))


# -------------------------------------------------------------- reconstruct


def cmd_reconstruct(args: argparse.Namespace) -> int:
    _set_threads(args.threads)
    cfg = _load_config(args.config, args.seed)
    mesh = _read_mesh(args.mesh)
    if not mesh.is_watertight:
        raise InputError("not_watertight", f"{args.mesh} is not a closed 2-manifold surface")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    norm, scale, center = normalize_mesh(mesh)
    program, report = iterative_fit(norm, cfg)
    world = transform_program(program, scale, center)
    paths = {
        "program": out / "program.json",
        "script": out / "program.py",
        "mesh": out / "reconstruction.stl",
        "report": out / "report.json",
        "manifest": out / "manifest.json",
    }
    paths["program"].write_text(serialize_program(world) + "\n", encoding="utf-8")
    paths["script"].write_text(emit_script(world), encoding="utf-8")
    invalid = len(program) == 0
    if not invalid:
        save_stl(tessellate_solid(program, STL_RESOLUTION).transformed(1.0 / scale, center), paths["mesh"])
    elif paths["mesh"].exists():
        paths["mesh"].unlink()
    rep = report.to_dict()
    rep.update({"invalid": invalid, "n_ops": len(program), "counts": program.counts(), "monotone": report.monotone()})
    _write_json(paths["report"], rep)
    manifest = {
        "input": str(args.mesh),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "outputs": {k: str(v) for k, v in paths.items()},
        "version": __version__,
        "normalization": {"scale": scale, "center": [float(c) for c in center]},
    }
    _write_json(paths["manifest"], manifest)
    _emit(
        {
            "status": "ok",
            "iou": report.iou,
            "invalid": invalid,
            "n_ops": len(program),
            "out": str(out),
            "wall_time": round(time.perf_counter() - t0, 3),
        }
    )
    return EXIT_OK


# --------------------------------------------------------------------- eval


def _pred_mesh(path: str) -> TriMesh:
    p = Path(path)
    if p.suffix.lower() == ".stl":
        return _read_mesh(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError("unreadable", str(exc)) from exc
    program = deserialize_program(text)
    return tessellate_solid(program, STL_RESOLUTION)


def evaluate_meshes(pred: TriMesh, gt: TriMesh, align: bool = True, resolution: int = 64, n_points: int = 8192, seed: int = 0) -> dict[str, Any]:
    """IoU, CD and residual volumes of ``pred`` against ``gt`` in gt-normalized units."""
    gt_n, scale, center = normalize_mesh(gt)
    pred_n = pred.transformed(scale, -center * scale)
    qg = sample_surface(gt_n, n_points, seed)
    # common random numbers: identical shapes give identical clouds and CD 0
    qp = sample_surface(pred_n, n_points, seed)
    params = {"rotation": [0.0, 0.0, 0.0], "translation": [0.0, 0.0, 0.0], "scale": 1.0}
    if align:
        sim = align_similarity(qp, qg, seed=seed)
        params = sim.to_dict()
        pred_n = TriMesh(sim.apply(pred_n.vertices), pred_n.faces)
        qp = sim.apply(qp)
    cd = chamfer_distance(qp, qg, "symmetric")
    b = np.array([np.minimum(gt_n.bounds[0], pred_n.bounds[0]), np.maximum(gt_n.bounds[1], pred_n.bounds[1])])
    spec = GridSpec.from_bounds(b, resolution)
    g = voxelize(lambda p: points_in_mesh(gt_n, p), spec=spec)
    s = voxelize(lambda p: points_in_mesh(pred_n, p), spec=spec)
    inter = int(np.count_nonzero(g.occ & s.occ))
    union = int(np.count_nonzero(g.occ | s.occ))
    m = g.popcount
    a = (m - inter) / m if m else 1.0
    bb = (s.popcount - inter) / m if m else 0.0
    return {
        "iou": inter / union if union else 1.0,
        "cd": cd,
        "invalid": False,
        "align": params,
        "a": a,
        "b": bb,
        "E": a + bb,
        "cd_points": n_points,
    }


def cmd_eval(args: argparse.Namespace) -> int:
    gt = _read_mesh(args.gt)
    try:
        pred = _pred_mesh(args.pred)
    except (ProgramError, MeshError) as exc:
        _emit({"iou": 0.0, "cd": CD_SENTINEL, "invalid": True, "align": None, "a": 1.0, "b": 0.0, "E": 1.0, "error": str(exc)})
        return EXIT_OK
    _emit(evaluate_meshes(pred, gt, align=not args.no_align, resolution=args.resolution, n_points=args.points, seed=args.seed))
    return EXIT_OK


# ---------------------------------------------------------------------- gen


def cmd_gen(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise InputError("bad_argument", "--n must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, prog in enumerate(generate_programs(args.n, args.complexity, args.seed)):
        stem = f"{args.complexity}_{i:03d}"
        (out / f"{stem}.json").write_text(serialize_program(prog) + "\n", encoding="utf-8")
        save_stl(tessellate_solid(prog, STL_RESOLUTION), out / f"{stem}.stl")
        files.append(stem)
    _emit({"status": "ok", "n": len(files), "complexity": args.complexity, "seed": args.seed, "out": str(out)})
    return EXIT_OK


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cadfit", description="Recover extrude/revolve CAD programs from meshes.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("reconstruct", help="fit a program to a watertight STL")
    r.add_argument("mesh")
    r.add_argument("--config")
    r.add_argument("--out", default="cadfit_out")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int, default=0)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("eval", help="score a predicted program or STL against a ground-truth STL")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--no-align", action="store_true")
    e.add_argument("--resolution", type=int, default=64)
    e.add_argument("--points", type=int, default=8192)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen", help="write random program/STL pairs")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--complexity", choices=sorted(COMPLEXITY_OPS), required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="cadfit_bench")
    g.set_defaults(func=cmd_gen)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit({"status": "error", "error": {"kind": "config", "message": str(exc)}})
        return EXIT_CONFIG
    except NotWatertightError as exc:
        _emit({"status": "error", "error": {"kind": "not_watertight", "message": str(exc)}})
        return EXIT_INPUT
    except InputError as exc:
        _emit({"status": "error", "error": {"kind": exc.kind, "message": str(exc)}})
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers everything else
        logger.debug("internal error", exc_info=True)
        _emit({"status": "error", "error": {"kind": "internal", "message": f"{type(exc).__name__}: {exc}"}})
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
