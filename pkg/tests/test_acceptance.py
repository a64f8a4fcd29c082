"""Acceptance criteria, one PASS/FAIL line each.

The round trips drive the command-line entry points end to end and take
roughly half an hour on one core.
"""

from __future__ import annotations

import contextlib
import io
import itertools
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from cadfit.assembly import backward_prune, greedy_select, recover_finishing, working_grid
from cadfit.candidates import Candidate, SweepConfig, sweep_extrude_heights
from cadfit.cli import main
from cadfit.config import FitConfig
from cadfit.geometry import Plane, TriMesh, box_mesh, points_in_mesh, sample_surface, slice_with_plane
from cadfit.grid import GridSpec
from cadfit.metrics import VoxelGrid, align_similarity, chamfer_distance, compute_residuals, mesh_target, volumetric_iou
from cadfit.polygon import resample_closed
from cadfit.program import Program, apply_corner_feature, extrude, points_in_solid, program_mask
from cadfit.sketch import Circle, Loop2D, Profile, fit_primitives

from conftest import box_op, profile, rect, xy_plane
from oracles import fold_membership, iou_sets, point_triangle_distance, ray_parity
from test_geometry import sphere_mesh, through_hole_mesh
from test_program import random_program

pytestmark = pytest.mark.slow

N_SHAPES = 25
LIMITS = {"easy": (0.95, 10 * 60), "medium": (0.85, 25 * 60)}


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    print("\n" + line, flush=True)
    assert ok, line


@pytest.fixture
def show(capsys):
    def _show(*args):
        with capsys.disabled():
            verdict(*args)

    return _show


def cli(*argv) -> tuple[int, dict]:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main([str(a) for a in argv])
    lines = buf.getvalue().strip().splitlines()
    return code, json.loads(lines[-1]) if lines else {}


def round_trip(root: Path, complexity: str) -> dict:
    gen = root / "gt"
    code, _ = cli("gen", "--n", N_SHAPES, "--complexity", complexity, "--seed", 0, "--out", gen)
    assert code == 0
    rows = []
    total = 0.0
    for stl in sorted(gen.glob("*.stl")):
        out = root / "fit" / stl.stem
        t0 = time.perf_counter()
        code, _ = cli("reconstruct", stl, "--out", out, "--seed", 0)
        total += time.perf_counter() - t0
        report = json.loads((out / "report.json").read_text()) if code == 0 else {"invalid": True}
        if code == 0 and not report["invalid"]:
            _, ev = cli("eval", "--pred", out / "program.json", "--gt", stl)
        else:
            ev = {"iou": 0.0, "invalid": True}
        rows.append({"name": stl.stem, "code": code, "report": report, "eval": ev, "out": out, "stl": stl})
    return {"rows": rows, "total": total}


@pytest.fixture(scope="module")
def easy(tmp_path_factory):
    return round_trip(tmp_path_factory.mktemp("easy"), "easy")


@pytest.fixture(scope="module")
def medium(tmp_path_factory):
    return round_trip(tmp_path_factory.mktemp("medium"), "medium")


def _round_trip_verdict(show, number, complexity, res):
    floor, budget = LIMITS[complexity]
    ious = [r["eval"]["iou"] for r in res["rows"]]
    invalid = sum(bool(r["eval"].get("invalid")) or r["code"] != 0 for r in res["rows"])
    med = float(np.median(ious))
    ok = med >= floor and invalid == 0 and res["total"] <= budget and len(ious) == N_SHAPES
    detail = f"median IoU {med:.4f} (>= {floor}), min {min(ious):.4f}, IR {invalid}/{len(ious)}, runtime {res['total'] / 60:.1f} min (<= {budget // 60})"
    show(number, f"round trip, {complexity}", ok, detail)


# ------------------------------------------------------------ 1, 2: round trip


def test_c01_round_trip_easy(easy, show):
    _round_trip_verdict(show, 1, "easy", easy)


def test_c02_round_trip_medium(medium, show):
    _round_trip_verdict(show, 2, "medium", medium)


# ------------------------------------------------------------ 3: identities


def test_c03_error_identity(show):
    rng = np.random.default_rng(2024)
    bad = 0
    for k in range(200):
        dims = tuple(int(d) for d in rng.integers(2, 12, 3))
        spec = GridSpec((0.0, 0.0, 0.0), 0.1, dims)
        m = rng.random(dims) < rng.uniform(0.05, 0.95)
        m.flat[rng.integers(m.size)] = True
        s = rng.random(dims) < rng.uniform(0.0, 0.95)
        res = compute_residuals(VoxelGrid(spec, m), VoxelGrid(spec, s))
        nm, p, q = int(m.sum()), res.plus.popcount, res.minus.popcount
        inter, union = iou_sets(m, s)
        identity = Fraction(nm - p, nm + q) == Fraction(inter, union)
        bound = 1 - Fraction(inter, union) <= Fraction(p + q, nm)
        exact_float = volumetric_iou(res.target, res.solid) == inter / union
        bad += not (identity and bound and exact_float)
    show(3, "IoU = (1-a)/(1+b) and 1-IoU <= a+b", bad == 0, f"{200 - bad}/200 random grid pairs exact")


# ------------------------------------------------- 4: irredundant and minimal


def test_c04_irredundancy_minimality(show):
    spec = GridSpec.from_bounds(((-1, -1, -1), (1, 1, 1)), 32)
    rng = np.random.default_rng(11)

    def rand_box(role="union"):
        lo = rng.integers(-4, 4, 3) * 0.2
        hi = lo + rng.integers(1, 5, 3) * 0.2
        return box_op(lo, hi, role)

    def iou(prog, t_occ):
        i, u = iou_sets(program_mask(prog, spec), t_occ)
        return Fraction(1) if u == 0 else Fraction(i, u)

    checked = violations = 0
    sizes = []
    while checked < 20:
        target = Program(tuple(rand_box() for _ in range(rng.integers(1, 4))) + tuple(rand_box("cut") for _ in range(rng.integers(0, 3))))
        t_occ = program_mask(target, spec)
        if not t_occ.any():
            continue
        pool = [op for op in target.ops if op.role == "union"] + [rand_box() for _ in range(rng.integers(2, 6))]
        cands = [Candidate(op, 0.0, (i,)) for i, op in enumerate(pool)]
        prog = backward_prune(greedy_select(cands, t_occ, spec), t_occ, spec)
        if not 1 <= len(prog) <= 6:
            continue
        full = iou(prog, t_occ)
        ok = all(iou(prog.without(i), t_occ) < full for i in range(len(prog)))
        for size in range(len(prog)):
            for idx in itertools.combinations(range(len(prog)), size):
                ok &= iou(Program(tuple(prog.ops[i] for i in idx)), t_occ) < full
        violations += not ok
        checked += 1
        sizes.append(len(prog))
    show(4, "irredundancy and subset minimality", violations == 0, f"{checked - violations}/{checked} pruned programs, sizes {min(sizes)}-{max(sizes)} ops")


# -------------------------------------------------------------- 5: monotone


def test_c05_monotone_traces(easy, medium, show):
    rows = easy["rows"] + medium["rows"]
    bad = [r["name"] for r in rows if r["code"] != 0 or any(b < a for a, b in zip(r["report"]["iou_trace"], r["report"]["iou_trace"][1:]))]
    show(5, "IoU trace non-decreasing", not bad, f"{len(rows) - len(bad)}/{len(rows)} reports monotone{' ; violations: ' + ', '.join(bad) if bad else ''}")


# ------------------------------------------------------------ 6: sweep, radius


def prism_mesh(loop: np.ndarray, z0: float, z1: float) -> TriMesh:
    """Closed prism over a convex CCW polygon."""
    n = len(loop)
    v = np.concatenate([np.column_stack([loop, np.full(n, z0)]), np.column_stack([loop, np.full(n, z1)]), [[0, 0, z0], [0, 0, z1]]])
    faces = []
    for i in range(n):
        j = (i + 1) % n
        faces += [[i, j, n + j], [i, n + j, n + i], [2 * n, j, i], [2 * n + 1, n + i, n + j]]
    return TriMesh(v, np.array(faces))


def test_c06_sweep_and_radius(show):
    t = mesh_target(box_mesh())
    prof = Profile(Plane.make([0, 0, -0.5], [0, 0, 1], [1, 0, 0], kind="planar"), Loop2D(resample_closed(rect(-0.5, -0.5, 0.5, 0.5), 128)), (), "planar")
    cands = sweep_extrude_heights(prof, t, SweepConfig(n_samples=64, h_bounds=(-0.01, 2.0)))
    depth_err = min(abs(c.op.height - 1.0) for c in cands) if cands else math.inf
    cyl = prism_mesh(Circle(np.zeros(2), 0.5).polygonize(512), -0.5, 0.5)
    (loop,) = slice_with_plane(cyl, Plane.make([0, 0, 0.1], [0, 0, 1], [1, 0, 0]))
    chain = fit_primitives(Loop2D(resample_closed(loop.points[:, :2], 128)), 0.01)
    circ = [e for e in chain.elements if isinstance(e, Circle)]
    r_err = abs(circ[0].radius - 0.5) if len(chain.elements) == 1 and circ else math.inf
    ok = depth_err <= 2 / 64 and r_err <= 1e-3
    show(6, "sweep depth and circle radius", ok, f"cube depth error {depth_err:.4f} (<= {2 / 64:.4f}), cylinder radius error {r_err:.2e} (<= 1e-3)")


# ------------------------------------------------------------ 7: membership


def test_c07_membership_oracles(show):
    prog_bad = 0
    for seed in range(20):
        prog = random_program(seed)
        pts = np.random.default_rng(100 + seed).uniform(-1.6, 1.6, size=(10_000, 3))
        prog_bad += int(np.count_nonzero(points_in_solid(prog, pts) != fold_membership(prog, pts)))
    mesh_bad = checked = 0
    for mesh in (box_mesh(), sphere_mesh(400), through_hole_mesh()):
        lo, hi = mesh.bounds
        pts = np.random.default_rng(7).uniform(lo - 0.1, hi + 0.1, size=(4000, 3))
        far = point_triangle_distance(mesh.vertices, mesh.faces, pts) > 1e-6
        mesh_bad += int(np.count_nonzero(points_in_mesh(mesh, pts[far]) != ray_parity(mesh.vertices, mesh.faces, pts[far])))
        checked += int(far.sum())
    ok = prog_bad == 0 and mesh_bad == 0
    show(7, "membership equals fold and parity oracles", ok, f"program mismatches {prog_bad}/200000, mesh mismatches {mesh_bad}/{checked}")


# ------------------------------------------------------------- 8: finishing


def test_c08_finishing(show):
    spec = working_grid(np.array([[-0.5] * 3, [0.5] * 3]), 64)
    sharp = Program((extrude(profile(rect(-0.5, -0.5, 0.5, 0.5), plane=xy_plane(-0.5)), 1.0),))
    got = {}
    for kind in ("fillet", "chamfer"):
        prof = apply_corner_feature(profile(rect(-0.5, -0.5, 0.5, 0.5), plane=xy_plane(-0.5)), 2, kind, 0.2)
        t_occ = program_mask(Program((extrude(prof, 1.0),)), spec)
        out, _ = recover_finishing(sharp, t_occ, spec, FitConfig())
        feats = out.ops[0].corner_features
        got[kind] = (feats[0].kind, feats[0].param) if len(feats) == 1 else (None, math.inf)
    ok = all(got[k][0] == k and abs(got[k][1] - 0.2) <= 0.02 for k in got)
    detail = ", ".join(f"{k} -> {got[k][0]} {got[k][1]:.4f}" for k in got)
    show(8, "fillet and chamfer recovery", ok, detail + " (target 0.2 +- 0.02)")


# --------------------------------------------------------------- 9: metrics


def test_c09_metric_sanity(show):
    p = sample_surface(box_mesh((-0.5, -0.3, -0.2), (0.5, 0.3, 0.2)), 2000, seed=5)
    self_cd = chamfer_distance(p, p)
    t = np.linspace(0, 1, 201)
    u, v = np.meshgrid(t, t)
    sq = np.column_stack([u.ravel(), v.ravel(), np.zeros(u.size)])
    gap = abs(chamfer_distance(sq, sq + [0, 0, 0.1]) - 0.1)
    sim_t = align_similarity(p + [0.1, 0, 0], p)
    t_err = float(np.abs(sim_t.apply(np.zeros(3)) - [-0.1, 0, 0]).max())
    sim_s = align_similarity(p * 1.2, p)
    s_err = abs(sim_s.scale - 1 / 1.2)
    rng = np.random.default_rng(3)
    worse = 0
    for _ in range(10):
        pred = (p + rng.normal(scale=0.01, size=p.shape)) * rng.uniform(0.8, 1.2) + rng.uniform(-0.2, 0.2, 3)
        cp, cg = pred.mean(axis=0), p.mean(axis=0)
        s = math.sqrt(np.mean(np.sum((p - cg) ** 2, 1)) / np.mean(np.sum((pred - cp) ** 2, 1)))
        start = min(chamfer_distance(s * (pred - cp) + cg, p), chamfer_distance(pred, p))
        worse += chamfer_distance(align_similarity(pred, p).apply(pred), p) > start + 1e-12
    ok = self_cd == 0 and gap <= 1e-3 and t_err <= 1e-2 and s_err <= 1e-2 and worse == 0
    detail = f"CD(P,P)={self_cd}, plane gap error {gap:.1e}, translation error {t_err:.1e}, scale error {s_err:.1e}, CD increases {worse}/10"
    show(9, "metric sanity", ok, detail)


# ----------------------------------------------------------- 10: determinism


def test_c10_determinism(easy, medium, tmp_path, show):
    same = 0
    names = []
    for res in (easy, medium):
        for row in res["rows"][:2]:
            out = tmp_path / row["name"]
            cli("reconstruct", row["stl"], "--out", out, "--seed", 0)
            ok = all((out / f).read_bytes() == (row["out"] / f).read_bytes() for f in ("program.json", "report.json"))
            same += ok
            names.append(row["name"])
    show(10, "byte-identical reruns", same == len(names), f"{same}/{len(names)} reruns identical ({', '.join(names)})")
