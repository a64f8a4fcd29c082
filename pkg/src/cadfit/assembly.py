"""IoU-guided program assembly: greedy selection, pruning, residual refinement, finishing."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import ndimage

from .candidates import Candidate, generate_candidates
from .config import FitConfig
from .geometry import NotWatertightError, TriMesh
from .grid import GridSpec
from .metrics import (
    EmptyResidualError,
    Target,
    VoxelGrid,
    compute_residuals,
    mesh_target,
    residual_target,
)
from .prior import filter_profiles, score_profile
from .program import (
    CornerFeature,
    CornerFeatureError,
    Operation,
    Program,
    corner_turn_deg,
    program_mask,
)
from .sketch import extract_sketch_candidates

logger = logging.getLogger(__name__)

EXHAUSTIVE_PRUNE_MAX = 8
GRID_PAD = 0.05


@dataclass
class FitReport:
    iou_trace: list[float] = field(default_factory=list)
    candidate_counts: list[int] = field(default_factory=list)
    profile_counts: list[int] = field(default_factory=list)
    pruned: int = 0
    iterations: int = 0
    accepted_residual_ops: int = 0
    features: int = 0
    a: float = 1.0
    b: float = 0.0
    E: float = 1.0
    iou: float = 0.0
    prior_scores: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def monotone(self) -> bool:
        return all(y >= x for x, y in zip(self.iou_trace, self.iou_trace[1:]))

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "iou": self.iou,
            "a": self.a,
            "b": self.b,
            "E": self.E,
            "iou_trace": list(self.iou_trace),
            "candidate_counts": list(self.candidate_counts),
            "profile_counts": list(self.profile_counts),
            "pruned": self.pruned,
            "iterations": self.iterations,
            "accepted_residual_ops": self.accepted_residual_ops,
            "features": self.features,
            "prior_scores": [round(s, 6) for s in self.prior_scores],
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def working_grid(bounds: np.ndarray, resolution: int) -> GridSpec:
    b = np.asarray(bounds, dtype=float)
    pad = GRID_PAD * float((b[1] - b[0]).max())
    return GridSpec.from_bounds(np.array([b[0] - pad, b[1] + pad]), resolution)


# ------------------------------------------------------------- IoU helpers


class Scorer:
    """Exact IoU of programs against a fixed target occupancy on one grid."""

    def __init__(self, target_occ: np.ndarray, spec: GridSpec):
        self.t = target_occ
        self.spec = spec
        self.t_count = int(np.count_nonzero(target_occ))

    def counts(self, occ: np.ndarray) -> tuple[int, int]:
        inter = int(np.count_nonzero(occ & self.t))
        return inter, self.t_count + int(np.count_nonzero(occ)) - inter

    def frac(self, occ: np.ndarray) -> Fraction:
        i, u = self.counts(occ)
        return Fraction(1) if u == 0 else Fraction(i, u)

    def program(self, program: Program) -> Fraction:
        return self.frac(program_mask(program, self.spec))


def _f(x: Fraction) -> float:
    return float(x)


# ---------------------------------------------------------- greedy select


def greedy_select(
    candidates: Sequence[Candidate],
    target_occ: np.ndarray,
    spec: GridSpec,
    trace: list[float] | None = None,
) -> Program:
    """Add the union candidate with the largest positive IoU gain until none helps."""
    sc = Scorer(target_occ, spec)
    occ = np.zeros(spec.dims, dtype=bool)
    inter, union = 0, sc.t_count
    used: set[int] = set()
    ops: list[Operation] = []
    masks = [c.op.mask(spec) for c in candidates]
    cur = Fraction(0) if union else Fraction(1)
    while True:
        best, best_i, best_counts = cur, -1, None
        for i, (sl, m) in enumerate(masks):
            if i in used or m.size == 0:
                continue
            new = m & ~occ[sl]
            t = target_occ[sl]
            di = int(np.count_nonzero(new & t))
            du = int(np.count_nonzero(new & ~t))
            ni, nu = inter + di, union + du
            val = Fraction(ni, nu) if nu else Fraction(1)
            if val > best:
                best, best_i, best_counts = val, i, (ni, nu)
        if best_i < 0:
            break
        sl, m = masks[best_i]
        occ[sl] |= m
        inter, union = best_counts
        used.add(best_i)
        ops.append(candidates[best_i].op.with_role("union"))
        cur = best
        if trace is not None:
            trace.append(_f(cur))
    return Program(tuple(ops))


# ---------------------------------------------------------- backward prune


def backward_prune(program: Program, target_occ: np.ndarray, spec: GridSpec, exhaustive: bool = True) -> Program:
    """Drop ops whose removal does not lower IoU, largest gain first, later ops on ties.

    Short programs then get an exact pass: the smallest subsequence whose IoU
    is at least the current one replaces the program.
    """
    sc = Scorer(target_occ, spec)
    original = program
    cur = sc.program(program)
    while len(program) > 0:
        best_i, best_v = -1, None
        for i in range(len(program)):
            v = sc.program(program.without(i))
            if v >= cur and (best_v is None or v >= best_v):
                best_i, best_v = i, v
        if best_i < 0:
            break
        program = program.without(best_i)
        cur = best_v
    if exhaustive and 1 < len(program):
        # greedy removal order can strand a covering op; search the unpruned ops when affordable
        pool = original if len(original) <= EXHAUSTIVE_PRUNE_MAX else program
        if len(pool) <= EXHAUSTIVE_PRUNE_MAX:
            program = _minimal_subsequence(pool, sc, cur)
    return program


def _minimal_subsequence(program: Program, sc: Scorer, cur: Fraction) -> Program:
    n = len(program)
    for size in range(0, n):
        best, best_v = None, None
        for idx in itertools.combinations(range(n), size):
            sub = Program(tuple(program.ops[i] for i in idx))
            if sub.ops and sub.ops[0].role != "union":
                continue
            v = sc.program(sub)
            if v >= cur and (best_v is None or v > best_v):
                best, best_v = sub, v
        if best is not None:
            return best
    return program


# ------------------------------------------------------- single-pass fit


def reconstruct_once(
    target: Target,
    cfg: FitConfig,
    spec: GridSpec | None = None,
    salt: int = 0,
    report: FitReport | None = None,
    trace: list[float] | None = None,
) -> Program:
    """Sketches -> prior filter -> candidates -> greedy union -> backward prune."""
    spec = spec or working_grid(target.bounds, cfg.iou_resolution)
    t_occ = target.voxels(spec).occ
    profiles = extract_sketch_candidates(target, cfg)
    scores = [score_profile(target, p, cfg) for p in profiles]
    kept = filter_profiles(profiles, scores, cfg.prior_budget, [cfg.seed, salt], cfg.prior_min_keep)
    cands = generate_candidates(kept, target, cfg)
    if report is not None:
        report.profile_counts.append(len(kept))
        report.candidate_counts.append(len(cands))
        if salt == 0:
            report.prior_scores = scores
    prog = greedy_select(cands, t_occ, spec, trace)
    pruned = backward_prune(prog, t_occ, spec)
    if report is not None:
        report.pruned += len(prog) - len(pruned)
    return pruned


# ------------------------------------------------------------ finishing


def _golden_max(f, a: float, b: float, evals: int) -> tuple[float, Fraction]:
    g = (math.sqrt(5) - 1) / 2
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    seen = [(c, fc), (d, fd)]
    for _ in range(max(0, evals - 2)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
            seen.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
            seen.append((d, fd))
    return max(seen, key=lambda t: (t[1], -t[0]))


def _feature_bound(pts: np.ndarray, i: int, kind: str) -> float:
    n = len(pts)
    p, a, b = pts[i], pts[(i - 1) % n], pts[(i + 1) % n]
    half = min(np.linalg.norm(a - p), np.linalg.norm(b - p)) / 2.0
    if kind == "chamfer":
        return float(half)
    e1 = (a - p) / np.linalg.norm(a - p)
    e2 = (b - p) / np.linalg.norm(b - p)
    phi = math.acos(max(-1.0, min(1.0, float(e1 @ e2))))
    return float(min(half, half * math.tan(phi / 2.0)))


def recover_finishing(program: Program, target_occ: np.ndarray, spec: GridSpec, cfg: FitConfig, trace: list[float] | None = None) -> tuple[Program, int]:
    """Probe fillets and chamfers on extrude profile corners; keep strict IoU gains."""
    sc = Scorer(target_occ, spec)
    cur = sc.program(program)
    added = 0
    for oi in range(len(program)):
        op = program.ops[oi]
        if op.kind != "extrude":
            continue
        outer = op.profile.outer.points
        for ci in range(len(outer)):
            op = program.ops[oi]
            if any(f.corner == ci for f in op.corner_features):
                continue
            try:
                if corner_turn_deg(outer, ci) <= cfg.finishing_min_turn_deg:
                    continue
            except CornerFeatureError:
                continue
            best = None
            for kind in ("fillet", "chamfer"):
                bound = _feature_bound(outer, ci, kind)
                if not bound > 0:
                    continue

                def evaluate(param: float, kind=kind, op=op) -> Fraction:
                    try:
                        new_op = op.with_features(op.corner_features + (CornerFeature(ci, kind, param),))
                    except CornerFeatureError:
                        return Fraction(-1)
                    ops = list(program.ops)
                    ops[oi] = new_op
                    return sc.program(Program(tuple(ops)))

                probe = min(cfg.finishing_probe, bound)
                if evaluate(probe) <= cur:
                    continue
                p, v = _golden_max(evaluate, 0.0, bound, cfg.finishing_evals)
                if v > cur and (best is None or v > best[2]):
                    best = (kind, p, v)
            if best is not None:
                kind, p, v = best
                ops = list(program.ops)
                ops[oi] = program.ops[oi].with_features(program.ops[oi].corner_features + (CornerFeature(ci, kind, p),))
                program = Program(tuple(ops))
                cur = v
                added += 1
                if trace is not None:
                    trace.append(_f(cur))
    return program, added


# ------------------------------------------------------------ outer loop


def _clean(occ: np.ndarray) -> np.ndarray:
    """Drop one-cell slivers from a residual region."""
    return ndimage.binary_opening(occ, structure=ndimage.generate_binary_structure(3, 1))


def _append_gated(program: Program, ops: Sequence[Operation], role: str, sc: Scorer, cur: Fraction) -> tuple[Program, Fraction, int]:
    n = 0
    for op in ops:
        cand = program.append(op.with_role(role))
        if role == "cut" and not program.ops:
            continue
        v = sc.program(cand)
        if v > cur:
            program, cur = cand, v
            n += 1
    return program, cur, n


def iterative_fit(mesh: TriMesh, cfg: FitConfig | None = None) -> tuple[Program, FitReport]:
    """Single-pass fit followed by residual union/cut refinement and corner finishing."""
    cfg = cfg or FitConfig()
    if not mesh.is_watertight:
        raise NotWatertightError("mesh is not watertight")
    t0 = time.perf_counter()
    target = mesh_target(mesh, cfg)
    program, report = fit_target(target, cfg)
    report.wall_time = time.perf_counter() - t0
    return program, report


def fit_target(target: Target, cfg: FitConfig) -> tuple[Program, FitReport]:
    report = FitReport()
    spec = working_grid(target.bounds, cfg.iou_resolution)
    t_grid = target.voxels(spec)
    t_occ = t_grid.occ
    sc = Scorer(t_occ, spec)
    trace: list[float] = [0.0]
    program = reconstruct_once(target, cfg, spec, 0, report, trace)
    cur = sc.program(program)
    trace.append(_f(cur))
    for it in range(1, cfg.max_residual_iters + 1):
        res = compute_residuals(t_grid, VoxelGrid(spec, program_mask(program, spec)))
        if res.a <= cfg.residual_threshold and res.b <= cfg.residual_threshold:
            break
        report.iterations = it
        gained = 0
        for role, grid in (("union", res.plus), ("cut", res.minus)):
            occ = _clean(grid.occ)
            if not occ.any():
                continue
            try:
                rt = residual_target(grid.with_occ(occ), cfg, name=f"residual-{role}")
            except EmptyResidualError:
                continue
            sub = reconstruct_once(rt, cfg, spec, it * 2 + (role == "cut"), report)
            program, cur, n = _append_gated(program, sub.ops, role, sc, cur)
            gained += n
            if n:
                trace.append(_f(cur))
        report.accepted_residual_ops += gained
        if gained == 0:
            break
    if cfg.finishing and program.ops:
        program, report.features = recover_finishing(program, t_occ, spec, cfg, trace)
    before = len(program)
    program = backward_prune(program, t_occ, spec)
    report.pruned += before - len(program)
    cur = sc.program(program)
    trace.append(_f(cur))
    report.iou_trace = trace
    res = compute_residuals(t_grid, VoxelGrid(spec, program_mask(program, spec)))
    report.a, report.b = res.a, res.b
    report.E = res.a + res.b
    report.iou = _f(cur)
    return program, report
