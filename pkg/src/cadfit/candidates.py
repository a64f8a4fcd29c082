"""Extrude/revolve candidates from one-sided Chamfer sweeps over profile parameters."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import FitConfig
from .geometry import Plane
from .metrics import Target
from .program import HALF_PLANE_TOL, Operation, ProgramError, _axis_side, sample_candidate_surface
from .sketch import Profile

logger = logging.getLogger(__name__)

# default boundary slope, as a fraction of cd_threshold per unit height
SLOPE_FRACTION = 0.05


@dataclass(frozen=True)
class SweepConfig:
    n_samples: int = 64
    cd_threshold: float = 0.01
    slope_threshold: float | None = None
    translation_step: float = 0.01
    h_bounds: tuple[float, float] | None = None
    n_points: int = 2048
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 8:
            raise ValueError("n_samples must be >= 8")
        if not (self.cd_threshold > 0 and self.translation_step > 0):
            raise ValueError("thresholds must be > 0")
        if self.slope_threshold is not None and not self.slope_threshold > 0:
            raise ValueError("slope_threshold must be > 0")
        if self.h_bounds is not None and not self.h_bounds[0] < self.h_bounds[1]:
            raise ValueError("h_bounds must satisfy h_min < h_max")

    @property
    def slope(self) -> float:
        return self.slope_threshold if self.slope_threshold is not None else SLOPE_FRACTION * self.cd_threshold

    @classmethod
    def from_fit(cls, cfg: FitConfig) -> "SweepConfig":
        return cls(
            n_samples=cfg.sweep_samples,
            cd_threshold=cfg.cd_threshold,
            slope_threshold=cfg.slope_threshold,
            translation_step=cfg.translation_step,
            n_points=cfg.candidate_points,
            seed=cfg.seed,
        )


@dataclass(frozen=True, eq=False)
class Candidate:
    op: Operation
    fit_error: float
    provenance: tuple

    def __post_init__(self) -> None:
        if not self.fit_error >= 0:
            raise ValueError("fit_error must be >= 0")


# ------------------------------------------------------------------ extrude


def extrude_objective(profile: Profile, target: Target, h: float, cfg: SweepConfig) -> float:
    pts = sample_candidate_surface(profile, "extrude", {"height": h}, cfg.n_points, cfg.seed)
    return target.index.one_sided(pts)


def _objectives(profile: Profile, target: Target, h: float, cfg: SweepConfig) -> tuple[float, float]:
    """(D, occluded D): the second scores candidate points well inside the target as zero."""
    pts = sample_candidate_surface(profile, "extrude", {"height": h}, cfg.n_points, cfg.seed)
    d = target.index.distances(pts)
    d2 = d * d
    hidden = target.hidden(pts) & (d > target.hidden_margin)
    return float(np.mean(d2)), float(np.mean(np.where(hidden, 0.0, d2)))


def _sweep_range(profile: Profile, target: Target, cfg: SweepConfig) -> tuple[float, float]:
    b = target.bounds
    if cfg.h_bounds is not None:
        return float(cfg.h_bounds[0]), float(cfg.h_bounds[1])
    diag = float(np.linalg.norm(b[1] - b[0]))
    corners = np.array([[x, y, z] for x in b[:, 0] for y in b[:, 1] for z in b[:, 2]])
    w = profile.plane.to_local(corners)[:, 2]
    pad = diag / cfg.n_samples
    return max(-diag, float(w.min()) - pad), min(diag, float(w.max()) + pad)


def sweep_table(profile: Profile, target: Target, cfg: SweepConfig, occluded: bool = False) -> dict[int, tuple]:
    """D(h) on a uniform grid per side: {+1: (h, D), -1: (h, D)}; h starts at 0.

    With ``occluded`` each entry also carries the occlusion-aware curve.
    """
    lo, hi = _sweep_range(profile, target, cfg)
    out = {}
    for sign, end in ((1, hi), (-1, lo)):
        if sign * end <= 0:
            continue
        hs = np.linspace(0.0, end, cfg.n_samples + 1)
        vals = np.array([_objectives(profile, target, float(h), cfg) for h in hs])
        out[sign] = (hs, vals[:, 0], vals[:, 1]) if occluded else (hs, vals[:, 0])
    return out


def detect_boundaries(hs: np.ndarray, ds: np.ndarray, cd_threshold: float, slope: float) -> list[int]:
    """Indices ending a stable run: D <= eps there and D starts rising past ``slope``."""
    dh = np.abs(np.diff(hs))
    s = np.diff(ds) / dh
    out = []
    for k in range(len(s)):
        if ds[k] <= cd_threshold and s[k] > slope and (k == 0 or s[k - 1] <= slope):
            out.append(k)
    # merge boundaries separated by at most one sweep step; keep the later one
    merged: list[int] = []
    for k in out:
        if merged and k - merged[-1] <= 1:
            merged[-1] = k
        else:
            merged.append(k)
    return merged


def _refine(profile: Profile, target: Target, hs: np.ndarray, k: int, cfg: SweepConfig, which: int) -> tuple[float, float]:
    """Best height at translation-step granularity around sweep sample ``k``."""
    step = cfg.translation_step
    a = hs[max(0, k - 1)]
    b = hs[min(len(hs) - 1, k + 1)]
    lo, hi = sorted((a, b))
    grid = np.arange(math.ceil(lo / step - 1e-9), math.floor(hi / step + 1e-9) + 1) * step
    if len(grid) == 0:
        return float(hs[k]), _objectives(profile, target, float(hs[k]), cfg)[which]
    vals = np.array([_objectives(profile, target, float(h), cfg)[which] for h in grid])
    # the stable run ends at the farthest height still at the minimum level
    near = np.flatnonzero(vals <= vals.min() + 1e-3 * cfg.cd_threshold)
    j = near[np.argmax(np.abs(grid[near]))]
    return float(grid[j]), float(vals[j])


def canonicalize_interval(profile: Profile, plane: Plane, h_minus: float, h_plus: float, step: float | None = 0.01) -> tuple[Plane, float]:
    """Shift the plane to the interval start and return (plane', positive height).

    The height is rounded to ``step``; ``step=None`` keeps it exact.
    """
    if h_minus > 0 or h_plus < 0:
        raise ValueError("need h_minus <= 0 <= h_plus")
    hm = float(h_minus)
    height = float(h_plus - h_minus) if step is None else round((h_plus - h_minus) / step) * step
    if not height > 0:
        raise ValueError("zero-length extrusion interval")
    new = Plane(plane.origin + hm * plane.normal, plane.normal, plane.u_axis, plane.kind, plane.offset)
    return new, float(height)


def snap_to_faces(profile: Profile, target: Target, h: float, step: float) -> tuple[float, bool]:
    """Move an interval end onto the nearest parallel target face within one step."""
    n = profile.plane.normal
    base = float(profile.plane.origin @ n)
    offs = target.face_offsets(n)
    if len(offs) == 0:
        return h, False
    j = int(np.argmin(np.abs(offs - (base + h))))
    if abs(offs[j] - (base + h)) > step:
        return h, False
    return float(offs[j] - base), True


def _on_face(profile: Profile, target: Target, h: float) -> bool:
    # the sketch plane itself lies on a face when h = 0 comes from a planar cluster
    return snap_to_faces(profile, target, h, 1e-3)[1]


def _moved(profile: Profile, plane: Plane) -> Profile:
    return Profile(plane, profile.outer, profile.holes, profile.source, profile.sketch_points, profile.chains)


def sweep_extrude_heights(profile: Profile, target: Target, cfg: SweepConfig, tag: tuple = ()) -> list[Candidate]:
    """Extrude candidates for the smallest and the largest stable interval around h = 0."""
    table = sweep_table(profile, target, cfg, occluded=True)
    ends: dict[int, list[tuple[float, float]]] = {1: [], -1: []}
    for sign, (hs, *curves) in table.items():
        for which, ds in enumerate(curves):
            for k in detect_boundaries(hs, ds, cfg.cd_threshold, cfg.slope):
                if k == 0:
                    continue
                h, d = _refine(profile, target, hs, k, cfg, which)
                h, exact = snap_to_faces(profile, target, h, cfg.translation_step)
                if d <= cfg.cd_threshold and abs(h) > 0 and all(abs(h - e[0]) > 1e-9 for e in ends[sign]):
                    ends[sign].append((h, d, exact))
    pos = sorted(ends[1], key=lambda t: t[0])
    neg = sorted(ends[-1], key=lambda t: -t[0])
    intervals = []
    if pos or neg:
        zero = (0.0, 0.0, _on_face(profile, target, 0.0))
        small = (neg[0] if neg else zero, pos[0] if pos else zero)
        large = (neg[-1] if neg else zero, pos[-1] if pos else zero)
        intervals = [small] if small == large else [small, large]
    out = []
    for lo_end, hi_end in intervals:
        hm, hp = lo_end[0], hi_end[0]
        # both ends on target faces: the face distance is already exact
        step = None if lo_end[2] and hi_end[2] else cfg.translation_step
        try:
            plane, height = canonicalize_interval(profile, profile.plane, hm, hp, step)
        except ValueError:
            continue
        prof = _moved(profile, plane)
        err = min(_objectives(prof, target, height, cfg))
        try:
            op = Operation("extrude", prof, "union", height=height)
        except ProgramError:
            continue
        out.append(Candidate(op, err, tag + ("extrude", round(hm, 6), round(hp, 6))))
    return out


# ------------------------------------------------------------------ revolve


def axis_hypotheses(profile: Profile) -> list[tuple[np.ndarray, np.ndarray]]:
    """Principal axes of the sketch's loop points and their +-45 degree rotations."""
    pts = profile.sketch_points if profile.sketch_points is not None else profile.outer.points
    c = pts.mean(axis=0)
    cov = np.cov((pts - c).T)
    _, vecs = np.linalg.eigh(cov)
    dirs = []
    for base in (vecs[:, 1], vecs[:, 0]):
        for ang in (0.0, math.pi / 4, -math.pi / 4):
            ca, sa = math.cos(ang), math.sin(ang)
            d = np.array([ca * base[0] - sa * base[1], sa * base[0] + ca * base[1]])
            if not any(abs(d[0] * e[1] - d[1] * e[0]) < 1e-9 for e in dirs):
                dirs.append(d / np.linalg.norm(d))
    return [(c.copy(), d) for d in dirs]


def revolve_objective(profile: Profile, target: Target, ap, ad, cfg: SweepConfig) -> float:
    pts = sample_candidate_surface(profile, "revolve", {"axis_point": ap, "axis_dir": ad}, cfg.n_points, cfg.seed)
    return target.index.one_sided(pts)


def fit_revolve(profile: Profile, target: Target, cfg: SweepConfig, tag: tuple = ()) -> Candidate | None:
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    loops = profile.loops
    for ap, ad in axis_hypotheses(profile):
        side = _axis_side(loops, ap, ad)
        if side.min() >= -HALF_PLANE_TOL:
            d = ad
        elif side.max() <= HALF_PLANE_TOL:
            d = -ad
        else:
            continue
        err = revolve_objective(profile, target, ap, d, cfg)
        if best is None or err < best[0]:
            best = (err, ap, d)
    if best is None or best[0] > cfg.cd_threshold:
        return None
    err, ap, d = best
    op = Operation("revolve", profile, "union", axis_point=ap, axis_dir=d)
    return Candidate(op, err, tag + ("revolve", round(float(ap[0]), 6), round(float(ap[1]), 6)))


# ------------------------------------------------------------------ driver


def generate_candidates(profiles: Sequence[Profile], target: Target, cfg: FitConfig | SweepConfig | None = None) -> list[Candidate]:
    scfg = cfg if isinstance(cfg, SweepConfig) else SweepConfig.from_fit(cfg or FitConfig())
    out: list[Candidate] = []
    for i, prof in enumerate(profiles):
        out.extend(sweep_extrude_heights(prof, target, scfg, (i,)))
        rc = fit_revolve(prof, target, scfg, (i,))
        if rc is not None:
            out.append(rc)
    out.sort(key=lambda c: (c.fit_error, c.provenance))
    logger.debug("generated %d candidates from %d profiles", len(out), len(profiles))
    return out


def write_sweep_csv(path: str, tables: Iterable[tuple[int, dict]]) -> None:
    """Dump (profile, side, h, D) rows for inspection."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["profile", "side", "h", "D"])
        for pid, table in tables:
            for sign, (hs, ds) in sorted(table.items()):
                for h, d in zip(hs, ds):
                    w.writerow([pid, sign, repr(float(h)), repr(float(d))])
