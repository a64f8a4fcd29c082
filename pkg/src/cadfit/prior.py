"""Heuristic sketch prior and the budgeted Bernoulli profile filter."""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from .config import FitConfig
from .metrics import Target
from .sketch import Profile, fit_primitives

PROVENANCE_BONUS = {"planar": 1.0, "axis": 0.5}


class ProfileScorer(Protocol):
    def __call__(self, target: Target, profile: Profile) -> float: ...


def profile_components(target: Target, profile: Profile, cfg: FitConfig | None = None) -> dict[str, float]:
    cfg = cfg or FitConfig()
    pts2 = np.concatenate(profile.loops, axis=0)
    pts3 = profile.plane.to_world(pts2)
    d = target.index.distances(pts3)
    proximity = float(np.mean(d <= 2.0 * cfg.slice_offset))
    ext = float((target.bounds[1] - target.bounds[0]).max())
    area = min(1.0, abs(profile.area) / (ext * ext)) if ext > 0 else 0.0
    chains = profile.chains
    if chains is None:
        chains = [fit_primitives(lp, cfg.fit_tolerance) for lp in [profile.outer] + list(profile.holes)]
    n_el = sum(len(c.elements) for c in chains)
    compact = 1.0 / (1.0 + n_el / 8.0)
    prov = PROVENANCE_BONUS.get(profile.source, 0.0)
    return {"proximity": proximity, "area": area, "compactness": compact, "provenance": prov}


def score_profile(target: Target, profile: Profile, cfg: FitConfig | None = None) -> float:
    """Weighted mix of surface proximity, area, primitive compactness and provenance, in [0, 1]."""
    cfg = cfg or FitConfig()
    c = profile_components(target, profile, cfg)
    w = cfg.prior_weights
    total = sum(w)
    if total <= 0:
        return 0.0
    s = w[0] * c["proximity"] + w[1] * c["area"] + w[2] * c["compactness"] + w[3] * c["provenance"]
    return float(min(1.0, max(0.0, s / total)))


def filter_profiles(
    profiles: Sequence[Profile],
    scores: Sequence[float],
    budget: int = 100,
    seed=0,
    min_keep: int = 8,
) -> list[Profile]:
    """Keep each profile with probability equal to its score, then cap and backfill by rank."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n = len(profiles)
    if n == 0:
        return []
    sc = np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)
    rng = np.random.default_rng(seed)
    keep = rng.random(n) < sc
    rank = sorted(range(n), key=lambda i: (-sc[i], i))
    if keep.sum() > budget:
        kept = [i for i in rank if keep[i]][:budget]
        keep[:] = False
        keep[kept] = True
    need = min(min_keep, n, budget)
    if keep.sum() < need:
        for i in rank:
            if keep.sum() >= need:
                break
            keep[i] = True
    return [profiles[i] for i in range(n) if keep[i]]
