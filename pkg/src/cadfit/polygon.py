"""Planar polygon helpers: areas, even-odd containment, distances, resampling."""

from __future__ import annotations

from typing import Sequence

import numpy as np

_CHUNK = 1 << 22  # point-edge pairs evaluated per block


def signed_area(pts: np.ndarray) -> float:
    """Shoelace area of a closed polygon; positive when counter-clockwise."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def perimeter(pts: np.ndarray) -> float:
    return float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())


def centroid(pts: np.ndarray) -> np.ndarray:
    """Area centroid of a simple polygon (vertex mean for degenerate ones)."""
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-15:
        return pts.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def _edges(loops: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    a = np.concatenate([lp for lp in loops], axis=0)
    b = np.concatenate([np.roll(lp, -1, axis=0) for lp in loops], axis=0)
    return a, b


def points_in_polygon(q: np.ndarray, loops: Sequence[np.ndarray]) -> np.ndarray:
    """Even-odd membership of 2D points ``q`` in the region bounded by ``loops``.

    Holes are just more loops; crossings are counted over every edge of every
    loop, so nesting depth parity decides membership.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    out = np.zeros(len(q), dtype=bool)
    if len(q) == 0 or not loops:
        return out
    a, b = _edges(loops)
    # drop horizontal edges: they never produce a crossing
    keep = a[:, 1] != b[:, 1]
    a, b = a[keep], b[keep]
    if len(a) == 0:
        return out
    lo = np.minimum(a, b).min(axis=0)
    hi = np.maximum(a, b).max(axis=0)
    cand = np.flatnonzero(
        (q[:, 0] >= lo[0]) & (q[:, 0] <= hi[0]) & (q[:, 1] >= lo[1]) & (q[:, 1] <= hi[1])
    )
    if len(cand) == 0:
        return out
    slope = (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    step = max(1, _CHUNK // len(a))
    for s in range(0, len(cand), step):
        idx = cand[s : s + step]
        qx = q[idx, 0][:, None]
        qy = q[idx, 1][:, None]
        straddle = (a[None, :, 1] > qy) != (b[None, :, 1] > qy)
        xcross = a[None, :, 0] + (qy - a[None, :, 1]) * slope[None, :]
        hits = straddle & (qx < xcross)
        out[idx] = (np.count_nonzero(hits, axis=1) & 1).astype(bool)
    return out


def point_segment_distance(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from every point in ``q`` (N,2) to the nearest of segments a->b (E,2)."""
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    out = np.full(len(q), np.inf)
    if len(a) == 0:
        return out
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd > 0, dd, 1.0)
    step = max(1, _CHUNK // len(a))
    for s in range(0, len(q), step):
        qq = q[s : s + step]
        rel = qq[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nek,ek->ne", rel, d) / dd[None, :], 0.0, 1.0)
        diff = rel - t[..., None] * d[None, :, :]
        out[s : s + step] = np.sqrt(np.einsum("nek,nek->ne", diff, diff).min(axis=1))
    return out


def loop_distance(q: np.ndarray, loops: Sequence[np.ndarray]) -> np.ndarray:
    a, b = _edges(loops)
    return point_segment_distance(q, a, b)


def signed_distance(q: np.ndarray, loops: Sequence[np.ndarray]) -> np.ndarray:
    """Signed distance to the region boundary, negative inside."""
    d = loop_distance(q, loops)
    inside = points_in_polygon(q, loops)
    return np.where(inside, -d, d)


def resample_closed(pts: np.ndarray, n: int) -> np.ndarray:
    """Resample a closed polyline to ``n`` points equally spaced in arc length."""
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        return np.repeat(pts[:1], n, axis=0)
    t = np.arange(n) * (total / n)
    x = np.interp(t, cum, closed[:, 0])
    y = np.interp(t, cum, closed[:, 1])
    return np.column_stack([x, y])


def sample_in_region(loops: Sequence[np.ndarray], n: int, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform samples inside the even-odd region, by rejection from the bounding box."""
    allpts = np.concatenate(loops, axis=0)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    box_area = float(span[0] * span[1])
    area = abs(signed_area(loops[0])) - sum(abs(signed_area(h)) for h in loops[1:])
    frac = max(area / box_area, 1e-3)
    out: list[np.ndarray] = []
    have = 0
    while have < n:
        m = int((n - have) / frac * 1.2) + 16
        cand = lo + rng.random((m, 2)) * span
        ok = cand[points_in_polygon(cand, loops)]
        out.append(ok)
        have += len(ok)
    return np.concatenate(out, axis=0)[:n]


def is_simple(pts: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the closed polygon intersect."""
    n = len(pts)
    if n < 3:
        return False
    a = pts
    b = np.roll(pts, -1, axis=0)
    for i in range(n):
        p, r = a[i], b[i] - a[i]
        j = np.arange(n)
        mask = (j != i) & (j != (i + 1) % n) & (j != (i - 1) % n)
        q, s = a[mask], b[mask] - a[mask]
        denom = r[0] * s[:, 1] - r[1] * s[:, 0]
        qp = q - p
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
            u = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / denom
        hit = (denom != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
        if np.any(hit):
            return False
    return True
