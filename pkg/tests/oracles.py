"""Brute-force reference implementations, written without the package internals."""

from __future__ import annotations

import numpy as np

RAY_DIR = np.array([0.5773, 0.5774, 0.5772]) / np.linalg.norm([0.5773, 0.5774, 0.5772])


def ray_parity(vertices: np.ndarray, faces: np.ndarray, pts: np.ndarray, direction=RAY_DIR) -> np.ndarray:
    """Moller-Trumbore crossing parity along a skew direction, every triangle per point."""
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    d = np.asarray(direction, dtype=float)
    pv = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pv)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    out = np.zeros(len(pts), dtype=bool)
    for k, p in enumerate(np.asarray(pts, dtype=float)):
        tv = p - v0
        u = np.einsum("ij,ij->i", tv, pv) * inv
        qv = np.cross(tv, e1)
        v = (qv @ d) * inv
        t = np.einsum("ij,ij->i", e2, qv) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        out[k] = bool(hit.sum() % 2)
    return out


def point_triangle_distance(vertices: np.ndarray, faces: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Unsigned distance to the closest triangle, by projection plus edge clamping."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    out = np.empty(len(pts))
    for k, p in enumerate(np.asarray(pts, dtype=float)):
        dist = np.einsum("ij,ij->i", p - a, n)
        q = p - dist[:, None] * n
        inside = np.ones(len(a), dtype=bool)
        for s, e in ((a, b), (b, c), (c, a)):
            inside &= np.einsum("ij,ij->i", np.cross(e - s, q - s), n) >= 0
        best = np.where(inside, np.abs(dist), np.inf)
        for s, e in ((a, b), (b, c), (c, a)):
            seg = e - s
            t = np.clip(np.einsum("ij,ij->i", p - s, seg) / np.einsum("ij,ij->i", seg, seg), 0, 1)
            best = np.minimum(best, np.linalg.norm(p - (s + t[:, None] * seg), axis=1))
        out[k] = best.min()
    return out


def winding_number(q: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Signed winding number of a closed polygon around each 2D query point."""
    q = np.asarray(q, dtype=float)
    a = np.asarray(loop, dtype=float)
    b = np.roll(a, -1, axis=0)
    wn = np.zeros(len(q), dtype=int)
    for (x0, y0), (x1, y1) in zip(a, b):
        cross = (x1 - x0) * (q[:, 1] - y0) - (q[:, 0] - x0) * (y1 - y0)
        up = (y0 <= q[:, 1]) & (y1 > q[:, 1]) & (cross > 0)
        down = (y0 > q[:, 1]) & (y1 <= q[:, 1]) & (cross < 0)
        wn += up.astype(int) - down.astype(int)
    return wn


def region_contains(q: np.ndarray, loops) -> np.ndarray:
    """Outer loop minus holes, each loop tested on its own."""
    inside = winding_number(q, loops[0]) != 0
    for h in loops[1:]:
        inside &= winding_number(q, h) == 0
    return inside


def primitive_contains(op, pts: np.ndarray) -> np.ndarray:
    """Membership of a single extrude or revolve, from the raw plane frame."""
    pts = np.asarray(pts, dtype=float)
    pl = op.profile.plane
    n = pl.normal / np.linalg.norm(pl.normal)
    u = pl.u_axis
    v = np.cross(n, u)
    rel = pts - pl.origin
    if op.kind == "extrude":
        q = np.column_stack([rel @ u, rel @ v])
        w = rel @ n
        return (w >= 0) & (w <= op.height) & region_contains(q, op.loops)
    ap, ad = np.asarray(op.axis_point), np.asarray(op.axis_dir)
    origin = pl.origin + ap[0] * u + ap[1] * v
    axis = ad[0] * u + ad[1] * v
    r = pts - origin
    along = r @ axis
    radial = np.linalg.norm(r - along[:, None] * axis, axis=1)
    side = np.array([-ad[1], ad[0]])
    q = ap + along[:, None] * ad + radial[:, None] * side
    return region_contains(q, op.loops)


def fold_membership(program, pts: np.ndarray) -> np.ndarray:
    """Evaluate every primitive everywhere, then fold union and difference in order."""
    inside = np.zeros(len(pts), dtype=bool)
    for op in program.ops:
        m = primitive_contains(op, pts)
        inside = inside | m if op.role == "union" else inside & ~m
    return inside


def chamfer_brute(p: np.ndarray, q: np.ndarray, mode: str = "symmetric") -> float:
    d = np.sqrt(((np.asarray(p)[:, None, :] - np.asarray(q)[None, :, :]) ** 2).sum(-1))
    if mode == "one_sided":
        return float((d.min(axis=1) ** 2).mean())
    return 0.5 * float(d.min(axis=1).mean() + d.min(axis=0).mean())


def iou_sets(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    """Intersection and union sizes from Python sets of occupied index tuples."""
    sa = set(map(tuple, np.argwhere(a)))
    sb = set(map(tuple, np.argwhere(b)))
    return len(sa & sb), len(sa | sb)
