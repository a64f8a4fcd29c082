"""Sketch profiles: 2D section loops, containment grouping and primitive fitting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence, Union

import numpy as np

from . import polygon as poly
from .config import FitConfig
from .geometry import Loop3D, Plane

if TYPE_CHECKING:
    from .metrics import Target

logger = logging.getLogger(__name__)

CIRCLE_SEGMENTS = 64


@dataclass(frozen=True, eq=False)
class Loop2D:
    """Closed polygon in plane coordinates."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(pts) < 3:
            raise ValueError("a loop needs at least 3 points")
        object.__setattr__(self, "points", pts)

    @property
    def signed_area(self) -> float:
        return poly.signed_area(self.points)

    @property
    def perimeter(self) -> float:
        return poly.perimeter(self.points)

    @property
    def centroid(self) -> np.ndarray:
        return poly.centroid(self.points)

    def reversed(self) -> "Loop2D":
        return Loop2D(self.points[::-1].copy())

    def oriented(self, ccw: bool) -> "Loop2D":
        return self if (self.signed_area > 0) == ccw else self.reversed()


# ---------------------------------------------------------------- primitives


@dataclass(frozen=True, eq=False)
class LineSegment:
    p0: np.ndarray
    p1: np.ndarray

    @property
    def start(self) -> np.ndarray:
        return self.p0

    @property
    def end(self) -> np.ndarray:
        return self.p1

    def polygonize(self) -> np.ndarray:
        return np.asarray(self.p0, dtype=float)[None, :]

    def sample(self, n: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, n)[:, None]
        return self.p0 + t * (self.p1 - self.p0)


@dataclass(frozen=True, eq=False)
class Arc:
    center: np.ndarray
    radius: float
    start_angle: float
    end_angle: float
    ccw: bool = True

    @property
    def sweep(self) -> float:
        d = (self.end_angle - self.start_angle) % (2 * np.pi)
        return d if self.ccw else d - 2 * np.pi if d > 0 else 0.0

    def _at(self, ang: np.ndarray) -> np.ndarray:
        return self.center + self.radius * np.column_stack([np.cos(ang), np.sin(ang)])

    @property
    def start(self) -> np.ndarray:
        return self._at(np.array([self.start_angle]))[0]

    @property
    def end(self) -> np.ndarray:
        return self._at(np.array([self.end_angle]))[0]

    @property
    def mid(self) -> np.ndarray:
        return self._at(np.array([self.start_angle + self.sweep / 2]))[0]

    def sample(self, n: int) -> np.ndarray:
        return self._at(self.start_angle + np.linspace(0.0, 1.0, n) * self.sweep)

    def polygonize(self) -> np.ndarray:
        k = max(2, int(math.ceil(abs(self.sweep) / (np.pi / 16))))
        return self._at(self.start_angle + np.arange(k) / k * self.sweep)


@dataclass(frozen=True, eq=False)
class Circle:
    center: np.ndarray
    radius: float

    @property
    def start(self) -> np.ndarray:
        return self.center + np.array([self.radius, 0.0])

    end = start

    def sample(self, n: int) -> np.ndarray:
        a = np.linspace(0.0, 2 * np.pi, n)
        return self.center + self.radius * np.column_stack([np.cos(a), np.sin(a)])

    def polygonize(self, n: int = CIRCLE_SEGMENTS) -> np.ndarray:
        # area-preserving radius for the inscribed n-gon
        r = self.radius * math.sqrt(2 * math.pi / (n * math.sin(2 * math.pi / n)))
        a = np.arange(n) * (2 * np.pi / n)
        return self.center + r * np.column_stack([np.cos(a), np.sin(a)])


@dataclass(frozen=True, eq=False)
class Polyline:
    points: np.ndarray

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def sample(self, n: int) -> np.ndarray:
        return self.points

    def polygonize(self) -> np.ndarray:
        return self.points[:-1]


Primitive = Union[LineSegment, Arc, Circle, Polyline]


@dataclass(frozen=True, eq=False)
class PrimitiveChain:
    elements: tuple

    def polygon(self) -> np.ndarray:
        if len(self.elements) == 1 and isinstance(self.elements[0], Circle):
            return self.elements[0].polygonize()
        return np.concatenate([e.polygonize() for e in self.elements], axis=0)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.elements:
            out[type(e).__name__] = out.get(type(e).__name__, 0) + 1
        return out

    def sample(self, per_element: int = 32) -> np.ndarray:
        return np.concatenate([e.sample(per_element) for e in self.elements], axis=0)


# ------------------------------------------------------------------ profiles


@dataclass(frozen=True, eq=False)
class Profile:
    """A sketch region: one counter-clockwise outer loop and clockwise holes."""

    plane: Plane
    outer: Loop2D
    holes: tuple = ()
    source: str = "axis"
    sketch_points: np.ndarray | None = field(default=None, repr=False)
    chains: tuple | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "outer", self.outer.oriented(ccw=True))
        object.__setattr__(self, "holes", tuple(h.oriented(ccw=False) for h in self.holes))

    @property
    def loops(self) -> list[np.ndarray]:
        return [self.outer.points] + [h.points for h in self.holes]

    @property
    def area(self) -> float:
        return self.outer.signed_area + sum(h.signed_area for h in self.holes)

    def contains(self, q: np.ndarray) -> np.ndarray:
        return poly.points_in_polygon(q, self.loops)

    def key(self) -> tuple:
        c = self.outer.centroid
        return self.plane.key()[:2] + (round(float(c[0]), 6), round(float(c[1]), 6), round(self.area, 6))


# ---------------------------------------------------------------- extraction


def project_loop(loop: Loop3D, plane: Plane) -> np.ndarray:
    return plane.to_local(loop.points)[:, :2]


def extract_loops(sections: Sequence[Loop3D], plane: Plane, cfg: FitConfig | None = None, stats: dict | None = None) -> list[Loop2D]:
    """Project section loops to plane coordinates, resample and drop degenerate ones."""
    cfg = cfg or FitConfig()
    out: list[Loop2D] = []
    for lp in sections:
        uv = project_loop(lp, plane)
        if poly.perimeter(uv) < cfg.min_loop_length or abs(poly.signed_area(uv)) < cfg.min_loop_area:
            if stats is not None:
                stats["dropped"] = stats.get("dropped", 0) + 1
            continue
        out.append(Loop2D(poly.resample_closed(uv, cfg.loop_resample_n)))
    return out


def _contains_loop(outer: np.ndarray, inner: np.ndarray) -> bool:
    inside = poly.points_in_polygon(inner, [outer])
    return bool(inside.mean() >= 0.95)


def group_profiles(loops: Sequence[Loop2D], plane: Plane, source: str | None = None) -> list[Profile]:
    """Group loops into profiles by containment depth parity."""
    n = len(loops)
    if n == 0:
        return []
    areas = np.array([abs(lp.signed_area) for lp in loops])
    contains = np.zeros((n, n), dtype=bool)  # contains[i, j]: loop i inside loop j
    for i in range(n):
        for j in range(n):
            if i != j and areas[i] < areas[j] and _contains_loop(loops[j].points, loops[i].points):
                contains[i, j] = True
    depth = contains.sum(axis=1)
    parent = np.full(n, -1)
    for i in range(n):
        js = np.flatnonzero(contains[i])
        if len(js):
            parent[i] = js[np.argmin(areas[js])]
    sketch_points = np.concatenate([lp.points for lp in loops], axis=0)
    src = source or plane.kind
    holes: dict[int, list[Loop2D]] = {i: [] for i in range(n) if depth[i] % 2 == 0}
    for i in range(n):
        if depth[i] % 2 == 1 and parent[i] in holes:
            holes[int(parent[i])].append(loops[i])
    return [
        Profile(plane, loops[i], tuple(holes[i]), src, sketch_points)
        for i in sorted(holes)
    ]


# ------------------------------------------------------------- primitive fit


def fit_line(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Total least squares line: (point, unit direction, perpendicular residuals)."""
    c = pts.mean(axis=0)
    d = pts - c
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    direction = vt[0]
    res = d @ np.array([-direction[1], direction[0]])
    return c, direction, res


def fit_circle(pts: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Kasa algebraic circle fit: (center, radius, radial residuals)."""
    x, y = pts[:, 0], pts[:, 1]
    a = np.column_stack([x, y, np.ones_like(x)])
    b = -(x * x + y * y)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy = -sol[0] / 2, -sol[1] / 2
    r2 = cx * cx + cy * cy - sol[2]
    r = math.sqrt(r2) if r2 > 0 else 0.0
    res = np.hypot(x - cx, y - cy) - r
    return np.array([cx, cy]), r, res


def _diameter(pts: np.ndarray) -> float:
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return float(np.linalg.norm(hi - lo))


def _turning(pts: np.ndarray, k: int = 2) -> np.ndarray:
    a = np.roll(pts, k, axis=0)
    b = np.roll(pts, -k, axis=0)
    d1 = pts - a
    d2 = b - pts
    ang = np.arctan2(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0], np.einsum("ij,ij->i", d1, d2))
    return np.abs(ang)


def _window(pts: np.ndarray, i: int, j: int) -> np.ndarray:
    n = len(pts)
    return pts[np.arange(i, j + 1) % n]


def _window_stats(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """RMS line and arc residuals of every window ``pts[i..j]`` (i < j) of a point run.

    Moments come from prefix sums, so all O(n^2) windows cost O(1) each.  Arc
    residuals use the Kasa algebraic error divided by 2r, its first-order
    geometric equivalent; windows with no usable circle get +inf.
    """
    q = pts - pts.mean(axis=0)
    x, y = q[:, 0], q[:, 1]
    z = x * x + y * y
    feats = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y, x * z, y * z, z, z * z])
    cs = np.vstack([np.zeros(feats.shape[1]), np.cumsum(feats, axis=0)])
    n = len(pts)
    i, j = np.triu_indices(n, k=1)
    s = cs[j + 1] - cs[i]
    m, sx, sy, sxx, sxy, syy, sxz, syz, sz, szz = s.T
    mx, my = sx / m, sy / m
    cxx, cxy, cyy = sxx / m - mx * mx, sxy / m - mx * my, syy / m - my * my
    lam = (cxx + cyy) / 2 - np.sqrt(((cxx - cyy) / 2) ** 2 + cxy**2)
    line = np.full((n, n), np.inf)
    line[i, j] = np.sqrt(np.maximum(lam, 0.0))
    ata = np.stack([np.stack([sxx, sxy, sx], -1), np.stack([sxy, syy, sy], -1), np.stack([sx, sy, m], -1)], -2)
    atb = -np.stack([sxz, syz, sz], -1)
    # a tiny ridge keeps exactly colinear windows solvable; their radius blows up
    ridge = 1e-12 * (sxx + syy + m)[:, None, None] * np.eye(3)
    sol = np.linalg.solve(ata + ridge, atb[..., None])[..., 0]
    sse = np.einsum("ni,nij,nj->n", sol, ata, sol) - 2 * np.einsum("ni,ni->n", sol, atb) + szz
    r2 = (sol[:, 0] ** 2 + sol[:, 1] ** 2) / 4 - sol[:, 2]
    good = (m >= 4) & (r2 > 0)
    r = np.sqrt(np.where(good, r2, 1.0))
    arc = np.full((n, n), np.inf)
    arc[i, j] = np.where(good, np.sqrt(np.maximum(sse, 0.0) / m) / (2 * r), np.inf)
    radius = np.zeros((n, n))
    radius[i, j] = np.where(good, r, 0.0)
    return line, np.where(radius > 0, arc, np.inf), radius


LINE_COST = 4.0
ARC_COST = 6.0
NOISE_FLOOR = 0.1


def _segment(pts: np.ndarray, thr: float, scale: float) -> tuple[list[tuple[str, int, int]], float]:
    """Cheapest split of the closed run ``pts[0..n]`` (point n is point 0) into lines and arcs.

    A segment costs a fixed price per primitive plus its residual sum of
    squares over the noise level, which is read off short local line fits
    and floored at ``NOISE_FLOOR * thr``.  Windows whose max residual turns
    out to exceed ``thr`` are banned and the split redone.
    """
    n = len(pts)
    ext = np.vstack([pts, pts[:1]])
    line, arc, radius = _window_stats(ext)
    k = np.arange(n - 3)
    sigma = max(1.5 * float(np.median(line[k, k + 4])) if n > 4 else 0.0, NOISE_FLOOR * thr)
    m = np.arange(n + 1)[None, :] - np.arange(n + 1)[:, None] + 1.0
    line_ok = line <= 0.5 * thr
    arc_ok = (arc <= 0.5 * thr) & (radius <= 5.0 * scale)
    two = m == 2
    line_ok |= two
    while True:
        with np.errstate(invalid="ignore"):
            lc = np.where(line_ok, LINE_COST + m * np.where(two, 0.0, line) ** 2 / sigma**2, np.inf)
            ac = np.where(arc_ok, ARC_COST + m * arc**2 / sigma**2, np.inf)
        best = np.full(n + 1, np.inf)
        best[0] = 0.0
        back = np.zeros((n + 1, 2), dtype=int)
        for j in range(1, n + 1):
            cl = best[:j] + lc[:j, j]
            ca = best[:j] + ac[:j, j]
            il, ia = int(np.argmin(cl)), int(np.argmin(ca))
            if ca[ia] < cl[il]:
                best[j], back[j] = ca[ia], (ia, 1)
            else:
                best[j], back[j] = cl[il], (il, 0)
        segs = []
        j = n
        while j > 0:
            i, k = back[j]
            segs.append(("arc" if k else "line", int(i), j))
            j = int(i)
        segs.reverse()
        bad = False
        for kind, a, b in segs:
            w = ext[a : b + 1]
            res = fit_circle(w)[2] if kind == "arc" else fit_line(w)[2]
            if b - a > 1 and float(np.abs(res).max()) > thr:
                (arc_ok if kind == "arc" else line_ok)[a, b] = False
                bad = True
        if not bad:
            return segs, float(best[n])


def _to_circle(c: np.ndarray, r: float, p: np.ndarray) -> np.ndarray:
    d = p - c
    nd = float(np.linalg.norm(d))
    return p if nd == 0 else c + d * (r / nd)


TANGENT_DEG = 10.0


def _line_circle_junction(p: np.ndarray, d: np.ndarray, c: np.ndarray, r: float, near: np.ndarray) -> np.ndarray:
    """Crossing of a line and a circle closest to ``near``.

    Near tangency the crossing slides fast as the line moves, so there the
    foot of the center on the line stands in for the tangent point.
    """
    foot = p + float((c - p) @ d) * d
    h2 = r * r - float((foot - c) @ (foot - c))
    if h2 <= (r * math.sin(math.radians(TANGENT_DEG))) ** 2:
        return foot
    h = math.sqrt(h2)
    a, b = foot - h * d, foot + h * d
    return a if np.linalg.norm(a - near) <= np.linalg.norm(b - near) else b


def _intersect_lines(p0, d0, p1, d1) -> np.ndarray | None:
    den = d0[0] * d1[1] - d0[1] * d1[0]
    if abs(den) < 1e-12:
        return None
    t = ((p1[0] - p0[0]) * d1[1] - (p1[1] - p0[1]) * d1[0]) / den
    return p0 + t * d0


def _snap_direction(d: np.ndarray, deg: float = 1.0) -> np.ndarray:
    """Snap a unit direction onto the plane axes when it is within ``deg`` of one."""
    s = math.sin(math.radians(deg))
    if abs(d[1]) < s:
        return np.array([math.copysign(1.0, d[0]), 0.0])
    if abs(d[0]) < s:
        return np.array([0.0, math.copysign(1.0, d[1])])
    return d


STUB_MAX = 3
STUB_MIN_TURN_DEG = 10.0


def _segment_distance(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip((q - a) @ ab / float(ab @ ab), 0.0, 1.0)
    return np.linalg.norm(q - (a + t[:, None] * ab), axis=1)


def _drop_corner_stubs(pts: np.ndarray, segs: list[tuple[str, int, int]], thr: float, slack: float) -> list[tuple[str, int, int]]:
    """Fold short lines that only bridge a sharp corner between two lines into the next line.

    Uniform resampling rarely lands on a corner vertex, so the two samples
    straddling it fit a tiny diagonal of their own.  The stub goes only if
    its samples stay within ``thr`` of the sharp corner's two legs.
    """
    n = len(pts)
    s = math.sin(math.radians(STUB_MIN_TURN_DEG))
    changed = True
    while changed and len(segs) > 3:
        changed = False
        m = len(segs)
        for k in range(m):
            kind, a, b = segs[k]
            prev, nxt = segs[k - 1], segs[(k + 1) % m]
            if kind != "line" or b - a > STUB_MAX or prev[0] != "line" or nxt[0] != "line":
                continue
            wp, wn = _window(pts, prev[1], prev[2]), _window(pts, nxt[1], nxt[2])
            p0, d0, _ = fit_line(wp)
            p1, d1, _ = fit_line(wn)
            if abs(d0[0] * d1[1] - d0[1] * d1[0]) < s:
                continue
            x = _intersect_lines(p0, d0, p1, d1)
            if x is None or float(np.linalg.norm(_window(pts, a, b) - x, axis=1).max()) > slack:
                continue
            # the samples just past the stub must fit the sharp corner too
            w = _window(pts, a - 2, b + 2)
            # legs run from the corner back along each neighbour's flow
            d0 = d0 if d0 @ (wp[-1] - wp[0]) > 0 else -d0
            d1 = d1 if d1 @ (wn[-1] - wn[0]) > 0 else -d1
            dev = np.minimum(_segment_distance(w, x - 2 * slack * d0, x), _segment_distance(w, x, x + 2 * slack * d1))
            # and the corner must stay near the sampled outline
            gap = min(float(_segment_distance(x[None], w[i], w[i + 1])[0]) for i in range(len(w) - 1))
            if float(dev.max()) > thr or gap > thr:
                continue
            if k == m - 1:
                segs = [("line", a - n, nxt[2])] + segs[1:-1]
            else:
                segs = segs[:k] + [("line", a, nxt[2])] + segs[k + 2 :]
            changed = True
            break
    return segs


LineSnap = Callable[[np.ndarray, np.ndarray], np.ndarray]


def fit_primitives(loop: Loop2D | np.ndarray, tol: float = 0.01, snap: LineSnap | None = None) -> PrimitiveChain:
    """Segment a closed loop into lines, arcs and circles.

    A whole-loop circle is tried first; otherwise the loop is split by
    ``_segment`` with every primitive's residual within ``tol`` times the
    loop diameter.  Adjacent colinear lines are merged and resampling stubs
    across sharp corners dropped.  ``snap(p, d)`` may move a fitted line's
    anchor point before the corners are intersected.
    """
    pts = loop.points if isinstance(loop, Loop2D) else np.asarray(loop, dtype=float)
    n = len(pts)
    scale = _diameter(pts)
    thr = tol * scale
    if n >= 8:
        c, r, res = fit_circle(pts)
        ang = np.unwrap(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
        if r > 0 and np.abs(res).max() <= thr and abs(ang[-1] - ang[0]) > 1.5 * np.pi:
            return PrimitiveChain((Circle(c, r),))

    start = int(np.argmax(_turning(pts)))
    pts = np.roll(pts, -start, axis=0)
    segs, cost = _segment(pts, thr, scale)
    if len(segs) > 1:
        # the forced break at the start may cut a primitive; restart at a found break
        shift = segs[0][2]
        segs2, cost2 = _segment(np.roll(pts, -shift, axis=0), thr, scale)
        if cost2 < cost:
            pts = np.roll(pts, -shift, axis=0)
            segs = segs2

    # merge adjacent colinear lines
    merged = True
    while merged and len(segs) > 1:
        merged = False
        out: list[tuple[str, int, int]] = []
        for s in segs:
            if out and out[-1][0] == "line" and s[0] == "line":
                a = out[-1]
                _, d0, _ = fit_line(_window(pts, a[1], a[2]))
                _, d1, _ = fit_line(_window(pts, s[1], s[2]))
                if abs(d0[0] * d1[1] - d0[1] * d1[0]) < math.sin(math.radians(1.0)):
                    out[-1] = ("line", a[1], s[2])
                    merged = True
                    continue
            out.append(s)
        if len(out) > 1 and out[0][0] == "line" and out[-1][0] == "line":
            a, b = out[-1], out[0]
            _, d0, _ = fit_line(_window(pts, a[1], a[2]))
            _, d1, _ = fit_line(_window(pts, b[1], b[2]))
            if abs(d0[0] * d1[1] - d0[1] * d1[0]) < math.sin(math.radians(1.0)):
                out[0] = ("line", a[1] - n, b[2])
                out.pop()
                merged = True
        segs = out

    spacing = float(np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1).mean())
    segs = _drop_corner_stubs(pts, segs, thr, max(thr, 3.0 * spacing))

    fits = []
    for kind, a, b in segs:
        w = _window(pts, a, b)
        if kind == "line":
            # corner rounding in the source leaks into the window ends
            cut = max(2, len(w) // 5)
            core = w[cut:-cut] if len(w) >= 9 else w
            p, d, _ = fit_line(core)
            d = _snap_direction(d)
            moved = 0.0
            if snap is not None:
                q = snap(p, d)
                moved = float(np.linalg.norm(q - p))
                p = q
            fits.append(("line", p, d, w, moved))
        elif kind == "arc":
            # a tangent neighbour's samples can sit at either end of the window
            c, r, _ = fit_circle(w[2:-2] if len(w) >= 12 else w)
            fits.append(("arc", c, r, w, 0.0))
        else:
            fits.append(("poly", None, None, w, 0.0))

    m = len(fits)
    junctions = []
    for k in range(m):
        prev, cur = fits[k - 1], fits[k]
        shared = cur[3][0]
        jp = shared
        if prev[0] == "line" and cur[0] == "line" and m > 1:
            x = _intersect_lines(prev[1], prev[2], cur[1], cur[2])
            # rounded source corners sit a few samples away from the sharp one
            slack = max(thr, 3.0 * spacing) + max(prev[4], cur[4])
            if x is not None and float(np.linalg.norm(x - shared)) <= slack:
                jp = x
        elif {prev[0], cur[0]} == {"line", "arc"}:
            ln, ac = (prev, cur) if prev[0] == "line" else (cur, prev)
            x = _line_circle_junction(ln[1], ln[2], ac[1], ac[2], shared)
            # the break index drifts by a sample between fits; the geometry does not
            jp = x if float(np.linalg.norm(x - shared)) <= max(thr, 3.0 * spacing) else _to_circle(ac[1], ac[2], shared)
        else:
            # put the junction on the arc's circle so the chain closes exactly
            on = [_to_circle(f[1], f[2], shared) for f in (prev, cur) if f[0] == "arc" and m > 1]
            if on:
                jp = np.mean(on, axis=0)
        junctions.append(np.asarray(jp, dtype=float))

    elements: list[Primitive] = []
    for k, f in enumerate(fits):
        p0 = junctions[k]
        p1 = junctions[(k + 1) % m]
        if f[0] == "line":
            elements.append(LineSegment(p0, p1))
        elif f[0] == "arc":
            c, r, w = f[1], f[2], f[3]
            mid = w[len(w) // 2]
            ccw = (mid[0] - p0[0]) * (p1[1] - mid[1]) - (mid[1] - p0[1]) * (p1[0] - mid[0]) > 0
            a0 = math.atan2(p0[1] - c[1], p0[0] - c[0])
            a1 = math.atan2(p1[1] - c[1], p1[0] - c[0])
            elements.append(Arc(c, float(r), a0, a1, bool(ccw)))
        else:
            pl = f[3].copy()
            pl[0], pl[-1] = p0, p1
            elements.append(Polyline(pl))
    return PrimitiveChain(tuple(elements))


def chain_polygon(chain: PrimitiveChain) -> np.ndarray:
    """Polygon of a chain, with arc endpoints pinned to their junctions."""
    if len(chain.elements) == 1 and isinstance(chain.elements[0], Circle):
        return chain.elements[0].polygonize()
    parts = []
    for e in chain.elements:
        p = e.polygonize()
        if isinstance(e, Arc):
            p = p.copy()
            p[0] = e.start
        parts.append(p)
    pts = np.concatenate(parts, axis=0)
    gap = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    return pts[gap > 1e-12]


def face_snap(plane: Plane, target: "Target", radius: float) -> LineSnap:
    """Line snapper moving profile edges onto parallel planar target faces."""

    def snap(p: np.ndarray, d: np.ndarray) -> np.ndarray:
        m = np.array([-d[1], d[0]])
        n3 = m[0] * plane.u_axis + m[1] * plane.v_axis
        offs = target.face_offsets(n3)
        if len(offs) == 0:
            return p
        cur = float(plane.to_world(p[None, :])[0] @ n3)
        j = int(np.argmin(np.abs(offs - cur)))
        if abs(offs[j] - cur) > radius:
            return p
        return p + (offs[j] - cur) * m

    return snap


def regularize(profile: Profile, tol: float, snap: LineSnap | None = None) -> Profile:
    """Replace resampled loops by polygons of their fitted primitive chains."""
    loops = [profile.outer] + list(profile.holes)
    chains = []
    new = []
    for lp in loops:
        ch = fit_primitives(lp, tol, snap)
        pts = chain_polygon(ch)
        if len(pts) < 3 or not poly.is_simple(pts) or abs(poly.signed_area(pts)) <= 0.5 * abs(lp.signed_area):
            pts = lp.points
        chains.append(ch)
        new.append(Loop2D(pts))
    return Profile(profile.plane, new[0], tuple(new[1:]), profile.source, profile.sketch_points, tuple(chains))


def is_bbox_rectangle(lp: Loop2D, plane: Plane, bounds: np.ndarray, tol: float) -> bool:
    """Outer loop that is an axis rectangle matching the target's projected box."""
    ch = fit_primitives(lp, 0.01)
    if len(ch.elements) != 4 or not all(isinstance(e, LineSegment) for e in ch.elements):
        return False
    for k in range(4):
        d0 = ch.elements[k].p1 - ch.elements[k].p0
        d1 = ch.elements[(k + 1) % 4].p1 - ch.elements[(k + 1) % 4].p0
        c = abs(np.dot(d0, d1)) / (np.linalg.norm(d0) * np.linalg.norm(d1))
        if c > math.sin(math.radians(2.0)):
            return False
    corners = np.array([[x, y, z] for x in bounds[:, 0] for y in bounds[:, 1] for z in bounds[:, 2]])
    uv = plane.to_local(corners)[:, :2]
    box_lo, box_hi = uv.min(axis=0), uv.max(axis=0)
    lo, hi = lp.points.min(axis=0), lp.points.max(axis=0)
    return bool(np.all(np.abs(lo - box_lo) <= tol) and np.all(np.abs(hi - box_hi) <= tol))


def extract_sketch_candidates(target: "Target", cfg: FitConfig | None = None) -> list[Profile]:
    """Slice the target on every proposed plane and return the grouped profiles."""
    cfg = cfg or FitConfig()
    bounds = target.bounds
    extent = float((bounds[1] - bounds[0]).max())
    seen: set = set()
    out: list[Profile] = []
    for plane in target.propose_planes(cfg):
        sections = target.slice(plane)
        if not sections:
            continue
        base = plane.base()
        loops = extract_loops(sections, base, cfg)
        if not loops:
            continue
        for prof in group_profiles(loops, base, plane.kind):
            if plane.kind == "axis" and not prof.holes and is_bbox_rectangle(prof.outer, base, bounds, 0.02 * extent):
                continue
            prof = regularize(prof, cfg.fit_tolerance, face_snap(base, target, 2 * cfg.translation_step))
            k = prof.key() + (len(prof.holes),)
            if k in seen:
                continue
            seen.add(k)
            out.append(prof)
    out.sort(key=lambda p: p.key())
    return out
