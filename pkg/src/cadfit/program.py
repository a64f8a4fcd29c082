"""Program IR: extrude/revolve operations folded with union/cut into an implicit solid."""

from __future__ import annotations

import json
import math
import weakref
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import ndimage

from . import polygon as poly
from .geometry import EmptyMeshError, Plane, TriMesh
from .grid import GridSpec
from .sketch import (
    Arc,
    Circle,
    LineSegment,
    Loop2D,
    Polyline,
    PrimitiveChain,
    Profile,
    fit_primitives,
)

KINDS = ("extrude", "revolve")
ROLES = ("union", "cut")
FEATURE_KINDS = ("fillet", "chamfer")
FILLET_POINTS = 16
HALF_PLANE_TOL = 1e-6
MIN_TURN_DEG = 5.0


class ProgramError(ValueError):
    """Invalid operation parameters or a program schema violation."""


class CornerFeatureError(ProgramError):
    pass


# ------------------------------------------------------------ corner features


@dataclass(frozen=True)
class CornerFeature:
    corner: int
    kind: str
    param: float

    def __post_init__(self) -> None:
        if self.kind not in FEATURE_KINDS:
            raise CornerFeatureError(f"corner feature kind must be one of {FEATURE_KINDS}")
        if not (self.param > 0 and math.isfinite(self.param)):
            raise CornerFeatureError("corner feature param must be > 0")


def _corner_geometry(pts: np.ndarray, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
    n = len(pts)
    p = pts[i]
    a = pts[(i - 1) % n]
    b = pts[(i + 1) % n]
    la = float(np.linalg.norm(a - p))
    lb = float(np.linalg.norm(b - p))
    if la <= 0 or lb <= 0:
        raise CornerFeatureError(f"corner {i} has a zero-length edge")
    e1 = (a - p) / la
    e2 = (b - p) / lb
    phi = math.acos(max(-1.0, min(1.0, float(np.dot(e1, e2)))))
    return p, e1, e2, phi, min(la, lb)


def corner_turn_deg(pts: np.ndarray, i: int) -> float:
    """Turning angle of the polygon boundary at vertex ``i`` in degrees."""
    _, _, _, phi, _ = _corner_geometry(pts, i)
    return math.degrees(math.pi - phi)


def _feature_points(pts: np.ndarray, i: int, kind: str, param: float) -> np.ndarray:
    """Replacement vertices for corner ``i`` (validated against the given polygon)."""
    n = len(pts)
    if not 0 <= i < n:
        raise CornerFeatureError(f"corner index {i} out of range for {n} vertices")
    p, e1, e2, phi, shorter = _corner_geometry(pts, i)
    if math.degrees(math.pi - phi) <= MIN_TURN_DEG:
        raise CornerFeatureError(f"corner {i} is nearly straight")
    half = shorter / 2.0
    if param > half + 1e-12:
        raise CornerFeatureError(f"{kind} param {param:g} exceeds half the shorter adjacent edge ({half:g})")
    if kind == "chamfer":
        return np.array([p + param * e1, p + param * e2])
    t = param / math.tan(phi / 2.0)
    if t > half + 1e-12:
        raise CornerFeatureError(f"fillet radius {param:g} needs tangent length {t:g} > half edge {half:g}")
    bis = e1 + e2
    bis /= np.linalg.norm(bis)
    c = p + (param / math.sin(phi / 2.0)) * bis
    t1 = p + t * e1
    t2 = p + t * e2
    a0 = math.atan2(t1[1] - c[1], t1[0] - c[0])
    a1 = math.atan2(t2[1] - c[1], t2[0] - c[0])
    d = (a1 - a0 + math.pi) % (2 * math.pi) - math.pi
    ang = a0 + np.linspace(0.0, 1.0, FILLET_POINTS) * d
    arc = c + param * np.column_stack([np.cos(ang), np.sin(ang)])
    arc[0], arc[-1] = t1, t2
    return arc


def apply_features_to_loop(pts: np.ndarray, features: Sequence[CornerFeature]) -> np.ndarray:
    """Apply corner features (indices refer to ``pts``) and return the new polygon."""
    pts = np.asarray(pts, dtype=float)
    if not features:
        return pts
    corners = [f.corner for f in features]
    if len(set(corners)) != len(corners):
        raise CornerFeatureError("duplicate corner index")
    repl = {f.corner: _feature_points(pts, f.corner, f.kind, f.param) for f in features}
    parts = [repl[i] if i in repl else pts[i : i + 1] for i in range(len(pts))]
    return np.concatenate(parts, axis=0)


def apply_corner_feature(profile: Profile, corner_index: int, kind: str, param: float) -> Profile:
    """Profile with one outer-loop corner replaced by a fillet arc or a chamfer cut."""
    feat = CornerFeature(int(corner_index), kind, float(param))
    pts = apply_features_to_loop(profile.outer.points, [feat])
    if not poly.is_simple(pts):
        raise CornerFeatureError("feature makes the profile self-intersecting")
    return Profile(profile.plane, Loop2D(pts), profile.holes, profile.source, profile.sketch_points)


# ----------------------------------------------------------------- operation


@dataclass(frozen=True, eq=False)
class Operation:
    """One primitive with a boolean role.

    Extrude sweeps the profile from the plane along +normal by ``height``.
    Revolve spins it a full turn about the in-plane line through
    ``axis_point`` with direction ``axis_dir``; the profile sits on the left
    of that direction.
    """

    kind: str
    profile: Profile
    role: str = "union"
    height: float | None = None
    axis_point: np.ndarray | None = None
    axis_dir: np.ndarray | None = None
    corner_features: tuple = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ProgramError(f"kind must be one of {KINDS}")
        if self.role not in ROLES:
            raise ProgramError(f"role must be one of {ROLES}")
        if self.kind == "extrude":
            if self.height is None or not (self.height > 0 and math.isfinite(self.height)):
                raise ProgramError("Extrude height must be > 0")
            object.__setattr__(self, "height", float(self.height))
        else:
            if self.axis_point is None or self.axis_dir is None:
                raise ProgramError("Revolve needs axis_point and axis_dir")
            ap = np.asarray(self.axis_point, dtype=float).reshape(2)
            ad = np.asarray(self.axis_dir, dtype=float).reshape(2)
            if abs(float(np.hypot(*ad)) - 1.0) > 1e-6:
                raise ProgramError("Revolve axis_dir must be a unit vector")
            object.__setattr__(self, "axis_point", ap)
            object.__setattr__(self, "axis_dir", ad)
            side = _axis_side(self.profile.loops, ap, ad)
            if side.min() < -HALF_PLANE_TOL:
                raise ProgramError("Revolve profile must lie on one side of the axis (left of axis_dir)")
        object.__setattr__(self, "corner_features", tuple(self.corner_features))
        self.loops  # validates corner features

    @property
    def loops(self) -> list[np.ndarray]:
        """Profile loops with corner features applied to the outer loop."""
        if "loops" not in self._cache:
            outer = apply_features_to_loop(self.profile.outer.points, self.corner_features)
            self._cache["loops"] = [outer] + [h.points for h in self.profile.holes]
        return self._cache["loops"]

    @property
    def plane(self) -> Plane:
        return self.profile.plane

    def with_role(self, role: str) -> "Operation":
        return Operation(self.kind, self.profile, role, self.height, self.axis_point, self.axis_dir, self.corner_features)

    def with_features(self, features: Iterable[CornerFeature]) -> "Operation":
        return Operation(self.kind, self.profile, self.role, self.height, self.axis_point, self.axis_dir, tuple(features))

    # revolve frame: world axis origin, direction, and in-plane radial direction
    def _revolve_frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pl = self.plane
        a3 = pl.to_world(self.axis_point)
        d3 = self.axis_dir[0] * pl.u_axis + self.axis_dir[1] * pl.v_axis
        perp = np.array([-self.axis_dir[1], self.axis_dir[0]])
        r3 = perp[0] * pl.u_axis + perp[1] * pl.v_axis
        return a3, d3, r3

    def _to_profile_coords(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        """Map 3D points to profile-plane 2D coordinates (and extrude height w)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        if self.kind == "extrude":
            loc = self.plane.to_local(pts)
            return loc[:, :2], loc[:, 2]
        a3, d3, _ = self._revolve_frame()
        rel = pts - a3
        along = rel @ d3
        radial = np.linalg.norm(rel - along[:, None] * d3, axis=1)
        perp = np.array([-self.axis_dir[1], self.axis_dir[0]])
        q = self.axis_point + along[:, None] * self.axis_dir + radial[:, None] * perp
        return q, None

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        q, w = self._to_profile_coords(pts)
        if w is None:
            return poly.points_in_polygon(q, self.loops)
        ok = (w >= 0.0) & (w <= self.height)
        out = np.zeros(len(pts), dtype=bool)
        idx = np.flatnonzero(ok)
        if len(idx):
            out[idx] = poly.points_in_polygon(q[idx], self.loops)
        return out

    @property
    def bounds(self) -> np.ndarray:
        if "bounds" in self._cache:
            return self._cache["bounds"]
        allp = np.concatenate(self.loops, axis=0)
        if self.kind == "extrude":
            lo, hi = allp.min(axis=0), allp.max(axis=0)
            corners = np.array([[x, y] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])])
            w = np.concatenate([self.plane.to_world(corners, 0.0), self.plane.to_world(corners, self.height)])
            b = np.array([w.min(axis=0), w.max(axis=0)])
        else:
            a3, d3, _ = self._revolve_frame()
            rel = allp - self.axis_point
            along = rel @ self.axis_dir
            rad = float(np.abs(rel[:, 0] * self.axis_dir[1] - rel[:, 1] * self.axis_dir[0]).max())
            ends = np.array([a3 + along.min() * d3, a3 + along.max() * d3])
            ext = rad * np.sqrt(np.clip(1.0 - d3**2, 0.0, 1.0))
            b = np.array([ends.min(axis=0) - ext, ends.max(axis=0) + ext])
        eps = 1e-9 * max(1.0, float(np.abs(b).max()))
        b = np.array([b[0] - eps, b[1] + eps])
        self._cache["bounds"] = b
        return b

    def _axis_aligned(self) -> tuple[int, int, int] | None:
        """(normal axis, u axis, v axis) when an extrude's frame is exactly world-aligned."""
        if self.kind != "extrude":
            return None
        pl = self.plane
        v = pl.v_axis
        ax = []
        for vec in (pl.normal, pl.u_axis, v):
            nz = np.flatnonzero(vec != 0.0)
            if len(nz) != 1 or abs(vec[nz[0]]) != 1.0:
                return None
            ax.append(int(nz[0]))
        return tuple(ax)

    def mask(self, spec: GridSpec) -> tuple[tuple[slice, slice, slice], np.ndarray]:
        """Occupancy of cell centers on ``spec`` restricted to the op's bounding block."""
        key = ("mask", spec)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        b = self.bounds
        sl = spec.index_range(b[0], b[1])
        shape = tuple(s.stop - s.start for s in sl)
        if 0 in shape:
            res = (sl, np.zeros(shape, dtype=bool))
        else:
            aligned = self._axis_aligned()
            if aligned is not None:
                m = self._aligned_mask(spec, sl, aligned)
            else:
                m = self.contains(spec.sub_centers(sl)).reshape(shape)
            m.setflags(write=False)
            res = (sl, m)
        self._cache[key] = res
        return res

    def _aligned_mask(self, spec: GridSpec, sl, aligned) -> np.ndarray:
        kn, ku, kv = aligned
        pl = self.plane
        centers = [spec.axis_centers(k)[sl[k]] for k in range(3)]
        # heights along the normal axis
        d = centers[kn] - pl.origin[kn]
        w = d * pl.normal[kn]
        wm = (w >= 0.0) & (w <= self.height)
        # in-plane 2D membership on the (u axis, v axis) sub-grid, at w = 0
        gu, gv = np.meshgrid(centers[ku], centers[kv], indexing="ij")
        pts = np.empty(gu.shape + (3,))
        pts[..., ku] = gu
        pts[..., kv] = gv
        pts[..., kn] = pl.origin[kn]
        loc = pl.to_local(pts.reshape(-1, 3))
        m2 = poly.points_in_polygon(loc[:, :2], self.loops).reshape(gu.shape)
        full = m2[:, :, None] & wm[None, None, :]
        # axes of ``full`` are (ku, kv, kn); move them to world order
        order = np.argsort([ku, kv, kn])
        return np.ascontiguousarray(np.transpose(full, order))

    def signed_distance(self, pts: np.ndarray, h: float) -> np.ndarray:
        """Approximate signed distance (negative inside) from a rastered 2D field."""
        q, w = self._to_profile_coords(pts)
        d2 = self._raster(h)(q)
        if w is None:
            return d2
        dz = np.maximum(-w, w - self.height)
        out = np.maximum(d2, dz)
        both = (d2 > 0) & (dz > 0)
        out[both] = np.hypot(d2[both], dz[both])
        return out

    def _raster(self, h: float):
        key = ("raster", h)
        if key in self._cache:
            return self._cache[key]
        loops = self.loops
        allp = np.concatenate(loops, axis=0)
        step = h / 2.0
        lo = allp.min(axis=0) - 4 * h
        hi = allp.max(axis=0) + 4 * h
        n = np.ceil((hi - lo) / step).astype(int) + 1
        xs = lo[0] + np.arange(n[0]) * step
        ys = lo[1] + np.arange(n[1]) * step
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        field_ = poly.signed_distance(np.column_stack([gx.ravel(), gy.ravel()]), loops).reshape(gx.shape)

        def lookup(q: np.ndarray) -> np.ndarray:
            fi = (q - lo) / step
            cl = np.clip(fi, 0, n - 1)
            val = ndimage.map_coordinates(field_, [cl[:, 0], cl[:, 1]], order=1, mode="nearest")
            return val + np.linalg.norm((fi - cl) * step, axis=1)

        self._cache[key] = lookup
        return lookup


def _axis_side(loops: Sequence[np.ndarray], ap: np.ndarray, ad: np.ndarray) -> np.ndarray:
    """Signed distance of loop vertices to the axis line, positive on its left."""
    allp = np.concatenate(loops, axis=0)
    rel = allp - ap
    return ad[0] * rel[:, 1] - ad[1] * rel[:, 0]


def extrude(profile: Profile, height: float, role: str = "union", features: Iterable[CornerFeature] = ()) -> Operation:
    return Operation("extrude", profile, role, height=height, corner_features=tuple(features))


def revolve(profile: Profile, axis_point, axis_dir, role: str = "union") -> Operation:
    return Operation("revolve", profile, role, axis_point=np.asarray(axis_point, float), axis_dir=np.asarray(axis_dir, float))


# ------------------------------------------------------------------- program


@dataclass(frozen=True, eq=False)
class Program:
    ops: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(self.ops))

    def __len__(self) -> int:
        return len(self.ops)

    def append(self, op: Operation) -> "Program":
        return Program(self.ops + (op,))

    def without(self, index: int) -> "Program":
        return Program(self.ops[:index] + self.ops[index + 1 :])

    def validate(self) -> None:
        if self.ops and self.ops[0].role != "union":
            raise ProgramError("ops[0].role: the first operation must be a union")

    @property
    def bounds(self) -> np.ndarray | None:
        ub = [op.bounds for op in self.ops if op.role == "union"]
        if not ub:
            return None
        return np.array([np.min([b[0] for b in ub], axis=0), np.max([b[1] for b in ub], axis=0)])

    def counts(self) -> dict[str, int]:
        out = {"extrude": 0, "revolve": 0, "union": 0, "cut": 0, "features": 0}
        for op in self.ops:
            out[op.kind] += 1
            out[op.role] += 1
            out["features"] += len(op.corner_features)
        return out


class Solid:
    """Implicit solid of a program with a cache of voxelizations per grid."""

    def __init__(self, program: Program):
        self.program = program
        self.bounds = program.bounds
        self._voxels: dict[GridSpec, np.ndarray] = {}

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return points_in_solid(self.program, pts)

    def voxels(self, spec: GridSpec) -> np.ndarray:
        hit = self._voxels.get(spec)
        if hit is None:
            hit = program_mask(self.program, spec)
            hit.setflags(write=False)
            self._voxels[spec] = hit
        return hit


def points_in_solid(solid: Solid | Program, pts: np.ndarray) -> np.ndarray:
    """Fold union/cut membership over the operations in order."""
    program = solid.program if isinstance(solid, Solid) else solid
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    inside = np.zeros(len(pts), dtype=bool)
    b = program.bounds
    if b is None or len(pts) == 0:
        return inside
    for op in program.ops:
        ob = op.bounds
        cand = np.all((pts >= ob[0]) & (pts <= ob[1]), axis=1)
        if op.role == "union":
            idx = np.flatnonzero(cand & ~inside)
            if len(idx):
                inside[idx] = op.contains(pts[idx])
        else:
            idx = np.flatnonzero(cand & inside)
            if len(idx):
                inside[idx] = ~op.contains(pts[idx])
    return inside


def point_in_solid(solid: Solid | Program, p) -> bool:
    return bool(points_in_solid(solid, np.asarray(p, dtype=float).reshape(1, 3))[0])


def program_mask(program: Program, spec: GridSpec) -> np.ndarray:
    """Boolean occupancy of cell centers; per-op blocks are cached on the ops."""
    occ = np.zeros(spec.dims, dtype=bool)
    for op in program.ops:
        sl, m = op.mask(spec)
        if m.size == 0:
            continue
        if op.role == "union":
            occ[sl] |= m
        else:
            occ[sl] &= ~m
    return occ


# -------------------------------------------------------------- tessellation


def _sdf_grid(program: Program, spec: GridSpec) -> np.ndarray:
    h = spec.spacing
    big = 1e3
    field_ = np.full(spec.dims, big)
    for op in program.ops:
        b = op.bounds
        pad = 3 * h
        sl = spec.index_range(b[0] - pad, b[1] + pad)
        shape = tuple(s.stop - s.start for s in sl)
        if 0 in shape:
            continue
        pts = spec.sub_centers(sl)
        d = op.signed_distance(pts, h).reshape(shape)
        if op.role == "union":
            field_[sl] = np.minimum(field_[sl], d)
        else:
            field_[sl] = np.maximum(field_[sl], -d)
    return field_


def tessellate_solid(solid: Solid | Program, resolution: int = 96) -> TriMesh:
    """Marching-cubes surface of the solid on a grid padded 2 cells past its bounds."""
    from skimage import measure

    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    program = solid.program if isinstance(solid, Solid) else solid
    b = program.bounds
    if b is None:
        raise EmptyMeshError("solid is empty")
    spec = GridSpec.from_bounds(b, resolution, pad_cells=2)
    field_ = _sdf_grid(program, spec)
    if not (field_ < 0).any():
        raise EmptyMeshError("solid is empty")
    h = spec.spacing
    verts, faces, _, _ = measure.marching_cubes(field_, level=0.0, spacing=(h, h, h))
    verts = verts + np.array(spec.origin) + h / 2.0
    mesh = TriMesh(verts, faces.astype(np.int64))
    if mesh.volume < 0:
        mesh = TriMesh(verts, faces[:, ::-1].astype(np.int64).copy())
    return mesh


# ------------------------------------------------------- candidate sampling

_POOLS: "weakref.WeakKeyDictionary[Profile, dict]" = weakref.WeakKeyDictionary()


def _loop_arclength_points(loops: Sequence[np.ndarray], s: np.ndarray) -> np.ndarray:
    """Points at normalized arc-length positions ``s`` in [0,1) over all loops."""
    segs_a = np.concatenate([lp for lp in loops])
    segs_b = np.concatenate([np.roll(lp, -1, axis=0) for lp in loops])
    lens = np.linalg.norm(segs_b - segs_a, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    t = s * cum[-1]
    k = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(lens) - 1)
    frac = np.where(lens[k] > 0, (t - cum[k]) / np.where(lens[k] > 0, lens[k], 1.0), 0.0)
    return segs_a[k] + frac[:, None] * (segs_b[k] - segs_a[k])


def _pool(profile: Profile, kind: str, n: int, seed: int, extra: tuple = ()) -> dict:
    per = _POOLS.setdefault(profile, {})
    key = (kind, n, seed) + extra
    if key in per:
        return per[key]
    rng = np.random.default_rng([seed, n, 0 if kind == "extrude" else 1])
    loops = profile.loops
    if kind == "extrude":
        pool = {
            "cap": poly.sample_in_region(loops, n, rng),
            "wall": _loop_arclength_points(loops, rng.random(n)),
            "t": rng.random(n),
            "sel": rng.random(n),
        }
    else:
        ap, ad = extra[0], extra[1]
        perp = np.array([-ad[1], ad[0]])
        got: list[np.ndarray] = []
        have = 0
        rmax = max(float(np.abs(_axis_side(loops, np.array(ap), np.array(ad))).max()), 1e-12)
        while have < n:
            cand = _loop_arclength_points(loops, rng.random(2 * (n - have) + 16))
            r = (cand - np.array(ap)) @ perp
            keep = rng.random(len(cand)) * rmax <= np.maximum(r, 0.0)
            got.append(cand[keep])
            have += int(keep.sum())
        pool = {"curve": np.concatenate(got)[:n], "theta": rng.random(n) * 2 * np.pi}
    per[key] = pool
    return pool


def sample_candidate_surface(profile: Profile, kind: str, params: dict, n: int = 2048, seed: int = 0) -> np.ndarray:
    """Surface points of the primitive ``kind`` applied to ``profile``.

    Samples come from a fixed pool per (profile, n, seed), so for extrusions
    only the placement depends on the height; this keeps sweeps smooth.
    ``params``: {"height": h} (h may be negative: extrusion towards -normal)
    or {"axis_point": (u, v), "axis_dir": (du, dv)}.
    """
    pl = profile.plane
    if kind == "extrude":
        h = float(params["height"])
        pool = _pool(profile, "extrude", n, seed)
        area = abs(profile.area)
        per = sum(poly.perimeter(lp) for lp in profile.loops)
        total = 2 * area + per * abs(h)
        p_cap = area / total if total > 0 else 0.5
        sel = pool["sel"]
        bottom = sel < p_cap
        top = (sel >= p_cap) & (sel < 2 * p_cap)
        wall = ~(bottom | top)
        uv = np.where(wall[:, None], pool["wall"], pool["cap"])
        w = np.where(bottom, 0.0, np.where(top, h, pool["t"] * h))
        return pl.to_world(uv, w)
    if kind == "revolve":
        ap = tuple(float(x) for x in params["axis_point"])
        ad = tuple(float(x) for x in params["axis_dir"])
        pool = _pool(profile, "revolve", n, seed, (ap, ad))
        apv, adv = np.array(ap), np.array(ad)
        perp = np.array([-adv[1], adv[0]])
        rel = pool["curve"] - apv
        along = rel @ adv
        radial = rel @ perp
        a3 = pl.to_world(apv)
        d3 = adv[0] * pl.u_axis + adv[1] * pl.v_axis
        r3 = perp[0] * pl.u_axis + perp[1] * pl.v_axis
        s3 = np.cross(d3, r3)
        th = pool["theta"]
        return (
            a3
            + along[:, None] * d3
            + radial[:, None] * (np.cos(th)[:, None] * r3 + np.sin(th)[:, None] * s3)
        )
    raise ProgramError(f"unknown primitive kind {kind!r}")


# ---------------------------------------------------------------- transforms


def transform_program(program: Program, scale: float, center: np.ndarray) -> Program:
    """Map a program through x -> x / scale + center (normalized -> original units)."""
    center = np.asarray(center, dtype=float)
    ops = []
    for op in program.ops:
        pl = op.plane
        plane = Plane(pl.origin / scale + center, pl.normal.copy(), pl.u_axis.copy(), pl.kind, pl.offset / scale)
        prof = op.profile
        outer = Loop2D(prof.outer.points / scale)
        holes = tuple(Loop2D(h.points / scale) for h in prof.holes)
        np_ = Profile(plane, outer, holes, prof.source)
        feats = tuple(CornerFeature(f.corner, f.kind, f.param / scale) for f in op.corner_features)
        if op.kind == "extrude":
            ops.append(Operation("extrude", np_, op.role, height=op.height / scale, corner_features=feats))
        else:
            ops.append(Operation("revolve", np_, op.role, axis_point=op.axis_point / scale, axis_dir=op.axis_dir.copy(), corner_features=feats))
    return Program(tuple(ops))


# ------------------------------------------------------------ serialization


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def _op_to_json(op: Operation) -> dict[str, Any]:
    pl = op.plane
    d: dict[str, Any] = {
        "kind": op.kind,
        "role": op.role,
        "plane": {"origin": _floats(pl.origin), "normal": _floats(pl.normal), "u_axis": _floats(pl.u_axis)},
        "profile": {
            "outer": [_floats(p) for p in op.profile.outer.points],
            "holes": [[_floats(p) for p in h.points] for h in op.profile.holes],
        },
    }
    if op.kind == "extrude":
        d["height"] = float(op.height)
    else:
        d["axis"] = {"point": _floats(op.axis_point), "dir": _floats(op.axis_dir)}
    d["corner_features"] = [{"corner": int(f.corner), "kind": f.kind, "param": float(f.param)} for f in op.corner_features]
    return d


def program_to_dict(program: Program) -> dict[str, Any]:
    return {"version": 1, "ops": [_op_to_json(op) for op in program.ops]}


def serialize_program(program: Program) -> str:
    """Canonical compact JSON; floats use the shortest round-trip repr."""
    return json.dumps(program_to_dict(program), separators=(",", ":"), allow_nan=False)


def _num(x: Any, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ProgramError(f"{path}: expected a finite number")
    return float(x)


def _vec(x: Any, n: int, path: str) -> np.ndarray:
    if not isinstance(x, list) or len(x) != n:
        raise ProgramError(f"{path}: expected a list of {n} numbers")
    return np.array([_num(v, f"{path}[{i}]") for i, v in enumerate(x)])


def _loop(x: Any, path: str) -> np.ndarray:
    if not isinstance(x, list) or len(x) < 3:
        raise ProgramError(f"{path}: expected a list of at least 3 [u,v] points")
    return np.array([_vec(p, 2, f"{path}[{i}]") for i, p in enumerate(x)])


def _obj(x: Any, path: str, keys: Sequence[str]) -> dict:
    if not isinstance(x, dict):
        raise ProgramError(f"{path}: expected an object")
    for k in keys:
        if k not in x:
            raise ProgramError(f"{path}.{k}: missing")
    return x


def _op_from_json(d: Any, path: str) -> Operation:
    d = _obj(d, path, ("kind", "role", "plane", "profile"))
    kind, role = d["kind"], d["role"]
    if kind not in KINDS:
        raise ProgramError(f"{path}.kind: must be one of {list(KINDS)}")
    if role not in ROLES:
        raise ProgramError(f"{path}.role: must be one of {list(ROLES)}")
    pd = _obj(d["plane"], f"{path}.plane", ("origin", "normal", "u_axis"))
    origin = _vec(pd["origin"], 3, f"{path}.plane.origin")
    normal = _vec(pd["normal"], 3, f"{path}.plane.normal")
    u_axis = _vec(pd["u_axis"], 3, f"{path}.plane.u_axis")
    if abs(np.linalg.norm(normal) - 1) > 1e-6:
        raise ProgramError(f"{path}.plane.normal: must be a unit vector")
    if abs(np.linalg.norm(u_axis) - 1) > 1e-6 or abs(float(normal @ u_axis)) > 1e-6:
        raise ProgramError(f"{path}.plane.u_axis: must be a unit vector orthogonal to the normal")
    plane = Plane(origin, normal, u_axis, "program", 0.0)
    prd = _obj(d["profile"], f"{path}.profile", ("outer",))
    outer = _loop(prd["outer"], f"{path}.profile.outer")
    holes_raw = prd.get("holes", [])
    if not isinstance(holes_raw, list):
        raise ProgramError(f"{path}.profile.holes: expected a list of loops")
    holes = [_loop(h, f"{path}.profile.holes[{i}]") for i, h in enumerate(holes_raw)]
    if poly.signed_area(outer) == 0:
        raise ProgramError(f"{path}.profile.outer: zero-area loop")
    flip = poly.signed_area(outer) < 0
    profile = Profile(plane, Loop2D(outer), tuple(Loop2D(h) for h in holes), "program")
    feats_raw = d.get("corner_features", [])
    if not isinstance(feats_raw, list):
        raise ProgramError(f"{path}.corner_features: expected a list")
    feats = []
    nv = len(outer)
    for i, f in enumerate(feats_raw):
        fp = f"{path}.corner_features[{i}]"
        f = _obj(f, fp, ("corner", "kind", "param"))
        c = f["corner"]
        if isinstance(c, bool) or not isinstance(c, int) or not 0 <= c < nv:
            raise ProgramError(f"{fp}.corner: must be a vertex index in [0, {nv})")
        if f["kind"] not in FEATURE_KINDS:
            raise ProgramError(f"{fp}.kind: must be one of {list(FEATURE_KINDS)}")
        p = _num(f["param"], f"{fp}.param")
        if not p > 0:
            raise ProgramError(f"{fp}.param: corner param must be > 0")
        try:
            feats.append(CornerFeature(nv - 1 - c if flip else c, f["kind"], p))
        except ProgramError as exc:
            raise ProgramError(f"{fp}: {exc}") from exc
    try:
        if kind == "extrude":
            if "height" not in d:
                raise ProgramError(f"{path}.height: missing")
            h = _num(d["height"], f"{path}.height")
            if not h > 0:
                raise ProgramError(f"{path}.height: Extrude height must be > 0, got {h!r}")
            return Operation("extrude", profile, role, height=h, corner_features=tuple(feats))
        ax = _obj(d.get("axis"), f"{path}.axis", ("point", "dir"))
        return Operation(
            "revolve",
            profile,
            role,
            axis_point=_vec(ax["point"], 2, f"{path}.axis.point"),
            axis_dir=_vec(ax["dir"], 2, f"{path}.axis.dir"),
            corner_features=tuple(feats),
        )
    except ProgramError as exc:
        msg = str(exc)
        if msg.startswith(path):
            raise
        raise ProgramError(f"{path}: {msg}") from exc


def program_from_dict(data: Any) -> Program:
    data = _obj(data, "$", ("version", "ops"))
    if data["version"] != 1:
        raise ProgramError("$.version: unsupported version (expected 1)")
    if not isinstance(data["ops"], list):
        raise ProgramError("$.ops: expected a list")
    ops = [_op_from_json(o, f"ops[{i}]") for i, o in enumerate(data["ops"])]
    prog = Program(tuple(ops))
    prog.validate()
    return prog


def deserialize_program(text: str) -> Program:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProgramError(f"$: invalid JSON: {exc}") from exc
    return program_from_dict(data)


def programs_equal(a: Program, b: Program) -> bool:
    """Structural equality: same kinds, roles, frames, loops and parameters, bit for bit."""
    return program_to_dict(a) == program_to_dict(b)


# ---------------------------------------------------------- script emission


def _fmt(x: float) -> str:
    return repr(round(float(x), 6))


def _pt(p) -> str:
    return f"({_fmt(p[0])}, {_fmt(p[1])})"


def _chain_calls(chain: PrimitiveChain) -> list[str]:
    els = chain.elements
    if len(els) == 1 and isinstance(els[0], Circle):
        c = els[0]
        return [f".moveTo{_pt(c.center)}", f".circle({_fmt(c.radius)})"]
    calls = [f".moveTo{_pt(els[0].start)}"]
    for k, e in enumerate(els):
        if isinstance(e, LineSegment):
            if k == len(els) - 1:
                break  # close() draws the last edge

            calls.append(f".lineTo{_pt(e.p1)}")
        elif isinstance(e, Arc):
            calls.append(f".threePointArc({_pt(e.mid)}, {_pt(e.end)})")
        elif isinstance(e, Polyline):
            calls.append(f".polyline([{', '.join(_pt(p) for p in e.points)}])")
    calls.append(".close()")
    return calls


def _loop_chain(pts: np.ndarray, scale: float) -> PrimitiveChain:
    dense = poly.resample_closed(pts, max(128, 2 * len(pts)))
    return fit_primitives(dense, 0.004)


def _profile_chains(op: Operation) -> list[PrimitiveChain]:
    prof = op.profile
    stored = prof.chains
    if stored is not None and not op.corner_features and len(stored) == 1 + len(prof.holes):
        return list(stored)
    scale = float(np.ptp(op.loops[0], axis=0).max())
    return [_loop_chain(lp, scale) for lp in op.loops]


def emit_script(program: Program) -> str:
    """CadQuery-flavoured text rendering of the program (not executed here)."""
    lines = ["import cadquery as cq", ""]
    for i, op in enumerate(program.ops):
        pl = op.plane
        lines.append(f"# step {i}")
        for f in op.corner_features:
            lines.append(f"#   corner {f.corner}: {f.kind} {_fmt(f.param)}")
        lines.append(
            f"plane_{i} = cq.Plane(origin=({', '.join(_fmt(x) for x in pl.origin)}), "
            f"xDir=({', '.join(_fmt(x) for x in pl.u_axis)}), normal=({', '.join(_fmt(x) for x in pl.normal)}))"
        )
        body = [f"sketch_{i} = (", f"    cq.Workplane(plane_{i})"]
        for ch in _profile_chains(op):
            body.extend("    " + c for c in _chain_calls(ch))
        body.append(")")
        lines.extend(body)
        if op.kind == "extrude":
            lines.append(f"solid_{i} = sketch_{i}.extrude({_fmt(op.height)})")
        else:
            a = op.axis_point
            e = op.axis_point + op.axis_dir
            lines.append(
                f"solid_{i} = sketch_{i}.revolve(360, ({_fmt(a[0])}, {_fmt(a[1])}, 0), ({_fmt(e[0])}, {_fmt(e[1])}, 0))"
            )
        if i == 0:
            lines.append(f"result = solid_{i}")
        elif op.role == "union":
            lines.append(f"result = result.union(solid_{i})")
        else:
            lines.append(f"result = result.cut(solid_{i})")
        lines.append("")
    if not program.ops:
        lines.append("result = cq.Workplane('XY')")
    return "\n".join(lines) + "\n"
