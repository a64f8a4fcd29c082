"""Triangle meshes: STL I/O, normalization, inside tests, sampling and slicing."""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .config import FitConfig

logger = logging.getLogger(__name__)

WELD_TOL = 1e-7


class MeshError(ValueError):
    """Base class for mesh input problems."""

    kind = "invalid_mesh"


class MeshReadError(MeshError):
    kind = "unreadable"


class MalformedSTLError(MeshError):
    kind = "malformed_stl"


class EmptyMeshError(MeshError):
    kind = "empty_mesh"


class DegenerateMeshError(MeshError):
    kind = "degenerate_mesh"


class NotWatertightError(MeshError):
    kind = "not_watertight"


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero-length vector")
    return v / n


def default_u_axis(normal: np.ndarray) -> np.ndarray:
    """In-plane axis built from the world axis least aligned with ``normal``.

    Axis-aligned normals get exactly axis-aligned u axes.
    """
    k = int(np.argmin(np.abs(normal)))
    a = np.zeros(3)
    a[k] = 1.0
    u = a - np.dot(a, normal) * normal
    return u / np.linalg.norm(u)


@dataclass(frozen=True, eq=False)
class Plane:
    """Oriented sketch plane with an in-plane frame.

    ``offset`` records how far this slicing plane sits from the sketch plane
    it was derived from (along ``normal``); ``kind`` is its provenance.
    """

    origin: np.ndarray
    normal: np.ndarray
    u_axis: np.ndarray
    kind: str = "axis"
    offset: float = 0.0

    @classmethod
    def make(cls, origin, normal, u_axis=None, kind: str = "axis", offset: float = 0.0) -> "Plane":
        n = _unit(normal)
        if u_axis is None:
            u = default_u_axis(n)
        else:
            u = np.asarray(u_axis, dtype=float)
            u = _unit(u - np.dot(u, n) * n)
        return cls(np.asarray(origin, dtype=float).copy(), n, u, kind, float(offset))

    @property
    def v_axis(self) -> np.ndarray:
        return np.cross(self.normal, self.u_axis)

    def base(self) -> "Plane":
        """The sketch plane this slicing plane was offset from."""
        if self.offset == 0.0:
            return self
        return Plane(self.origin - self.offset * self.normal, self.normal, self.u_axis, self.kind, 0.0)

    def shifted(self, dist: float) -> "Plane":
        return Plane(self.origin + dist * self.normal, self.normal, self.u_axis, self.kind, self.offset)

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        """World points -> (u, v, w) plane coordinates, w along the normal."""
        d = np.asarray(pts, dtype=float) - self.origin
        return np.stack([d @ self.u_axis, d @ self.v_axis, d @ self.normal], axis=-1)

    def to_world(self, uv: np.ndarray, w: np.ndarray | float = 0.0) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        w = np.broadcast_to(np.asarray(w, dtype=float), uv.shape[:-1])
        return (
            self.origin
            + uv[..., 0, None] * self.u_axis
            + uv[..., 1, None] * self.v_axis
            + w[..., None] * self.normal
        )

    def key(self) -> tuple:
        return (
            tuple(np.round(self.normal, 6)),
            round(float(np.dot(self.origin, self.normal)), 6),
            self.kind,
            round(self.offset, 6),
        )


@dataclass(frozen=True, eq=False)
class Loop3D:
    points: np.ndarray

    def __post_init__(self) -> None:
        if len(self.points) < 3:
            raise ValueError("a loop needs at least 3 points")


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle surface."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise MeshError("mesh has non-finite coordinates")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @cached_property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @cached_property
    def _cross(self) -> np.ndarray:
        t = self.triangles
        return np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        c = self._cross
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return np.divide(c, n, out=np.zeros_like(c), where=n > 0)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def volume(self) -> float:
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    @property
    def bounds(self) -> np.ndarray:
        return np.array([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    @cached_property
    def is_watertight(self) -> bool:
        """Closed oriented surface: every directed edge is matched by its reverse."""
        f = self.faces
        if len(f) == 0:
            return False
        a = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        b = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        n = len(self.vertices)
        fwd = np.unique(a * n + b, return_counts=True)
        rev = np.unique(b * n + a, return_counts=True)
        return len(fwd[0]) == len(rev[0]) and np.array_equal(fwd[0], rev[0]) and np.array_equal(fwd[1], rev[1])

    def transformed(self, scale: float, offset: np.ndarray) -> "TriMesh":
        return TriMesh(self.vertices * scale + offset, self.faces)


# ---------------------------------------------------------------- STL I/O


def mesh_from_triangles(tris: np.ndarray, tol: float = WELD_TOL) -> TriMesh:
    """Weld a triangle soup (F,3,3) into an indexed mesh."""
    tris = np.asarray(tris, dtype=float).reshape(-1, 3, 3)
    if len(tris) == 0:
        raise EmptyMeshError("mesh has no faces")
    pts = tris.reshape(-1, 3)
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    pairs = cKDTree(uniq).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(uniq), len(uniq)))
        _, labels = connected_components(g, directed=False)
        first = np.full(labels.max() + 1, -1)
        order = np.arange(len(uniq))
        first[labels[::-1]] = order[::-1]
        verts = uniq[first]
        inv = labels[inv]
    else:
        verts = uniq
    faces = inv.reshape(-1, 3)
    good = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[good]
    if len(faces) == 0:
        raise EmptyMeshError("mesh has no non-degenerate faces")
    used = np.unique(faces)
    remap = np.full(len(verts), -1)
    remap[used] = np.arange(len(used))
    return TriMesh(verts[used], remap[faces])


def _parse_ascii(data: bytes) -> np.ndarray:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedSTLError("ASCII STL contains non-ASCII bytes") from exc
    verts: list[list[float]] = []
    tokens = text.split()
    if not tokens or tokens[0] != "solid":
        raise MalformedSTLError("ASCII STL must start with 'solid'")
    i = 0
    n = len(tokens)
    ended = False
    while i < n:
        t = tokens[i]
        if t == "vertex":
            if i + 3 >= n:
                raise MalformedSTLError("truncated vertex record")
            try:
                verts.append([float(tokens[i + 1]), float(tokens[i + 2]), float(tokens[i + 3])])
            except ValueError as exc:
                raise MalformedSTLError(f"bad vertex coordinate near token {i}") from exc
            i += 4
            continue
        if t == "endsolid":
            ended = True
            break
        i += 1
    if not ended:
        raise MalformedSTLError("ASCII STL missing 'endsolid'")
    if len(verts) % 3:
        raise MalformedSTLError("vertex count is not a multiple of 3")
    return np.array(verts, dtype=float).reshape(-1, 3, 3)


def _parse_binary(data: bytes) -> np.ndarray:
    if len(data) < 84:
        raise MalformedSTLError("binary STL shorter than its 84-byte header")
    (count,) = struct.unpack("<I", data[80:84])
    if len(data) < 84 + 50 * count:
        raise MalformedSTLError(f"binary STL declares {count} triangles but is truncated")
    rec = np.frombuffer(data, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]), count=count, offset=84)
    return rec["v"].astype(float)


def load_mesh(path: str | os.PathLike) -> TriMesh:
    """Read a binary or ASCII STL file and weld coincident vertices."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise MeshReadError(f"cannot read {path}: {exc}") from exc
    binary_size_ok = len(data) >= 84 and len(data) == 84 + 50 * struct.unpack("<I", data[80:84])[0]
    if data.lstrip()[:5] == b"solid" and not binary_size_ok:
        tris = _parse_ascii(data)
    else:
        tris = _parse_binary(data)
    if len(tris) == 0:
        raise EmptyMeshError(f"{path} contains no triangles")
    if not np.all(np.isfinite(tris)):
        raise MalformedSTLError("STL contains non-finite coordinates")
    return mesh_from_triangles(tris)


def save_stl(mesh: TriMesh, path: str | os.PathLike, header: bytes = b"cadfit") -> None:
    """Write a binary little-endian STL."""
    tris = mesh.triangles.astype("<f4")
    rec = np.zeros(len(tris), dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    rec["n"] = mesh.face_normals
    rec["v"] = tris
    with open(path, "wb") as fh:
        fh.write(header[:80].ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(tris)))
        fh.write(rec.tobytes())


def save_ascii_stl(mesh: TriMesh, path: str | os.PathLike, name: str = "cadfit") -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"solid {name}\n")
        for n, t in zip(mesh.face_normals, mesh.triangles):
            fh.write(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n    outer loop\n")
            for p in t:
                fh.write(f"      vertex {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            fh.write("    endloop\n  endfacet\n")
        fh.write(f"endsolid {name}\n")


# ---------------------------------------------------------- normalization


def normalize_mesh(mesh: TriMesh) -> tuple[TriMesh, float, np.ndarray]:
    """Center the bounding box at the origin and scale its longest side to 2.

    Returns the normalized mesh with ``scale`` and ``center`` such that
    ``original = normalized / scale + center``.
    """
    lo, hi = mesh.bounds
    extent = float((hi - lo).max())
    if not extent > 0:
        raise DegenerateMeshError("mesh bounding box has zero extent")
    center = (lo + hi) / 2.0
    scale = 2.0 / extent
    return TriMesh((mesh.vertices - center) * scale, mesh.faces), scale, center


def denormalize_points(pts: np.ndarray, scale: float, center: np.ndarray) -> np.ndarray:
    return np.asarray(pts) / scale + center


# ------------------------------------------------------------ inside test


def _edge_fn(p0: np.ndarray, p1: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orientation of q against directed 2D edges p0->p1, plus a tie-break flag.

    The value is computed from the lexicographically smaller endpoint so an
    edge and its reverse give exactly negated results; the flag is the
    half-open ownership rule, true for exactly one of the two directions.
    """
    swap = (p0[:, 0] > p1[:, 0]) | ((p0[:, 0] == p1[:, 0]) & (p0[:, 1] > p1[:, 1]))
    lo = np.where(swap[:, None], p1, p0)
    hi = np.where(swap[:, None], p0, p1)
    e = (hi[:, 0] - lo[:, 0]) * (q[:, 1] - lo[:, 1]) - (hi[:, 1] - lo[:, 1]) * (q[:, 0] - lo[:, 0])
    e = np.where(swap, -e, e)
    d = p1 - p0
    owns = (d[:, 1] > 0) | ((d[:, 1] == 0) & (d[:, 0] > 0))
    return e, owns


class _ColumnIndex:
    """Projected-triangle bucket grid for vertical (+z) ray parity queries."""

    def __init__(self, mesh: TriMesh):
        tri = mesh.triangles
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        keep = area2 != 0
        a, b, c, area2 = a[keep], b[keep], c[keep], area2[keep]
        cw = area2 < 0
        b2 = np.where(cw[:, None], c, b)
        c2 = np.where(cw[:, None], b, c)
        self.a, self.b, self.c = a, b2, c2
        self.area2 = np.abs(area2)
        xy = np.stack([a[:, :2], b2[:, :2], c2[:, :2]], axis=1)
        self.lo2 = xy.min(axis=1)
        self.hi2 = xy.max(axis=1)
        if len(a) == 0:
            self.empty = True
            return
        self.empty = False
        self.glo = self.lo2.min(axis=0)
        ghi = self.hi2.max(axis=0)
        g = int(np.clip(np.sqrt(len(a) / 2.0), 1, 512))
        self.g = g
        self.cell = np.maximum((ghi - self.glo) / g, 1e-12)
        i0 = np.clip(((self.lo2 - self.glo) / self.cell).astype(np.int64), 0, g - 1)
        i1 = np.clip(((self.hi2 - self.glo) / self.cell).astype(np.int64), 0, g - 1)
        nx = i1[:, 0] - i0[:, 0] + 1
        ny = i1[:, 1] - i0[:, 1] + 1
        cnt = nx * ny
        tid = np.repeat(np.arange(len(a)), cnt)
        local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        bx = i0[tid, 0] + local % nx[tid]
        by = i0[tid, 1] + local // nx[tid]
        bucket = bx * g + by
        order = np.argsort(bucket, kind="stable")
        self.tri_of = tid[order]
        self.starts = np.searchsorted(bucket[order], np.arange(g * g + 1))

    def inside(self, pts: np.ndarray, chunk: int = 200_000) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        out = np.zeros(len(pts), dtype=bool)
        if self.empty or len(pts) == 0:
            return out
        gi = np.floor((pts[:, :2] - self.glo) / self.cell).astype(np.int64)
        valid = np.all((gi >= 0) & (gi < self.g), axis=1)
        # points exactly on the far grid edge belong to the last bucket
        edge = np.all((gi >= 0) & (gi <= self.g), axis=1) & ~valid
        gi[edge] = np.minimum(gi[edge], self.g - 1)
        valid |= edge
        pidx = np.flatnonzero(valid)
        bucket = gi[pidx, 0] * self.g + gi[pidx, 1]
        cnt = self.starts[bucket + 1] - self.starts[bucket]
        csum = np.cumsum(cnt)
        s = 0
        while s < len(pidx):
            base = csum[s - 1] if s else 0
            e = int(np.searchsorted(csum, base + chunk, side="right"))
            e = max(e, s + 1)
            sel = pidx[s:e]
            c = cnt[s:e]
            rep = np.repeat(np.arange(len(sel)), c)
            off = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
            t = self.tri_of[self.starts[bucket[s:e]][rep] + off]
            q = pts[sel[rep]]
            a, b, cc = self.a[t], self.b[t], self.c[t]
            q2 = q[:, :2]
            e0, o0 = _edge_fn(a[:, :2], b[:, :2], q2)
            e1, o1 = _edge_fn(b[:, :2], cc[:, :2], q2)
            e2, o2 = _edge_fn(cc[:, :2], a[:, :2], q2)
            hit = ((e0 > 0) | ((e0 == 0) & o0)) & ((e1 > 0) | ((e1 == 0) & o1)) & ((e2 > 0) | ((e2 == 0) & o2))
            # e1, e2, e0 are the barycentric weights of a, b, c scaled by area2
            z = (e1 * a[:, 2] + e2 * b[:, 2] + e0 * cc[:, 2]) / self.area2[t]
            hit &= z > q[:, 2]
            counts = np.bincount(rep[hit], minlength=len(sel))
            out[sel] = (counts & 1).astype(bool)
            s = e
        return out


def points_in_mesh(mesh: TriMesh, pts: np.ndarray) -> np.ndarray:
    """Vectorized strict-inside test by +z ray parity with exact shared-edge ownership."""
    idx = mesh.__dict__.get("_column_index")
    if idx is None:
        idx = _ColumnIndex(mesh)
        mesh.__dict__["_column_index"] = idx
    return idx.inside(pts)


def point_in_mesh(mesh: TriMesh, p) -> bool:
    return bool(points_in_mesh(mesh, np.asarray(p, dtype=float)[None, :])[0])


# --------------------------------------------------------------- sampling


def sample_surface(mesh: TriMesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform surface samples, deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    w = mesh.face_areas / mesh.face_areas.sum()
    fid = rng.choice(len(w), size=n, p=w)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = mesh.triangles[fid]
    return (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]


def sample_surface_with_faces(mesh: TriMesh, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    w = mesh.face_areas / mesh.face_areas.sum()
    fid = rng.choice(len(w), size=n, p=w)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = mesh.triangles[fid]
    pts = (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]
    return pts, fid


# ---------------------------------------------------------------- slicing


def slice_with_plane(mesh: TriMesh, plane: Plane, tol: float = 1e-9) -> list[Loop3D]:
    """Cross-section loops of a closed mesh with a plane.

    Crossing points live on mesh edges, so segments are chained through the
    shared edges rather than by coordinate matching.  Planes touching a mesh
    vertex are nudged by 1e-5 along the normal until they do not.
    """
    v = mesh.vertices
    scale = max(1.0, float(np.abs(v).max()) if len(v) else 1.0)
    origin = plane.origin.copy()
    for _ in range(8):
        s = (v - origin) @ plane.normal
        if not np.any(np.abs(s) <= tol * scale):
            break
        origin = origin + 1e-5 * plane.normal
    f = mesh.faces
    sf = s[f]
    pos = sf > 0
    npos = pos.sum(axis=1)
    cross = np.flatnonzero((npos == 1) | (npos == 2))
    if len(cross) == 0:
        return []
    fc = f[cross]
    pc = pos[cross]
    # the lone vertex (different side from the other two)
    lone_is_pos = npos[cross] == 1
    lone = np.where(lone_is_pos, np.argmax(pc, axis=1), np.argmin(pc, axis=1))
    i0 = fc[np.arange(len(fc)), lone]
    i1 = fc[np.arange(len(fc)), (lone + 1) % 3]
    i2 = fc[np.arange(len(fc)), (lone + 2) % 3]
    n_v = len(v)

    def ekey(a, b):
        return np.minimum(a, b) * n_v + np.maximum(a, b)

    # traverse so the solid stays on a consistent side of the section
    ka = ekey(i0, i1)
    kb = ekey(i2, i0)
    start_k = np.where(lone_is_pos, kb, ka)
    end_k = np.where(lone_is_pos, ka, kb)

    def edge_point(a, b):
        sa, sb = s[a], s[b]
        t = sa / (sa - sb)
        return v[a] + (v[b] - v[a]) * t[:, None]

    pa = edge_point(i0, i1)
    pb = edge_point(i2, i0)
    start_p = np.where(lone_is_pos[:, None], pb, pa)

    nxt = {int(k): i for i, k in enumerate(start_k)}
    used = np.zeros(len(fc), dtype=bool)
    loops: list[Loop3D] = []
    for i in range(len(fc)):
        if used[i]:
            continue
        chain = []
        j = i
        closed = False
        while True:
            used[j] = True
            chain.append(j)
            k = int(end_k[j])
            j2 = nxt.get(k)
            if j2 is None:
                break
            if j2 == i:
                closed = True
                break
            if used[j2]:
                break
            j = j2
        if not closed or len(chain) < 3:
            continue
        pts = start_p[chain]
        gap = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
        pts = pts[gap > 1e-9]
        if len(pts) >= 3:
            loops.append(Loop3D(pts))
    return loops


# ------------------------------------------------------------ plane proposal


@dataclass
class PlanarCluster:
    origin: np.ndarray
    normal: np.ndarray
    area: float
    faces: np.ndarray = field(repr=False)


def planar_clusters(mesh: TriMesh, angle_deg: float = 5.0, min_area_frac: float = 0.01, offset_tol: float = 0.01) -> list[PlanarCluster]:
    """Greedy normal grouping followed by a coplanarity split on plane offset."""
    areas = mesh.face_areas
    normals = mesh.face_normals
    cents = mesh.triangles.mean(axis=1)
    total = areas.sum()
    cos_tol = np.cos(np.radians(angle_deg))
    unassigned = areas > 0
    order = np.argsort(-areas, kind="stable")
    out: list[PlanarCluster] = []
    for seed in order:
        if not unassigned[seed]:
            continue
        n0 = normals[seed]
        members = np.flatnonzero(unassigned & (normals @ n0 >= cos_tol))
        unassigned[members] = False
        if areas[members].sum() < min_area_frac * total:
            continue
        d = cents[members] @ n0
        srt = np.argsort(d, kind="stable")
        groups = np.split(srt, np.flatnonzero(np.diff(d[srt]) > offset_tol) + 1)
        for g in groups:
            fids = members[g]
            a = areas[fids]
            if a.sum() < min_area_frac * total:
                continue
            nrm = (normals[fids] * a[:, None]).sum(axis=0)
            nrm /= np.linalg.norm(nrm)
            org = (cents[fids] * a[:, None]).sum(axis=0) / a.sum()
            out.append(PlanarCluster(org, nrm, float(a.sum()), fids))
    out.sort(key=lambda c: (-c.area, tuple(np.round(c.normal, 6)), tuple(np.round(c.origin, 6))))
    return out


def _snap_axis(n: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    k = int(np.argmax(np.abs(n)))
    if abs(abs(n[k]) - 1.0) < tol:
        out = np.zeros(3)
        out[k] = np.sign(n[k])
        return out
    return n


def axis_planes(lo: np.ndarray, hi: np.ndarray, n_slices: int) -> list[Plane]:
    center = (lo + hi) / 2.0
    planes = []
    for ax in range(3):
        normal = np.zeros(3)
        normal[ax] = 1.0
        for k in range(1, n_slices + 1):
            o = center.copy()
            o[ax] = lo[ax] + (hi[ax] - lo[ax]) * k / (n_slices + 1)
            planes.append(Plane.make(o, normal, kind="axis"))
    return planes


def cluster_planes(clusters: list[PlanarCluster], delta: float) -> list[Plane]:
    planes = []
    for c in clusters:
        n = _snap_axis(c.normal)
        o = c.origin.copy()
        if np.count_nonzero(n) == 1:
            # keep the exact face offset along a snapped axis normal
            k = int(np.flatnonzero(n)[0])
            o[k] = float(c.origin @ n) * n[k]
        for sgn in (1.0, -1.0):
            planes.append(Plane.make(o + sgn * delta * n, n, kind="planar", offset=sgn * delta))
    return planes


def dedupe_planes(planes: list[Plane], angle_deg: float = 5.0, offset_tol: float = 1e-4) -> list[Plane]:
    cos_tol = np.cos(np.radians(angle_deg))
    kept: list[Plane] = []
    for p in planes:
        dup = False
        for q in kept:
            c = float(p.normal @ q.normal)
            if c >= cos_tol and abs(p.origin @ p.normal - q.origin @ q.normal) <= offset_tol:
                dup = True
                break
        if not dup:
            kept.append(p)
    return kept


def propose_sketch_planes(mesh: TriMesh, cfg: FitConfig | None = None) -> list[Plane]:
    """Offset planes around planar face clusters plus axis-aligned quantile slices."""
    cfg = cfg or FitConfig()
    planes: list[Plane] = []
    if cfg.sketch_source in ("planar", "both"):
        clusters = planar_clusters(mesh, cfg.cluster_angle_deg, cfg.min_cluster_area)
        planes += cluster_planes(clusters, cfg.slice_offset)
    if cfg.sketch_source in ("axis", "both"):
        lo, hi = mesh.bounds
        planes += axis_planes(lo, hi, cfg.n_slices)
    return dedupe_planes(planes, cfg.cluster_angle_deg)


def box_mesh(lo=(-0.5, -0.5, -0.5), hi=(0.5, 0.5, 0.5)) -> TriMesh:
    """Closed, outward-oriented 12-triangle box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    v = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    f = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 7], [1, 7, 3],  # +z
        ]
    )
    return TriMesh(v, f)
