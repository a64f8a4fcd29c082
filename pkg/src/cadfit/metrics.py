"""Voxel IoU, Chamfer distances, similarity alignment, residual regions and targets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .config import FitConfig
from .geometry import (
    Loop3D,
    Plane,
    TriMesh,
    axis_planes,
    planar_clusters,
    dedupe_planes,
    points_in_mesh,
    propose_sketch_planes,
    sample_surface,
    slice_with_plane,
)
from .grid import GridSpec


class MetricError(ValueError):
    pass


class IncomparableGridError(MetricError):
    pass


class EmptyResidualError(MetricError):
    pass


# ------------------------------------------------------------------- voxels


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Occupancy of cell centers on a grid layout."""

    spec: GridSpec
    occ: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        occ = np.asarray(self.occ, dtype=bool)
        if occ.shape != tuple(self.spec.dims):
            raise MetricError(f"occupancy shape {occ.shape} does not match dims {self.spec.dims}")
        if occ.flags.writeable:
            occ = occ.copy()
            occ.setflags(write=False)
        object.__setattr__(self, "occ", occ)

    @property
    def origin(self) -> np.ndarray:
        return np.array(self.spec.origin)

    @property
    def spacing(self) -> float:
        return self.spec.spacing

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.spec.dims

    @property
    def bits(self) -> bytes:
        return np.packbits(self.occ.ravel()).tobytes()

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.occ))

    @property
    def volume(self) -> float:
        return self.popcount * self.spec.cell_volume

    def comparable(self, other: "VoxelGrid") -> bool:
        return self.spec == other.spec

    def with_occ(self, occ: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(self.spec, occ)


def voxelize(
    oracle: Callable[[np.ndarray], np.ndarray],
    bounds=None,
    resolution: int = 64,
    spec: GridSpec | None = None,
) -> VoxelGrid:
    """Evaluate a membership oracle at every cell center, slab by slab."""
    if spec is None:
        if resolution < 16:
            raise MetricError("resolution must be >= 16")
        spec = GridSpec.from_bounds(bounds, resolution)
    nx, ny, nz = spec.dims
    occ = np.zeros(spec.dims, dtype=bool)
    xs = spec.axis_centers(0)
    gy, gz = np.meshgrid(spec.axis_centers(1), spec.axis_centers(2), indexing="ij")
    slab = np.column_stack([np.zeros(gy.size), gy.ravel(), gz.ravel()])
    for i in range(nx):
        slab[:, 0] = xs[i]
        occ[i] = np.asarray(oracle(slab), dtype=bool).reshape(ny, nz)
    return VoxelGrid(spec, occ)


def _check(a: VoxelGrid, b: VoxelGrid) -> None:
    if not a.comparable(b):
        raise IncomparableGridError("grids differ in origin, spacing or dims")


def volumetric_iou(a: VoxelGrid, b: VoxelGrid) -> float:
    _check(a, b)
    inter = int(np.count_nonzero(a.occ & b.occ))
    union = int(np.count_nonzero(a.occ | b.occ))
    return 1.0 if union == 0 else inter / union


def iou_counts(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    return int(np.count_nonzero(a & b)), int(np.count_nonzero(a | b))


# ------------------------------------------------------------------ chamfer


def _cloud(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise MetricError(f"{name} point cloud is empty")
    return p


class SurfaceIndex:
    """KD-tree over a fixed point cloud for repeated one-sided queries."""

    def __init__(self, points: np.ndarray):
        self.points = _cloud(points, "target")
        self.tree = cKDTree(self.points)

    def distances(self, p: np.ndarray) -> np.ndarray:
        d, _ = self.tree.query(_cloud(p, "query"))
        return d

    def one_sided(self, p: np.ndarray) -> float:
        d = self.distances(p)
        return float(np.mean(d * d))


def chamfer_distance(p, q, mode: str = "symmetric") -> float:
    """Symmetric: mean of unsquared NN distances both ways, halved.  One-sided: mean squared P->Q."""
    p = _cloud(p, "P")
    q = _cloud(q, "Q")
    if mode == "one_sided":
        return SurfaceIndex(q).one_sided(p)
    if mode != "symmetric":
        raise MetricError(f"unknown chamfer mode {mode!r}")
    d_pq, _ = cKDTree(q).query(p)
    d_qp, _ = cKDTree(p).query(q)
    return 0.5 * (float(np.mean(d_pq)) + float(np.mean(d_qp)))


# ---------------------------------------------------------------- alignment


@dataclass(frozen=True)
class Similarity:
    """x -> scale * R(rotation) x + translation, Euler angles in radians (xyz)."""

    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise MetricError("scale must be > 0")

    @property
    def matrix(self) -> np.ndarray:
        return Rotation.from_euler("xyz", self.rotation).as_matrix()

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(pts, dtype=float) @ self.matrix.T) + np.array(self.translation)

    def invert(self, pts: np.ndarray) -> np.ndarray:
        return ((np.asarray(pts, dtype=float) - np.array(self.translation)) @ self.matrix) / self.scale

    def to_dict(self) -> dict:
        return {"rotation": list(self.rotation), "translation": list(self.translation), "scale": self.scale}


class _AlignObjective:
    """Symmetric CD of a similarity-mapped pred cloud against a fixed gt cloud."""

    def __init__(self, pred: np.ndarray, gt: np.ndarray):
        self.pred = pred
        self.gt = gt
        self.pred_tree = cKDTree(pred)
        self.gt_tree = cKDTree(gt)
        self.cp = pred.mean(axis=0)

    def similarity(self, x: np.ndarray) -> Similarity:
        # x: euler(3), t(3), log s; rotation and scale act about the pred centroid
        r = Rotation.from_euler("xyz", x[:3]).as_matrix()
        s = math.exp(x[6])
        t = self.cp - s * (r @ self.cp) + x[3:6]
        return Similarity(tuple(float(v) for v in x[:3]), tuple(float(v) for v in t), s)

    def __call__(self, x: np.ndarray) -> float:
        sim = self.similarity(x)
        d1, _ = self.gt_tree.query(sim.apply(self.pred))
        d2, _ = self.pred_tree.query(sim.invert(self.gt))
        return 0.5 * (float(np.mean(d1)) + sim.scale * float(np.mean(d2)))


def _golden(f, a: float, b: float, evals: int) -> tuple[float, float]:
    g = (math.sqrt(5) - 1) / 2
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max(0, evals - 2)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def align_similarity(
    pred,
    gt,
    max_iter: int = 50,
    tol: float = 1e-5,
    max_points: int = 4096,
    seed: int = 0,
) -> Similarity:
    """Similarity mapping ``pred`` onto ``gt`` by cyclic golden-section coordinate descent."""
    pred = _cloud(pred, "pred")
    gt = _cloud(gt, "gt")
    for name, c in (("pred", pred), ("gt", gt)):
        if float(np.ptp(c, axis=0).max()) <= 0:
            raise MetricError(f"{name} point cloud is degenerate (all points coincide)")
    rng = np.random.default_rng(seed)
    if len(pred) > max_points:
        pred = pred[np.sort(rng.choice(len(pred), max_points, replace=False))]
    if len(gt) > max_points:
        gt = gt[np.sort(rng.choice(len(gt), max_points, replace=False))]
    obj = _AlignObjective(pred, gt)
    cg = gt.mean(axis=0)
    rms_p = math.sqrt(float(np.mean(np.sum((pred - obj.cp) ** 2, axis=1))))
    rms_g = math.sqrt(float(np.mean(np.sum((gt - cg) ** 2, axis=1))))
    x_id = np.zeros(7)
    x_pre = np.concatenate([[0, 0, 0], cg - obj.cp, [math.log(rms_g / rms_p)]])
    f_id, f_pre = obj(x_id), obj(x_pre)
    x, best = (x_pre, f_pre) if f_pre <= f_id else (x_id, f_id)
    width = np.array([0.3, 0.3, 0.3] + [0.1 * rms_g] * 3 + [0.1])
    for _ in range(max_iter):
        start = best
        for k in range(7):
            def f(v, k=k):
                y = x.copy()
                y[k] = v
                return obj(y)

            v, fv = _golden(f, x[k] - width[k], x[k] + width[k], 16)
            if fv < best:
                x = x.copy()
                x[k] = v
                best = fv
            else:
                width[k] *= 0.5
        if start - best < tol:
            break
    return obj.similarity(x)


# ---------------------------------------------------------------- residuals


@dataclass(frozen=True, eq=False)
class Residuals:
    plus: VoxelGrid
    minus: VoxelGrid
    target: VoxelGrid
    solid: VoxelGrid

    @property
    def a(self) -> float:
        return self.plus.popcount / self.target.popcount

    @property
    def b(self) -> float:
        return self.minus.popcount / self.target.popcount

    @property
    def iou(self) -> float:
        return volumetric_iou(self.target, self.solid)


def compute_residuals(target: VoxelGrid, solid: VoxelGrid) -> Residuals:
    _check(target, solid)
    if target.popcount == 0:
        raise MetricError("target grid is empty")
    plus = target.occ & ~solid.occ
    minus = solid.occ & ~target.occ
    return Residuals(target.with_occ(plus), target.with_occ(minus), target, solid)


@dataclass(frozen=True)
class ErrorDecomposition:
    E: float
    iou: float
    bound_ok: bool


def error_decomposition(a: float, b: float) -> ErrorDecomposition:
    """E = a + b and IoU = (1 - a) / (1 + b), with the check 1 - IoU <= E."""
    if not (0.0 <= a <= 1.0) or not b >= 0.0:
        raise MetricError("need 0 <= a <= 1 and b >= 0")
    e = a + b
    iou = (1.0 - a) / (1.0 + b)
    return ErrorDecomposition(e, iou, bool(1.0 - iou <= e + 1e-12))


# ------------------------------------------------------------------ targets


class Target:
    """Something to fit: membership oracle, surface cloud, bounds, slicer, planes."""

    def __init__(
        self,
        membership: Callable[[np.ndarray], np.ndarray],
        surface_points: np.ndarray,
        bounds: np.ndarray,
        slicer: Callable[[Plane], list[Loop3D]],
        planes: Callable[[FitConfig], list[Plane]],
        name: str = "target",
        faces: Callable[[], list[tuple[np.ndarray, float]]] | None = None,
    ):
        self._membership = membership
        self.surface_points = np.asarray(surface_points, dtype=float)
        self.bounds = np.asarray(bounds, dtype=float)
        self._slicer = slicer
        self._planes = planes
        self.name = name
        self._index: SurfaceIndex | None = None
        self._voxels: dict[GridSpec, VoxelGrid] = {}
        self._faces = faces
        self._face_cache: list[tuple[np.ndarray, float]] | None = None

    def membership(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        out = np.zeros(len(pts), dtype=bool)
        inb = np.all((pts >= self.bounds[0]) & (pts <= self.bounds[1]), axis=1)
        idx = np.flatnonzero(inb)
        if len(idx):
            out[idx] = self._membership(pts[idx])
        return out

    def hidden(self, pts: np.ndarray) -> np.ndarray:
        """Fast approximate membership: nearest cell of the last voxelization, if any."""
        if not self._voxels:
            return self.membership(pts)
        grid = self._voxels[self._last_spec]
        idx, ok = grid.spec.cell_of(pts)
        out = np.zeros(len(idx), dtype=bool)
        good = np.flatnonzero(ok)
        out[good] = grid.occ[idx[good, 0], idx[good, 1], idx[good, 2]]
        return out

    @property
    def hidden_margin(self) -> float:
        """Distance below which :meth:`hidden` is unreliable."""
        return self._last_spec.spacing if self._voxels else 0.0

    @property
    def index(self) -> SurfaceIndex:
        if self._index is None:
            self._index = SurfaceIndex(self.surface_points)
        return self._index

    def face_offsets(self, normal: np.ndarray, angle_deg: float = 1.0) -> np.ndarray:
        """Offsets along ``normal`` of planar target faces parallel to it."""
        if self._faces is None:
            return np.zeros(0)
        if self._face_cache is None:
            self._face_cache = self._faces()
        n = np.asarray(normal, dtype=float)
        cos_tol = math.cos(math.radians(angle_deg))
        out = [off * np.sign(fn @ n) for fn, off in self._face_cache if abs(fn @ n) >= cos_tol]
        return np.array(sorted(set(out)))

    def slice(self, plane: Plane) -> list[Loop3D]:
        return self._slicer(plane)

    def propose_planes(self, cfg: FitConfig) -> list[Plane]:
        return self._planes(cfg)

    def voxels(self, spec: GridSpec) -> VoxelGrid:
        hit = self._voxels.get(spec)
        if hit is None:
            hit = voxelize(self.membership, spec=spec)
            self._voxels[spec] = hit
        self._last_spec = spec
        return hit


def mesh_target(mesh: TriMesh, cfg: FitConfig | None = None, seed: int | None = None) -> Target:
    cfg = cfg or FitConfig()
    seed = cfg.seed if seed is None else seed
    pts = sample_surface(mesh, cfg.surface_points, seed)
    lo, hi = mesh.bounds
    pad = 1e-6 * max(1.0, float(np.abs(mesh.bounds).max()))
    return Target(
        lambda p: points_in_mesh(mesh, p),
        pts,
        np.array([lo - pad, hi + pad]),
        lambda plane: slice_with_plane(mesh, plane),
        lambda c: propose_sketch_planes(mesh, c),
        "mesh",
        lambda: _cluster_faces(mesh, cfg),
    )


def _cluster_faces(mesh: TriMesh, cfg: FitConfig) -> list[tuple[np.ndarray, float]]:
    return [(c.normal, float(c.origin @ c.normal)) for c in planar_clusters(mesh, cfg.cluster_angle_deg, 0.0)]


def boundary_cells(occ: np.ndarray) -> np.ndarray:
    """Occupied cells with at least one empty 6-neighbour (outside counts as empty)."""
    padded = np.pad(occ, 1)
    inner = ndimage.binary_erosion(padded, structure=ndimage.generate_binary_structure(3, 1))
    return (padded & ~inner)[1:-1, 1:-1, 1:-1]


def _grid_mesh(occ: np.ndarray, spec: GridSpec) -> TriMesh:
    from skimage import measure

    padded = np.pad(occ.astype(np.float32), 1)
    h = spec.spacing
    verts, faces, _, _ = measure.marching_cubes(padded, level=0.5, spacing=(h, h, h))
    verts = verts + np.array(spec.origin) + h / 2.0 - h
    mesh = TriMesh(verts, faces.astype(np.int64))
    if mesh.volume < 0:
        mesh = TriMesh(verts, faces[:, ::-1].astype(np.int64).copy())
    return mesh


def residual_target(residual: VoxelGrid, cfg: FitConfig | None = None, name: str = "residual") -> Target:
    """Target over an occupied voxel region with nearest-cell membership."""
    from skimage import measure

    cfg = cfg or FitConfig()
    occ = residual.occ
    if not occ.any():
        raise EmptyResidualError("residual region is empty")
    spec = residual.spec
    h = spec.spacing
    o = np.array(spec.origin)
    nz = np.argwhere(occ)
    imin, imax = nz.min(axis=0), nz.max(axis=0)
    bounds = np.array([o + imin * h - h, o + (imax + 1) * h + h])
    centers = o + (np.argwhere(boundary_cells(occ)) + 0.5) * h

    def membership(pts: np.ndarray) -> np.ndarray:
        idx, ok = spec.cell_of(pts)
        out = np.zeros(len(idx), dtype=bool)
        good = np.flatnonzero(ok)
        out[good] = occ[idx[good, 0], idx[good, 1], idx[good, 2]]
        return out

    def slicer(plane: Plane) -> list[Loop3D]:
        corners = np.array([[x, y, z] for x in bounds[:, 0] for y in bounds[:, 1] for z in bounds[:, 2]])
        uv = plane.to_local(corners)[:, :2]
        step = h / 2.0
        lo = uv.min(axis=0) - step
        n = np.ceil((uv.max(axis=0) + step - lo) / step).astype(int) + 1
        us = lo[0] + np.arange(n[0]) * step
        vs = lo[1] + np.arange(n[1]) * step
        gu, gv = np.meshgrid(us, vs, indexing="ij")
        grid_uv = np.column_stack([gu.ravel(), gv.ravel()])
        img = membership(plane.to_world(grid_uv)).reshape(gu.shape).astype(float)
        if not img.any():
            return []
        img = np.pad(img, 1)
        loops = []
        for c in measure.find_contours(img, 0.5):
            if len(c) < 4:
                continue
            c = c[:-1] if np.allclose(c[0], c[-1]) else c
            cuv = lo + (c - 1.0) * step
            loops.append(Loop3D(plane.to_world(cuv)))
        return loops

    mesh_cache: list[TriMesh] = []

    def planes(c: FitConfig) -> list[Plane]:
        if not mesh_cache:
            mesh_cache.append(_grid_mesh(occ, spec))
        out = propose_sketch_planes(mesh_cache[0], c.replace(sketch_source="planar")) if c.sketch_source != "axis" else []
        if c.sketch_source in ("axis", "both"):
            out = out + axis_planes(bounds[0] + h, bounds[1] - h, c.n_slices)
        return dedupe_planes(out, c.cluster_angle_deg)

    def faces() -> list[tuple[np.ndarray, float]]:
        if not mesh_cache:
            mesh_cache.append(_grid_mesh(occ, spec))
        return _cluster_faces(mesh_cache[0], cfg)

    return Target(membership, centers, bounds, slicer, planes, name, faces)
