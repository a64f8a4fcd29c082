"""Regular voxel grid layout shared by membership fields and occupancy masks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# sub-cell origin shift; keeps cell centers off faces at round coordinates
CENTER_SHIFT = (0.1 * (math.sqrt(2) - 1), 0.1 * (math.sqrt(3) - 1), 0.1 * (math.sqrt(5) - 2))


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred grid: cell (i, j, k) has center origin + (idx + 0.5) * spacing."""

    origin: tuple[float, float, float]
    spacing: float
    dims: tuple[int, int, int]

    @classmethod
    def from_bounds(cls, bounds, resolution: int, pad_cells: int = 0) -> "GridSpec":
        """Cubic cells with ``resolution`` cells along the longest side of ``bounds``."""
        b = np.asarray(bounds, dtype=float)
        lo, hi = b[0], b[1]
        ext = np.maximum(hi - lo, 0.0)
        longest = float(ext.max())
        if not longest > 0:
            longest = 1e-3
        h = longest / resolution
        dims = [max(1, int(math.ceil(e / h - 1e-9))) + 2 * pad_cells for e in ext]
        center = (lo + hi) / 2.0
        origin = center - np.array(dims) * h / 2.0 + np.array(CENTER_SHIFT) * h
        return cls(tuple(float(x) for x in origin), float(h), tuple(int(d) for d in dims))

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def bounds(self) -> np.ndarray:
        o = np.array(self.origin)
        return np.array([o, o + np.array(self.dims) * self.spacing])

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing

    def centers(self) -> np.ndarray:
        xs, ys, zs = (self.axis_centers(a) for a in range(3))
        g = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)

    def index_range(self, lo, hi) -> tuple[slice, slice, slice]:
        """Index slices of cells whose centers may fall inside the box [lo, hi]."""
        o = np.array(self.origin)
        a = np.floor((np.asarray(lo) - o) / self.spacing - 0.5).astype(int)
        b = np.ceil((np.asarray(hi) - o) / self.spacing - 0.5).astype(int) + 1
        a = np.clip(a, 0, self.dims)
        b = np.clip(b, 0, self.dims)
        return tuple(slice(int(a[k]), int(max(a[k], b[k]))) for k in range(3))

    def sub_centers(self, sl: tuple[slice, slice, slice]) -> np.ndarray:
        axes = [self.axis_centers(k)[sl[k]] for k in range(3)]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)

    def cell_of(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-cell indices (N,3) and a validity mask for points in the grid box."""
        idx = np.floor((np.asarray(pts) - np.array(self.origin)) / self.spacing).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < np.array(self.dims)), axis=-1)
        return idx, ok
