"""Random CAD-like programs for round-trip benchmarks."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Plane
from .grid import GridSpec
from .program import CornerFeature, Operation, Program, program_mask
from .sketch import Circle, Loop2D, Profile

COMPLEXITY_OPS = {"easy": (1, 2), "medium": (3, 4), "hard": (5, 6)}

_XY = np.array([0.0, 0.0, 1.0])


def _plane(z: float) -> Plane:
    return Plane.make([0.0, 0.0, z], _XY, [1.0, 0.0, 0.0], kind="program")


def _rect(cx: float, cy: float, w: float, d: float) -> np.ndarray:
    return np.array([[cx - w / 2, cy - d / 2], [cx + w / 2, cy - d / 2], [cx + w / 2, cy + d / 2], [cx - w / 2, cy + d / 2]])


def _circle(cx: float, cy: float, r: float) -> np.ndarray:
    return Circle(np.array([cx, cy]), r).polygonize()


def _r(rng: np.random.Generator, lo: float, hi: float, q: float = 0.05) -> float:
    """Uniform value snapped to a ``q`` grid, like dimensions typed into a CAD tool."""
    return round(float(rng.uniform(lo, hi)) / q) * q


class _Builder:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.ops: list[Operation] = []
        self.w = self.d = self.h = 0.0
        self.top = 0.0

    def base(self, features: bool) -> None:
        rng = self.rng
        kind = rng.choice(["box", "box", "cyl", "ell"]) if not features else "box"
        self.w, self.d = _r(rng, 1.2, 2.0), _r(rng, 1.0, 1.8)
        self.h = self.top = _r(rng, 0.4, 1.2)
        if kind == "cyl":
            r = min(self.w, self.d) / 2
            self.w = self.d = 2 * r
            pts = _circle(0, 0, r)
        elif kind == "ell":
            w, d = self.w, self.d
            a, b = _r(rng, 0.35, 0.6) * w, _r(rng, 0.35, 0.6) * d
            pts = np.array([[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, -d / 2 + b], [-w / 2 + a, -d / 2 + b], [-w / 2 + a, d / 2], [-w / 2, d / 2]])
        else:
            pts = _rect(0, 0, self.w, self.d)
        feats: tuple = ()
        if features:
            corners = rng.choice(4, size=int(rng.integers(1, 5)), replace=False)
            feats = tuple(
                CornerFeature(int(c), str(rng.choice(["fillet", "chamfer"])), _r(rng, 0.15, 0.3))
                for c in sorted(corners)
            )
        self.ops.append(Operation("extrude", Profile(_plane(0.0), Loop2D(pts), (), "program"), "union", height=self.h, corner_features=feats))

    def _spot(self, margin: float, size: float) -> tuple[float, float]:
        rng = self.rng
        lim_x = max(0.0, self.w / 2 - margin - size / 2)
        lim_y = max(0.0, self.d / 2 - margin - size / 2)
        return _r(rng, -lim_x, lim_x), _r(rng, -lim_y, lim_y)

    def boss(self) -> None:
        rng = self.rng
        size = _r(rng, 0.4, 0.8)
        cx, cy = self._spot(0.15, size)
        dh = _r(rng, 0.3, 0.7)
        pts = _circle(cx, cy, size / 2) if rng.random() < 0.5 else _rect(cx, cy, size, _r(rng, 0.4, 0.8))
        self.ops.append(Operation("extrude", Profile(_plane(self.h), Loop2D(pts), (), "program"), "union", height=dh))
        self.top = max(self.top, self.h + dh)

    def hole(self) -> None:
        rng = self.rng
        size = _r(rng, 0.25, 0.5)
        cx, cy = self._spot(0.2, size)
        pts = _circle(cx, cy, size / 2) if rng.random() < 0.6 else _rect(cx, cy, size, size)
        if rng.random() < 0.5:
            z0, height = -0.1, self.top + 0.2
        else:
            depth = _r(rng, 0.3, 0.7) * self.h
            z0, height = self.h - depth, self.top + 0.1 - (self.h - depth)
        self.ops.append(Operation("extrude", Profile(_plane(z0), Loop2D(pts), (), "program"), "cut", height=height))

    def notch(self) -> None:
        """Step cut across one edge of the base."""
        rng = self.rng
        depth = _r(rng, 0.3, 0.6) * self.h
        width = _r(rng, 0.25, 0.45) * self.w
        side = 1 if rng.random() < 0.5 else -1
        cx = side * (self.w / 2 - width / 2 + 0.05)
        pts = _rect(cx, 0.0, width + 0.1, self.d + 0.2)
        self.ops.append(Operation("extrude", Profile(_plane(self.h - depth), Loop2D(pts), (), "program"), "cut", height=self.top + 0.1))


def _irredundant(ops: list[Operation]) -> bool:
    prog = Program(tuple(ops))
    b = prog.bounds
    spec = GridSpec.from_bounds(b, 48)
    full = program_mask(prog, spec)
    if not full.any():
        return False
    for i in range(len(ops)):
        if np.array_equal(program_mask(prog.without(i), spec), full):
            return False
    return True


def random_program(complexity: str, rng: np.random.Generator, max_tries: int = 50) -> Program:
    """One valid program with op count and roles set by ``complexity``."""
    if complexity not in COMPLEXITY_OPS:
        raise ValueError(f"complexity must be one of {list(COMPLEXITY_OPS)}")
    lo, hi = COMPLEXITY_OPS[complexity]
    for _ in range(max_tries):
        n = int(rng.integers(lo, hi + 1))
        b = _Builder(rng)
        b.base(features=complexity == "hard")
        if complexity == "easy":
            if n == 2:
                b.boss()
        else:
            n_cut = int(rng.integers(1, n - 1)) if complexity == "medium" else int(rng.integers(2, n - 1))
            n_boss = n - 1 - n_cut
            for _ in range(n_boss):
                b.boss()
            for k in range(n_cut):
                if k == 0 and rng.random() < 0.4:
                    b.notch()
                else:
                    b.hole()
        if _irredundant(b.ops):
            return Program(tuple(b.ops))
    raise RuntimeError("could not draw an irredundant program")


def generate_programs(n: int, complexity: str, seed: int = 0) -> list[Program]:
    return [random_program(complexity, np.random.default_rng([seed, i])) for i in range(n)]
