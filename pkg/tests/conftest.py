from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cadfit.geometry import Plane, TriMesh, box_mesh
from cadfit.program import Operation, Program, extrude, revolve
from cadfit.sketch import Circle, Loop2D, Profile

settings.register_profile("ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

Z = np.array([0.0, 0.0, 1.0])


def xy_plane(z: float = 0.0) -> Plane:
    return Plane.make([0.0, 0.0, z], Z, [1.0, 0.0, 0.0], kind="program")


def rect(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def profile(outer, holes=(), plane: Plane | None = None) -> Profile:
    return Profile(plane or xy_plane(), Loop2D(outer), tuple(Loop2D(h) for h in holes), "program")


def box_op(lo, hi, role: str = "union") -> Operation:
    """Axis-aligned box as a +z extrusion."""
    return extrude(profile(rect(lo[0], lo[1], hi[0], hi[1]), plane=xy_plane(lo[2])), hi[2] - lo[2], role)


def cylinder_program(r: float = 0.5, h: float = 1.0) -> Program:
    return Program((extrude(profile(Circle(np.zeros(2), r).polygonize(256), plane=xy_plane(-h / 2)), h),))


def annulus_op(r0: float, r1: float, h: float) -> Operation:
    """Rectangle u in [r0, r1], v in [0, h] revolved about the v axis (world z)."""
    plane = Plane.make([0.0, 0.0, 0.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0], kind="program")
    return revolve(profile(rect(r0, 0.0, r1, h), plane=plane), [0.0, 0.0], [0.0, -1.0])


def shell_mesh(outer: float = 0.5, inner: float = 0.2) -> TriMesh:
    """Cube with a closed cubic cavity; the inner surface faces inward."""
    a = box_mesh((-outer,) * 3, (outer,) * 3)
    b = box_mesh((-inner,) * 3, (inner,) * 3)
    faces = np.concatenate([a.faces, b.faces[:, ::-1] + len(a.vertices)])
    return TriMesh(np.concatenate([a.vertices, b.vertices]), faces)


@pytest.fixture
def cube() -> TriMesh:
    return box_mesh()


@pytest.fixture
def cube_program() -> Program:
    return Program((box_op((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)),))
