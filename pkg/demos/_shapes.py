"""Small shape builders shared by the demo scripts."""

import numpy as np

from cadfit.geometry import Plane
from cadfit.program import Program, extrude, revolve, tessellate_solid
from cadfit.sketch import Circle, Loop2D, Profile

Z = np.array([0.0, 0.0, 1.0])


def rect(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def xy_profile(outer, z=0.0, holes=()):
    plane = Plane.make([0.0, 0.0, z], Z, [1.0, 0.0, 0.0], kind="program")
    return Profile(plane, Loop2D(outer), tuple(Loop2D(h) for h in holes), "program")


def box_op(lo, hi, role="union"):
    return extrude(xy_profile(rect(lo[0], lo[1], hi[0], hi[1]), lo[2]), hi[2] - lo[2], role)


def l_bracket(resolution=64):
    """A unit cube with one quarter column removed."""
    prog = Program((box_op((-0.6, -0.6, -0.6), (0.6, 0.6, 0.6)), box_op((0.0, 0.0, -0.6), (0.6, 0.6, 0.6), "cut")))
    return prog, tessellate_solid(prog, resolution)


def flanged_tube(resolution=80):
    """Plate with a bored boss, built from an extrude and a revolve."""
    plate = extrude(xy_profile(rect(-0.8, -0.8, 0.8, 0.8), -0.3, holes=[Circle(np.zeros(2), 0.25).polygonize(128)]), 0.2)
    meridian = Plane.make([0.0, 0.0, 0.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0], kind="program")
    boss = revolve(Profile(meridian, Loop2D(rect(0.25, -0.1, 0.45, 0.5)), (), "program"), [0.0, 0.0], [0.0, -1.0])
    prog = Program((plate, boss))
    return prog, tessellate_solid(prog, resolution)
