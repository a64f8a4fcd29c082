"""Reconstruct a box mesh and look at the recovered program.

A box is the easiest case: one planar face gives a rectangle profile, the height
sweep finds the opposite face, and a single extrusion explains the whole volume.

    python3 demos/cube_reconstruction.py
"""

from cadfit import FitConfig, emit_script, iterative_fit, serialize_program
from cadfit.geometry import box_mesh

mesh = box_mesh((0.0, 0.0, 0.0), (2.0, 1.0, 0.5))
program, report = iterative_fit(mesh, FitConfig(seed=0))

print(f"operations: {len(program)}")
print(f"IoU {report.iou:.4f}  trace {['%.4f' % v for v in report.iou_trace]}")
print(f"missing fraction a={report.a:.4f}, extra fraction b={report.b:.4f}, E={report.E:.4f}")
print()
print(emit_script(program))
print(serialize_program(program)[:400], "...")
