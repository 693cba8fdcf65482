"""Three phases meeting at a point relax to 120 degree angles.

With equal surface tensions Herring's condition at a triple junction is the
balance of three unit tangents, so each angle is 120 degrees.
"""

import numpy as np

from mcfpf import field as fld
from mcfpf import potential as pt
from mcfpf import sharp_interface as si
from mcfpf import solver as sv

pot = pt.triple_well()
grid = fld.Grid(2, 256)
eps = 0.02
u0 = sv.prepare_initial_data(sv.Tripod((0.5, 0.5)), pot, grid, eps)
final = sv.run(u0, sv.Dynamics.plain(pot), sv.StepperConfig(sv.SEMI_IMPLICIT, eps**2 / 10), 0.02,
               stride=10**9, keep_states=False).final

mesh = si.interface_mesh(final, pot)
angles = si.junction_angles(mesh)
for j, a in zip(mesh.junctions, angles):
    label = "centre" if np.allclose(j, 0.5, atol=0.05) else "seam"
    print(f"junction at ({j[0]:.3f}, {j[1]:.3f}) [{label}]: " + ", ".join(f"{x:.2f}" for x in a))
