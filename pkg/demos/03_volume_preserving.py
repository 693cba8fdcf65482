"""Volume-preserving flow: Ostwald ripening of two disks.

With the Lagrange multiplier the phase volume is conserved exactly; the
small disk, having larger curvature, feeds the large one.
"""

import math

import numpy as np

from mcfpf import field as fld
from mcfpf import potential as pt
from mcfpf import sharp_interface as si
from mcfpf import solver as sv

pot = pt.double_well()
grid = fld.Grid(2, 128)
eps = 0.03
geom = sv.Circles((sv.Circle((0.27, 0.5), 0.12), sv.Circle((0.7, 0.5), 0.2)))
u = sv.prepare_initial_data(geom, pot, grid, eps)
dyn = sv.Dynamics.volume_preserving(pot)
dt = eps**2 / 10
volume0 = fld.integrate((u.values[0] + 1) / 2, grid)

print("   t      area(left)  area(right)  phase volume   lambda")
state = u
for k in range(6):
    labels = si.extract_partition(state, pot).labels
    left = np.count_nonzero(labels[: grid.n // 2] == 1) * grid.cell_volume
    right = np.count_nonzero(labels[grid.n // 2:] == 1) * grid.cell_volume
    vol = fld.integrate((state.values[0] + 1) / 2, grid)
    lam = sv.lagrange_multiplier(state, pot)
    print(f"{state.time:.4f}  {left:.5f}     {right:.5f}      {vol:.12f}  {lam:.4f}")
    state = sv.run(state, dyn, sv.StepperConfig(sv.SEMI_IMPLICIT, dt), state.time + 0.004,
                   stride=10**9, keep_states=False).final

print(f"\nrelative volume change: {abs(vol - volume0) / volume0:.2e}")
print(f"sharp radii at start: {0.12:.3f}, {0.2:.3f}; equal-area radius: {math.sqrt(0.12**2 + 0.2**2):.3f}")
