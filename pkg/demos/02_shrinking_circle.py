"""A disk shrinking by mean curvature.

A circle of radius R moving by curvature satisfies R(t)^2 = R(0)^2 - 2t.  The
phase field with the double-well potential follows this law as eps -> 0, and
its energy approaches sigma times the perimeter.
"""

import numpy as np

from mcfpf import diagnostics as dg
from mcfpf import field as fld
from mcfpf import geodesic as geo
from mcfpf import potential as pt
from mcfpf import sharp_interface as si
from mcfpf import solver as sv

pot = pt.double_well()
sigma = geo.cached_surface_tensions(pot)
grid = fld.Grid(2, 128)
eps = 0.03
u0 = sv.prepare_initial_data(sv.Circle((0.5, 0.5), 0.3), pot, grid, eps)
dt = eps**2 / 40

rows = []


def observe(o):
    part = si.extract_partition(o.state, pot)
    mesh = si.interface_mesh(o.state, pot)
    rows.append((o.time, si.radius_estimate(part, 1), o.energy, si.partition_energy(mesh, sigma)))


traj = sv.run(u0, sv.Dynamics.plain(pot), sv.StepperConfig(sv.SEMI_IMPLICIT, dt), 0.02,
              observers=[observe], stride=round(0.002 / dt), keep_states=False)

print("   t       R(t)    sqrt(R0^2-2t)   E_eps     E(chi)")
for t, r, e, es in rows:
    print(f"{t:.4f}  {r:.5f}  {np.sqrt(0.09 - 2 * t):.5f}        {e:.5f}  {es:.5f}")

t = np.array([r[0] for r in rows])
r2 = np.array([r[1] for r in rows]) ** 2
print(f"\nfitted d(R^2)/dt = {np.polyfit(t, r2, 1)[0]:.4f} (law: -2)")
print(f"dissipation residual = {dg.dissipation_residual(traj):.3e}")
