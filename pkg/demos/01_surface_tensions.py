"""Surface tensions of the builtin potentials.

The surface tension between two wells is the geodesic distance in the
degenerate metric 2W(u)<.,.>.  For scalar potentials it is the integral of
sqrt(2W) between the wells, for the triple well it comes from an optimized
polyline in the state plane.
"""

import math

import numpy as np

from mcfpf import geodesic as geo
from mcfpf import potential as pt

for name in ("double_well", "unit_well01", "triple_well"):
    sigma = geo.cached_surface_tensions(pt.builtin(name))
    print(f"{name}:")
    print(np.array2string(sigma.sigma, precision=10))
    print(f"  triangle inequality violation: {sigma.triangle_violation():.2e}")

print(f"\nexact double-well value 2 sqrt(2)/3 = {2 * math.sqrt(2) / 3:.10f}")

# the optimal profile satisfies equipartition: |q'|^2 / 2 = W(q)
dw = pt.double_well()
prof = geo.optimal_profile(dw, 0, 1)
s = np.linspace(-3, 3, 7)
q = prof(s)[0]
print("\n s      q(s)      tanh(s/sqrt 2)")
for si_, qi in zip(s, q):
    print(f"{si_:+.1f}  {qi:+.6f}  {math.tanh(si_ / math.sqrt(2)):+.6f}")
