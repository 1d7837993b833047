"""
Reeb fields and complex-time flows
==================================

The unit sphere in C^2 carries the contact form ``d^c rho`` restricted to
its tangent space.  Its Reeb field is the rotation ``i z / 2``, whose flow
extends to complex time as ``g_w(z) = exp(i w / 2) z``.  This script
recovers the Reeb field numerically from the Levi form and then flows a
point into complex time with the Taylor integrator.
"""

import numpy as np

from mafoliation.cr import catalog_entry, ht_frame, levi_nondegenerate, reeb, sample_points
from mafoliation.flow import continue_flow, taylor_orbit

sphere = catalog_entry("sphere")
print(sphere.label, "rho =", sphere.rho.to_text())

# %%
# Levi form and Reeb field at a few random points of V
P = sample_points(sphere, 5, seed=0)
for p in P:
    frame = ht_frame(sphere, p)
    levi = levi_nondegenerate(frame)
    xi = reeb(sphere, p, frame)
    print(f"det {levi.det:+.3f}  |xi - iz/2| = {np.abs(xi - sphere.xi0(p)).max():.1e}")

# %%
# The flow in complex time.  Each Taylor coefficient of the orbit is a real
# vector; evaluating the series at a complex w complexifies them.
p = np.array([0.6, 0.0, 0.0, 0.8])
orbit = taylor_orbit(sphere.xi0, p, order=20)
print("radius estimate:", orbit.radius)

for w in (0.5, 0.5j, 1.0 + 0.3j, np.pi * 1j):
    q = continue_flow(sphere.xi0, p, w)
    z = (p[0::2] + 1j * p[1::2]) * np.exp(0.5j * w)
    exact = np.stack([z.real, z.imag], axis=1).ravel()
    print(f"w = {w!s:>20}:  |g_w(p)| = {np.linalg.norm(q):.6f}  error {np.abs(q - exact).max():.1e}")

# Imaginary time changes |z| by exp(-Im w / 2), so the orbit of V under
# g_{is} sweeps the level sets |z|^2 = exp(-s).  That is why log|z|^2 is the
# function built in the next demo.
