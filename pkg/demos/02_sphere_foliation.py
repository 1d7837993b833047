"""
The Monge-Ampere solution of the sphere
=======================================

Sweeping the sphere with the complexified Reeb flow gives a collar around V
foliated by Riemann surfaces.  Setting ``u = -Im w`` along each leaf gives a
function with ``u = 0`` on V whose complex Hessian is degenerate.  For the
sphere this must be ``log |z|^2``.
"""

import numpy as np

from mafoliation import monge_ampere as ma
from mafoliation.cr import catalog_entry
from mafoliation.foliation import build, calibration_residuals, collar_samples, leaf_chart

sphere = catalog_entry("sphere")
model = build(sphere, s_max=0.25)

# %%
# Compare against the closed form on random collar points
Q, P, S = collar_samples(model, 500, seed=1)
u = model.u(Q)
print("max |u - log|z|^2| =", np.abs(u - sphere.oracle(Q)).max())
print("collar radii from", np.sqrt((Q ** 2).sum(0)).min().round(3), "to", np.sqrt((Q ** 2).sum(0)).max().round(3))

# %%
# Calibration: du(xi) = 0, d^c u(xi) = 1 and [xi, J xi] = 0
for k, v in calibration_residuals(model, Q[:, :50]).items():
    print(f"{k:>16}: {np.max(v):.1e}")

# %%
# Monge-Ampere: the normalized determinant of the complex Hessian vanishes,
# while du ^ d^c u ^ dd^c u stays away from zero.
data = model.local(Q[:, :200], order=2)
res = ma.ma_residual(data.u)
nd = ma.nondegeneracy(data.u)
print(f"MA residual max {res.value.max():.1e}, nondegeneracy min {np.abs(nd).min():.2f}")

# %%
# On a leaf, u is harmonic: the leaf chart z = t + i s satisfies u = -s.
chart = leaf_chart(model, np.array([1.0, 0, 0, 0]))
ts = np.linspace(-0.5, 0.5, 5)
ss = np.linspace(-0.2, 0.2, 5)
pts = chart.grid(ts, ss)
U = model.u(pts.reshape(4, -1)).reshape(5, 5)
print("u + s on the leaf grid:", np.abs(U + ss[None, :]).max())
