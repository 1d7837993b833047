"""
A calibrated foliation that is not Monge-Ampere
===============================================

Rescaling the Reeb field by a positive function keeps it transverse to the
contact distribution, so the construction still produces a calibrated pair
``(xi, u)``.  But the rescaled field is no longer an infinitesimal symmetry of
the CR structure, and the resulting ``u`` fails the Monge-Ampere equation.
The set where ``xi -| dd^c u`` vanishes (the contact locus) shrinks to
isolated points on each leaf.
"""

import numpy as np

from mafoliation import monge_ampere as ma
from mafoliation.cr import catalog_entry, sample_points, symmetry_residual
from mafoliation.expr import parse
from mafoliation.foliation import build, calibration_residuals, collar_samples, leaf_chart

sphere = catalog_entry("sphere")
factor = parse("1 + 0.3*re(z1)", 2)
seed = sphere.xi0.scaled(factor)

P = sample_points(sphere, 20, seed=2)
print("symmetry residual, Reeb field:", max(symmetry_residual(sphere, sphere.xi0, p) for p in P))
print("symmetry residual, rescaled:  ", max(symmetry_residual(sphere, seed, p) for p in P))

model = build(sphere, seed, s_max=0.25)
Q, _, _ = collar_samples(model, 300, seed=4)

# %%
# Still calibrated ...
cal = calibration_residuals(model, Q)
print("calibration:", {k: float(np.max(v)) for k, v in cal.items()})

# %%
# ... but not Monge-Ampere
data = model.local(Q, order=2)
print("MA residual max:", ma.ma_residual(data.u).value.max())
print("contact residual max:", ma.contact_residual(model, Q, data).residual.max())

# %%
# Saturation scans on two leaves: the Reeb model is contact everywhere, the
# rescaled one only at isolated points (if at all).
reeb_model = build(sphere, s_max=0.25)
ts = np.linspace(-0.2, 0.2, 21)
ss = np.linspace(-0.2, 0.2, 21)
for p in sample_points(sphere, 2, seed=6):
    a = ma.saturation_scan(reeb_model, leaf_chart(reeb_model, p), ts, ss)
    b = ma.saturation_scan(model, leaf_chart(model, p), ts, ss)
    print(f"leaf through {np.round(p, 2)}: reeb {a.classification}, rescaled {b.classification} ({b.zero_count} zeros)")
