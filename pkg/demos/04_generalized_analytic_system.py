"""
The generalized analytic system on a leaf
=========================================

Away from the contact locus, the functions ``u_i = omega(X_i)`` and
``v_i = omega(J X_i)`` (with ``omega = L_xi d^c u``) combine into
``w = u + i v``, which satisfies ``dw/dzbar = A w + B conj(w)`` in the leaf
coordinate.  The coefficients come from expanding Lie brackets of a frame in
the basis ``(xi, J xi, X_j, J X_j)``.  Zeros of such ``w`` are isolated
unless ``w`` vanishes identically.
"""

import os
import tempfile

import numpy as np

from mafoliation import vekua
from mafoliation.cr import catalog_entry, sample_points
from mafoliation.expr import parse
from mafoliation.foliation import build, leaf_chart

sphere = catalog_entry("sphere")
model = build(sphere, sphere.xi0.scaled(parse("1 + 0.3*re(z1)", 2)), s_max=0.25)
p = sample_points(sphere, 1, seed=6)[0]

ts = np.linspace(-0.2, 0.2, 41)
ss = np.linspace(-0.15, 0.15, 41)
system = vekua.leaf_system(model, leaf_chart(model, p), ts, ss)

print("max |w| on the leaf:", np.abs(system.w).max())
print("max |A|, |B|:", np.abs(system.A).max(), np.abs(system.B).max())
print("residual of dw/dzbar = A w + B conj(w):", vekua.system_residual(system))
print("zero set:", vekua.classify_zero_set(system.w, 1e-7))

# %%
# Jacobi identity cross-checks between the two bicommutator expressions
coarse = leaf_chart(model, p).grid(ts[::10], ss[::10]).reshape(4, -1)
print(vekua.bicommutator_check(model, coarse))

# %%
# The Reeb model gives w = 0: the whole leaf is in the contact locus.
reeb_model = build(sphere, s_max=0.25)
flat = vekua.leaf_system(reeb_model, leaf_chart(reeb_model, p), ts[::4], ss[::4])
print("Reeb model:", vekua.classify_zero_set(flat.w, 1e-7))

# %%
# Grid dump for offline inspection
path = os.path.join(tempfile.mkdtemp(), "vekua_leaf.csv")
vekua.write_system_csv(system, path)
print("wrote", path)
