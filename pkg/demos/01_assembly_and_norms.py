"""Assembling the degenerate operator and measuring fields.

The Budyko coefficient a(x) = 1 - x^2 vanishes at both ends of [-1, 1], so no
boundary rows are needed: constants lie exactly in the kernel of K_a.
"""

import numpy as np

from degcontrol import ControlRegion, DiffusionCoefficient, assemble, build_mesh, norm_H1a, norm_L2_space
from degcontrol.fields import interpolation_error_H1a

# %% A small mesh and its operators
ops = assemble(build_mesh(8), DiffusionCoefficient.budyko(), ControlRegion([(-0.5, 0.5)]))
print("nodes:", ops.mesh.nodes)
print("K_a @ 1 =", ops.K @ np.ones(ops.n_nodes))
print("lumped mass:", ops.M_lumped, "total", ops.M_lumped.sum())
print("control nodes inside omega:", ops.mesh.nodes[ops.omega_nodes])

# %% Boundary-refined grading puts small cells where a degenerates
h = build_mesh(8, "boundary_refined").widths
print("graded widths:", np.round(h, 4))

# %% Norms of x on a fine mesh: |x|_L2 = sqrt(2/3), |x|_H1a = sqrt(2)
fine = assemble(build_mesh(256), DiffusionCoefficient.budyko(), ControlRegion.whole())
x = fine.mesh.nodes
print(f"|x|_L2  = {norm_L2_space(x, fine):.12f}  vs {np.sqrt(2 / 3):.12f}")
print(f"|x|_H1a = {norm_H1a(x, fine):.12f}  vs {np.sqrt(2):.12f}")

# %% Interpolation error of cos(pi x / 2) halves with each refinement
f = lambda s: np.cos(np.pi * s / 2)
df = lambda s: -np.pi / 2 * np.sin(np.pi * s / 2)
for n in (8, 16, 32, 64):
    o = assemble(build_mesh(n), DiffusionCoefficient.budyko(), ControlRegion.whole())
    print(f"n={n:3d}  H1a interpolation error {interpolation_error_H1a(o, f, df):.3e}")
