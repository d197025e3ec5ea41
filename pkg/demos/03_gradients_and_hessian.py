"""Exact discrete derivatives of the reduced cost.

The adjoint is the transpose of the forward scheme, so alpha u + Y q is the
exact gradient of the discrete cost; central differences confirm it with a
slope-2 error curve until round-off takes over.
"""

import numpy as np

from degcontrol import ControlField, ControlRegion, DiffusionCoefficient, ProblemSpec, TimeGrid
from degcontrol import algebraic_gradient, assemble, build_mesh, evaluate, gradient_at, hessian_form
from degcontrol.verification import fit_slope

region = ControlRegion([(-0.5, 0.5)])
ops = assemble(build_mesh(32), DiffusionCoefficient.budyko(), region)
x = ops.mesh.nodes
spec = ProblemSpec(DiffusionCoefficient.budyko(), region, TimeGrid(0.5, 64), -1, 1, 0.5, np.cos(np.pi * x / 2), 0.3 + 0 * x)
rng = np.random.default_rng(1)
u = ControlField(rng.uniform(-0.5, 0.5, (64, ops.n_control)), -1, 1)
w = ControlField(rng.uniform(-0.5, 0.5, u.shape), -1, 1)

# %% Directional derivative against central differences
J, y, q, g = gradient_at(spec, ops, u)
dJ = g.pair(w, ops, spec.time)
eps = 10.0 ** -np.arange(1, 8)
errs = []
for e in eps:
    Jp = evaluate(spec, ops, u.with_values(u.values + e * w.values))[0]
    Jm = evaluate(spec, ops, u.with_values(u.values - e * w.values))[0]
    errs.append(abs((Jp - Jm) / (2 * e) - dJ) / abs(dJ))
    print(f"eps={e:.0e}  relative error {errs[-1]:.2e}")
print("fitted slope before the plateau:", fit_slope(eps, errs)[0])

# %% A second, independent route: sparse Lagrangian with explicit transposes
alg = algebraic_gradient(spec, ops, u) / (spec.time.dt * ops.omega_weights[ops.omega_nodes])
print("max |pointwise - algebraic| =", np.max(np.abs(alg - g.values)))

# %% Hessian form: symmetric to the last bit, matched by a second difference
h = ControlField(rng.uniform(-0.5, 0.5, u.shape), -1, 1)
print("asymmetry:", hessian_form(spec, ops, u, q, w, h, y) - hessian_form(spec, ops, u, q, h, w, y))
H = hessian_form(spec, ops, u, q, w, w, y)
e = 1e-3
sd = (evaluate(spec, ops, u.with_values(u.values + e * w.values))[0] - 2 * J
      + evaluate(spec, ops, u.with_values(u.values - e * w.values))[0]) / e**2
print(f"H[w,w] = {H:.10f}, second difference = {sd:.10f}")
