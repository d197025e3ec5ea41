"""Forward solves: uniform modes, positivity and conservation.

With omega the whole interval and a constant control lambda, a constant
initial value never feels the diffusion and implicit Euler gives exactly
y_n = (1 - lambda dt)^(-n) y0.
"""

import math

import numpy as np

from degcontrol import ControlField, ControlRegion, DiffusionCoefficient, ProblemSpec, SchemeOptions, TimeGrid
from degcontrol import assemble, build_mesh, solve_state

ops = assemble(build_mesh(32), DiffusionCoefficient.budyko(), ControlRegion.whole())
x = ops.mesh.nodes


def problem(T, n_steps, y0):
    return ProblemSpec(DiffusionCoefficient.budyko(), ControlRegion.whole(), TimeGrid(T, n_steps), -1.0, 1.0, 1.0, y0, 0 * x)


# %% Uniform mode against its closed form and against e^{lambda T}
for n_steps in (10, 100, 1000):
    spec = problem(1.0, n_steps, np.ones_like(x))
    y = solve_state(spec, ops, ControlField.constant(spec, ops, 1.0))
    print(f"N={n_steps:5d}  y(T)={y.final[0]:.10f}  closed form={(1 - 1 / n_steps) ** -n_steps:.10f}  e={math.e:.10f}")

# %% Positivity: lumped mass keeps y >= 0, consistent mass undershoots
rng = np.random.default_rng(0)
y0 = np.maximum(rng.standard_normal(x.size), 0.0)
spec = problem(0.1, 200, y0)
v = ControlField.random(spec, ops, rng)
for mass in ("lumped", "consistent"):
    y = solve_state(spec, ops, v, SchemeOptions(mass=mass)).values
    print(f"{mass:10s} min y = {y.min():+.3e}")

# %% With v = 0 the total mass 1^T M y is conserved
spec = problem(1.0, 50, rng.uniform(0, 1, x.size))
y = solve_state(spec, ops, ControlField.constant(spec, ops, 0.0)).values
tot = y @ ops.M_lumped
print("mass drift over the horizon:", np.max(np.abs(tot - tot[0])) / tot[0])
