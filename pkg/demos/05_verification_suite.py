"""Running the executable checks directly from Python.

Each check returns a report with pass/fail, worst margins and a witness on
failure; the same reports back the `verify` subcommand.
"""

import json
from dataclasses import replace

import numpy as np

from degcontrol import ControlField, ControlRegion, DiffusionCoefficient, ProblemSetup, SchemeOptions
from degcontrol import check_max_principles, convergence_study, gradient_check, lipschitz_probe

setup = ProblemSetup(
    coefficient=DiffusionCoefficient.budyko(),
    region=ControlRegion([(-0.5, 0.5)]),
    T=0.5,
    n_steps=64,
    n_cells=32,
    m=-1.0,
    M=1.0,
    alpha=0.5,
    y0={"kind": "cosine", "amplitude": 1.0, "frequency": 0.5},
    yd={"kind": "constant", "value": 0.3},
)
spec, ops = setup.build()

# %% Maximum principles over a random fleet, then the known failure mode
print(json.dumps(check_max_principles(spec, ops, 200).margins))
bad = check_max_principles(spec, ops, 20, opts=SchemeOptions(mass="consistent"))
print("consistent mass:", bad.passed, "witness at step", bad.witness["step"], "node", bad.witness["node"])

# %% Gradient oracle
rng = np.random.default_rng(2)
u = ControlField(rng.uniform(-0.5, 0.5, (64, ops.n_control)), -1, 1)
w = ControlField(rng.uniform(-0.5, 0.5, u.shape), -1, 1)
print(gradient_check(spec, ops, u, w).margins)

# %% Lipschitz ratios against the explicit constant
print(lipschitz_probe(spec, ops, 50).margins)

# %% Self-convergence under simultaneous halving of h and dt
study = convergence_study(
    replace(setup, n_cells=8, n_steps=8, control={"kind": "constant", "value": 0.5}),
    [0, 1, 2, 3, 4],
)
print("errors:", study.details["errors"])
print("orders:", study.details["orders"])
