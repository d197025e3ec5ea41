import numpy as np
import pytest

from degcontrol import ControlRegion, DiffusionCoefficient, ProblemSpec, TimeGrid, assemble, build_mesh


def make_problem(n_cells=16, n_steps=32, T=0.1, region=None, m=-1.0, M=1.0, alpha=1.0, y0=None, yd=None):
    region = region or ControlRegion([(-0.5, 0.5)])
    ops = assemble(build_mesh(n_cells), DiffusionCoefficient.budyko(), region)
    x = ops.mesh.nodes
    y0 = np.cos(np.pi * x / 2) if y0 is None else np.broadcast_to(np.asarray(y0, float), x.shape)
    yd = 0.5 * np.ones_like(x) if yd is None else np.broadcast_to(np.asarray(yd, float), x.shape)
    spec = ProblemSpec(DiffusionCoefficient.budyko(), region, TimeGrid(T, n_steps), m, M, alpha, y0, yd)
    return spec, ops


@pytest.fixture
def small():
    return make_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
