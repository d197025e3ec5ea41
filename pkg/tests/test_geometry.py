import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degcontrol import AssemblyFailure, ControlRegion, DiffusionCoefficient, InvalidArgument, Mesh1D, assemble, build_mesh
from degcontrol.fields import interpolation_error_H1a


def test_uniform_meshes_are_equally_spaced():
    assert np.array_equal(build_mesh(2).nodes, [-1.0, 0.0, 1.0])
    assert np.allclose(build_mesh(4).nodes, [-1, -0.5, 0, 0.5, 1])


def test_boundary_refined_mesh_clusters_at_the_ends():
    h = build_mesh(8, "boundary_refined").widths
    assert h[0] < h[3] and h[-1] < h[4]
    assert np.isclose(h.sum(), 2.0)


@pytest.mark.parametrize("bad", [1, 0, 2.5])
def test_too_few_cells_rejected(bad):
    with pytest.raises(InvalidArgument):
        build_mesh(bad)


def test_mesh_must_span_the_interval():
    with pytest.raises(InvalidArgument):
        Mesh1D(np.array([-1.0, 0.2, 0.9]))
    with pytest.raises(InvalidArgument):
        Mesh1D(np.array([-1.0, 0.5, 0.2, 1.0]))


COEFFS = [
    DiffusionCoefficient.budyko(),
    DiffusionCoefficient.power(2.5),
    DiffusionCoefficient.tabulated([-1, -0.3, 0.4, 1], [0, 0.8, 1.3, 0]),
]


@pytest.mark.parametrize("coef", COEFFS, ids=["budyko", "power", "tabulated"])
@pytest.mark.parametrize("grading", ["uniform", "boundary_refined"])
def test_stiffness_annihilates_constants_exactly(coef, grading):
    ops = assemble(build_mesh(37, grading), coef, ControlRegion.whole())
    ones = np.ones(ops.n_nodes)
    assert np.all(ops.K @ ones == 0.0)
    assert np.all(ones @ ops.K == 0.0)
    assert np.all(ops.apply_stiffness(ones) == 0.0)
    assert np.all(ops.K.diagonal() >= 0)


def test_two_cell_budyko_stiffness_by_hand():
    # cell [-1, 0]: int (1 - x^2) dx = 2/3, divided by h^2 = 1
    ops = assemble(build_mesh(2), DiffusionCoefficient.budyko(), ControlRegion.whole())
    expected = np.array([[2, -2, 0], [-2, 4, -2], [0, -2, 2]]) / 3.0
    assert np.allclose(ops.K.toarray(), expected, rtol=1e-14)


def test_operator_structure():
    ops = assemble(build_mesh(20, "boundary_refined"), DiffusionCoefficient.budyko(), ControlRegion([(-0.3, 0.6)]))
    M, K = ops.M.toarray(), ops.K.toarray()
    assert np.allclose(M, M.T) and np.allclose(K, K.T)
    assert np.linalg.eigvalsh(M).min() > 0
    assert np.linalg.eigvalsh(K).min() > -1e-12
    assert np.allclose(ops.M_lumped, M.sum(axis=1))
    assert np.isclose(ops.M_lumped.sum(), 2.0)
    Mw = ops.M_omega.toarray()
    assert np.allclose(Mw, Mw.T) and np.linalg.eigvalsh(Mw).min() > -1e-14


def test_region_mass_equals_mass_on_whole_domain():
    ops = assemble(build_mesh(16), DiffusionCoefficient.budyko(), ControlRegion.whole())
    assert abs(ops.M_omega - ops.M).max() < 1e-15
    assert ops.n_control == ops.n_nodes


def test_region_is_snapped_to_nodes_with_warning_for_large_moves():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ops = assemble(build_mesh(8), DiffusionCoefficient.budyko(), ControlRegion([(-0.5, 0.5)]))
    assert ops.snapped_intervals == ((-0.5, 0.5),)
    assert np.isclose(ops.omega_weights.sum(), 1.0)
    with pytest.warns(UserWarning):
        ops = assemble(build_mesh(2), DiffusionCoefficient.budyko(), ControlRegion([(0.1, 0.2)]))
    assert ops.warnings


def test_region_normalization():
    r = ControlRegion([(0.2, 0.5), (-0.5, -0.1), (0.4, 0.7)])
    assert r.intervals == ((-0.5, -0.1), (0.2, 0.7))
    assert np.isclose(r.measure, 0.9)
    for bad in ([], [(0.5, 0.2)], [(-2, 0)]):
        with pytest.raises(InvalidArgument):
            ControlRegion(bad)


def test_negative_coefficient_fails_assembly():
    with pytest.raises(AssemblyFailure):
        assemble(build_mesh(4), lambda x: x, ControlRegion.whole())


def test_coefficient_validation():
    with pytest.raises(InvalidArgument):
        DiffusionCoefficient.power(0.5)
    with pytest.raises(InvalidArgument):
        DiffusionCoefficient.tabulated([-1, 0, 1], [0.1, 1, 0])
    with pytest.raises(InvalidArgument):
        DiffusionCoefficient.tabulated([-1, 0, 1], [0, -1, 0])


def test_interpolation_error_decreases_under_refinement():
    f = lambda x: np.cos(np.pi * x / 2)
    df = lambda x: -np.pi / 2 * np.sin(np.pi * x / 2)
    errs = [
        interpolation_error_H1a(assemble(build_mesh(n), DiffusionCoefficient.budyko(), ControlRegion.whole()), f, df)
        for n in (4, 8, 16, 32, 64)
    ]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert 0.9 < np.log2(errs[-2] / errs[-1]) < 1.1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=30))
def test_kernel_exact_on_random_meshes(widths):
    w = np.array(widths)
    nodes = np.concatenate([[0.0], np.cumsum(w)])
    nodes = -1.0 + 2.0 * nodes / nodes[-1]
    nodes[-1] = 1.0
    ops = assemble(Mesh1D(nodes), DiffusionCoefficient.budyko(), ControlRegion.whole())
    assert np.all(ops.K @ np.ones(ops.n_nodes) == 0.0)
