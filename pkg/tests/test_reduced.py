import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_problem
from degcontrol import (
    ControlField,
    InvalidArgument,
    SchemeOptions,
    active_set,
    algebraic_gradient,
    control_inner,
    cost,
    critical_cone_test,
    evaluate,
    gradient_at,
    hessian_form,
    norm_L2_spacetime,
    project_box,
    reduced_gradient,
    solve_adjoint,
    solve_state,
    ssc_threshold,
    stationarity_residual,
    trichotomy_audit,
)

SCHEMES = [SchemeOptions(), SchemeOptions(theta=0.5, mass="consistent"), SchemeOptions(theta=0.7, shift_r=2.0)]


def planted(spec, ops, u, opts=None):
    return spec.replace(yd=solve_state(spec, ops, u, opts).final)


def test_cost_closed_forms():
    spec, ops = make_problem(y0=1.0, yd=0.0)
    zero = ControlField.constant(spec, ops, 0.0)
    J, _ = evaluate(spec, ops, zero)
    assert math.isclose(J, 1.0, rel_tol=1e-13)
    s = planted(spec, ops, zero)
    assert evaluate(s, ops, zero)[0] == 0.0
    with pytest.raises(InvalidArgument):
        cost(spec, ops, zero, np.zeros((3, ops.n_nodes)))


def test_gradient_is_alpha_u_at_a_planted_target():
    spec, ops = make_problem(alpha=3.0)
    u = ControlField.random(spec, ops, np.random.default_rng(0))
    s = planted(spec, ops, u)
    J, y, q, g = gradient_at(s, ops, u)
    assert np.all(q.values == 0)
    assert np.array_equal(g.values, 3.0 * u.values)
    zero = ControlField.constant(spec, ops, 0.0)
    s0 = planted(spec, ops, zero)
    assert np.all(gradient_at(s0, ops, zero)[3].values == 0)


@pytest.mark.parametrize("opts", SCHEMES, ids=["euler", "cn", "shifted"])
def test_pointwise_gradient_matches_algebraic(opts):
    spec, ops = make_problem(alpha=0.5)
    u = ControlField.random(spec, ops, np.random.default_rng(1))
    _, y, q, g = gradient_at(spec, ops, u, opts)
    alg = algebraic_gradient(spec, ops, u, opts) / (spec.time.dt * ops.omega_weights[ops.omega_nodes])
    d = alg - g.values
    assert norm_L2_spacetime(d, ops, spec.time) < 1e-10 * norm_L2_spacetime(g.values, ops, spec.time)


@pytest.mark.parametrize("opts", SCHEMES, ids=["euler", "cn", "shifted"])
def test_gradient_against_central_differences(opts):
    spec, ops = make_problem(alpha=0.5)
    rng = np.random.default_rng(2)
    u = ControlField(rng.uniform(-0.5, 0.5, (spec.time.n_steps, ops.n_control)), -1, 1)
    w = ControlField(rng.uniform(-0.5, 0.5, u.shape), -1, 1)
    _, _, _, g = gradient_at(spec, ops, u, opts)
    dJ = g.pair(w, ops, spec.time)
    errs = []
    for eps in (1e-1, 1e-2):
        Jp = evaluate(spec, ops, u.with_values(u.values + eps * w.values), opts)[0]
        Jm = evaluate(spec, ops, u.with_values(u.values - eps * w.values), opts)[0]
        errs.append(abs((Jp - Jm) / (2 * eps) - dJ) / abs(dJ))
    assert errs[1] < 1e-6
    assert 1.8 < math.log10(errs[0] / errs[1]) < 2.2


def test_extension_bound_cauchy_schwarz():
    spec, ops = make_problem(alpha=2.0)
    rng = np.random.default_rng(3)
    u = ControlField.random(spec, ops, rng)
    _, y, q, g = gradient_at(spec, ops, u)
    n = lambda a: norm_L2_spacetime(a, ops, spec.time)
    C = spec.alpha * n(u.values) + n(g.state_part)
    for _ in range(10):
        v = rng.standard_normal(u.shape)
        assert abs(g.pair(v, ops, spec.time)) <= C * n(v) * (1 + 1e-12)


def test_hessian_symmetry_and_q_zero_lower_bound():
    spec, ops = make_problem(alpha=1.5)
    rng = np.random.default_rng(4)
    u = ControlField(rng.uniform(-0.5, 0.5, (spec.time.n_steps, ops.n_control)), -1, 1)
    _, y, q, _ = gradient_at(spec, ops, u)
    for _ in range(10):
        w = ControlField(rng.standard_normal(u.shape), -1, 1)
        h = ControlField(rng.standard_normal(u.shape), -1, 1)
        assert hessian_form(spec, ops, u, q, w, h, y) == hessian_form(spec, ops, u, q, h, w, y)
    q0 = np.zeros_like(q.values)
    w = ControlField(rng.standard_normal(u.shape), -1, 1)
    H = hessian_form(spec, ops, u, q0, w, w, y)
    assert H >= spec.alpha * control_inner(w, w, ops, spec.time)


@pytest.mark.parametrize("opts", SCHEMES, ids=["euler", "cn", "shifted"])
def test_hessian_second_difference(opts):
    spec, ops = make_problem(alpha=0.5)
    rng = np.random.default_rng(5)
    u = ControlField(rng.uniform(-0.5, 0.5, (spec.time.n_steps, ops.n_control)), -1, 1)
    x = ops.mesh.nodes[ops.omega_nodes]
    w = ControlField(np.outer(np.cos(np.pi * spec.time.times[1:]), np.sin(np.pi * x)) * 0.4, -1, 1)
    J, y, q, _ = gradient_at(spec, ops, u, opts)
    H = hessian_form(spec, ops, u, q, w, w, y, opts)
    eps = 1e-3
    Jp = evaluate(spec, ops, u.with_values(u.values + eps * w.values), opts)[0]
    Jm = evaluate(spec, ops, u.with_values(u.values - eps * w.values), opts)[0]
    assert abs((Jp - 2 * J + Jm) / eps**2 - H) < 1e-4 * abs(H)


def test_projection():
    raw = np.array([[-3.0, 0.2, 5.0]])
    assert np.array_equal(project_box(raw, -1, 1).values, [[-1.0, 0.2, 1.0]])
    assert np.array_equal(project_box(np.zeros((1, 2)), 0.5, 2).values, [[0.5, 0.5]])
    with pytest.raises(InvalidArgument):
        project_box(raw, 1, 1)


def test_stationarity_residual_cases():
    spec, ops = make_problem(alpha=1.0)
    zero = ControlField.constant(spec, ops, 0.0)
    s = planted(spec, ops, zero)
    _, y, q, _ = gradient_at(s, ops, zero)
    assert stationarity_residual(s, ops, zero, y, q) == 0.0
    # y0 > 0, target far above: -yq/alpha pushes to the upper bound
    s = spec.replace(yd=np.full(ops.n_nodes, 100.0), alpha=1e-3)
    top = ControlField.constant(s, ops, s.M)
    _, y, q, _ = gradient_at(s, ops, top)
    assert np.all(-reduced_gradient(s, ops, top, y, q).state_part / s.alpha >= s.M)
    assert stationarity_residual(s, ops, top, y, q) == 0.0


def test_active_set_and_cone():
    spec, ops = make_problem(alpha=1.0)
    zero = ControlField.constant(spec, ops, 0.0)
    s = planted(spec, ops, zero)
    _, y, q, g = gradient_at(s, ops, zero)
    assert active_set(s, ops, zero, y, q, 0.0).mask.sum() == 0
    u = ControlField.random(spec, ops, np.random.default_rng(0))
    _, y, q, g = gradient_at(spec, ops, u)
    rep = active_set(spec, ops, u, y, q, np.abs(g.values).max() * 2)
    assert rep.n_inactive == rep.mask.size
    assert critical_cone_test(np.zeros(u.shape), u, rep)
    interior = ControlField(np.clip(u.values, -0.9, 0.9), -1, 1)
    assert critical_cone_test(np.random.default_rng(1).standard_normal(u.shape), interior, rep)
    top = u.values.copy()
    top[0, 0] = 1.0
    v = np.zeros(u.shape)
    v[0, 0] = 1.0
    assert not critical_cone_test(v, ControlField(top, -1, 1), rep)
    with pytest.raises(InvalidArgument):
        active_set(spec, ops, u, y, q, -1.0)


def test_active_counts_match_pointwise_scan_at_bounds():
    spec, ops = make_problem(alpha=1e-2, yd=3.0)
    u = ControlField.random(spec, ops, np.random.default_rng(9))
    _, y, q, g = gradient_at(spec, ops, u)
    u = project_box(-g.state_part / spec.alpha, spec.m, spec.M)
    _, y, q, g = gradient_at(spec, ops, u)
    rep = active_set(spec, ops, u, y, q, 1e-8)
    assert rep.n_lower == int(np.sum(g.values > 1e-8))
    assert rep.n_upper == int(np.sum(g.values < -1e-8))


def test_ssc_threshold_arithmetic():
    spec, ops = make_problem(T=0.1, m=-1, M=1, y0=1.0, yd=-1.0, alpha=20.0)
    rep = ssc_threshold(spec)
    assert math.isclose(rep.threshold, 8 * math.exp(0.6), rel_tol=1e-15)
    assert round(rep.threshold, 3) == 14.577
    assert rep.satisfied and math.isclose(rep.delta, 20 - 8 * math.exp(0.6))
    zero = ssc_threshold(spec.replace(y0=np.zeros(ops.n_nodes), yd=np.zeros(ops.n_nodes), alpha=1e-9))
    assert zero.threshold == 0.0 and zero.satisfied


def test_trichotomy_detects_a_non_stationary_point():
    spec, ops = make_problem(alpha=1.0)
    u = ControlField.random(spec, ops, np.random.default_rng(0))
    _, y, q, _ = gradient_at(spec, ops, u)
    audit = trichotomy_audit(spec, ops, u, y, q)
    assert not audit["passed"] and audit["worst"] is not None


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10.0))
def test_gradient_identity_property(seed, alpha):
    spec, ops = make_problem(n_cells=8, n_steps=6, alpha=alpha)
    u = ControlField.random(spec, ops, np.random.default_rng(seed))
    _, _, _, g = gradient_at(spec, ops, u)
    alg = algebraic_gradient(spec, ops, u) / (spec.time.dt * ops.omega_weights[ops.omega_nodes])
    assert np.allclose(alg, g.values, rtol=1e-10, atol=1e-13)
