import numpy as np
import pytest

from conftest import make_problem
from degcontrol import (
    ControlField,
    InvalidArgument,
    OptimizerOptions,
    certify,
    control_inner,
    evaluate,
    initial_control,
    optimize,
    solve_state,
)


def zero_target_problem(**kw):
    spec, ops = make_problem(**kw)
    zero = ControlField.constant(spec, ops, 0.0)
    return spec.replace(yd=solve_state(spec, ops, zero).final), ops, zero


def test_already_stationary_start():
    spec, ops, zero = zero_target_problem(alpha=1.0)
    res = optimize(spec, ops, zero)
    assert res.converged and res.iterations == 0 and res.final_cost == 0.0


def test_recovers_global_minimum_from_random_start():
    spec, ops, zero = zero_target_problem(alpha=1.0)
    opts = OptimizerOptions(stationarity_tol=1e-10, seed=3)
    res = optimize(spec, ops, initial_control(spec, ops, opts), opts)
    assert res.converged and res.final_residual <= 1e-10
    assert res.final_cost < 1e-18
    assert np.sqrt(control_inner(res.control, res.control, ops, spec.time)) < 1e-9
    c = np.array(res.cost_history)
    assert np.all(np.diff(c) <= 0)


def test_iterates_stay_feasible_and_cost_decreases():
    spec, ops = make_problem(alpha=0.05, yd=2.0)
    opts = OptimizerOptions(stationarity_tol=1e-9, seed=1)
    res = optimize(spec, ops, initial_control(spec, ops, opts), opts)
    assert res.converged
    assert res.control.in_box()
    assert res.active_set.n_upper > 0
    assert np.all(np.diff(res.cost_history) <= 0)
    assert len(res.log_rows()) == res.iterations + 1


def test_determinism():
    spec, ops = make_problem(alpha=0.5, yd=0.2)
    opts = OptimizerOptions(seed=11)
    a = optimize(spec, ops, initial_control(spec, ops, opts), opts)
    b = optimize(spec, ops, initial_control(spec, ops, opts), opts)
    assert a.cost_history == b.cost_history
    assert np.array_equal(a.control.values, b.control.values)


def test_zero_budget_is_not_converged():
    spec, ops = make_problem(alpha=0.5, yd=0.2)
    opts = OptimizerOptions(max_iters=0)
    res = optimize(spec, ops, initial_control(spec, ops, opts), opts)
    assert not res.converged and res.status == "max_iters" and res.final_residual > 0
    with pytest.raises(InvalidArgument):
        certify(spec, ops, res)


def test_continuation_stages_recorded():
    spec, ops = make_problem(alpha=0.5, yd=0.2)
    opts = OptimizerOptions(continuation=(10.0, 2.0, 0.1), seed=2)
    res = optimize(spec, ops, initial_control(spec, ops, opts), opts)
    assert res.converged
    assert [s["alpha"] for s in res.stages] == [10.0, 2.0]


def test_certificate_at_planted_zero_cost_minimum():
    spec, ops, zero = zero_target_problem(alpha=2.0)
    res = optimize(spec, ops, zero)
    rec = certify(spec, ops, res, n_hessian=10, n_growth=20)
    # q = 0 here, so each unit-direction quotient is alpha plus a nonnegative term
    assert min(rec.hessian_quotients) >= spec.alpha
    assert rec.growth_all_nonnegative and rec.gamma_hat > 0
    d = rec.to_dict()
    assert d["hessian"]["n_samples"] == 10 and d["trichotomy"]["passed"]


def test_below_threshold_is_flagged_but_runs():
    spec, ops = make_problem(alpha=0.5, yd=0.2)
    # at this small alpha J is flat to round-off below a residual of ~1e-8
    res = optimize(spec, ops, ControlField.constant(spec, ops, 0.0), OptimizerOptions(stationarity_tol=1e-7))
    rec = certify(spec, ops, res, n_hessian=5, n_growth=5)
    assert not rec.ssc.satisfied and rec.coercivity_holds is None


def test_rejects_infeasible_start_and_bad_options():
    spec, ops = make_problem()
    with pytest.raises(InvalidArgument):
        optimize(spec, ops, ControlField(np.full((spec.time.n_steps, ops.n_control), 2.0), -5, 5))
    for bad in (dict(armijo_c=1.5), dict(backtrack_factor=0.0), dict(min_step=2.0), dict(max_iters=-1), dict(stationarity_tol=0)):
        with pytest.raises(InvalidArgument):
            OptimizerOptions(**bad)
