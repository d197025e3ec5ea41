"""Executable checks of the maximum principles, stability bounds and derivative formulas.

Every check returns a :class:`CheckReport` with a pass/fail flag, the worst
margins seen and, on failure, a witness.  All randomness flows from an
explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .fields import (
    ControlField,
    Trajectory,
    control_inner,
    norm_CtL2,
    norm_L2H1a,
    norm_L2_space,
    norm_Linf,
)
from .reduced import algebraic_gradient, evaluate, gradient_at, hessian_form
from .solvers import DEFAULT_SCHEME, solve_adjoint, solve_state

__all__ = [
    "CheckReport",
    "check_max_principles",
    "gradient_check",
    "hessian_check",
    "lipschitz_probe",
    "convergence_study",
    "fit_slope",
    "oscillating_directions",
]


@dataclass
class CheckReport:
    name: str
    passed: bool
    margins: dict = field(default_factory=dict)
    witness: object = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "check": self.name,
            "status": "pass" if self.passed else "fail",
            "margins": self.margins,
            "witness": self.witness,
            "details": self.details,
        }


def check_max_principles(spec, ops, n_random_controls=1000, seed=0, opts=None, y0=None, neg_tol=1e-12):
    """Positivity and the sup bound ``exp((|v|_inf + 1) T) |y0|_inf`` over random runs.

    Each run draws a control uniformly in the box and, unless ``y0`` is given,
    a nonnegative initial datum ``max(0, N(0, 1))`` at every node (so exact
    zeros sit next to spikes).
    """
    opts = opts or DEFAULT_SCHEME
    rng = np.random.default_rng(seed)
    T = spec.time.T
    worst_min, worst_ratio = math.inf, 0.0
    witness = None
    n_pos = n_sup = 0
    for run in range(n_random_controls):
        v = ControlField.random(spec, ops, rng)
        data = np.maximum(rng.standard_normal(ops.n_nodes), 0.0) if y0 is None else np.asarray(y0, float)
        if np.any(data < 0):
            raise InvalidArgument("maximum-principle runs need nonnegative initial data")
        y = solve_state(spec.replace(y0=data), ops, v, opts).values
        bound = math.exp((v.sup + 1.0) * T) * norm_Linf(data)
        low = float(y.min())
        worst_min = min(worst_min, low)
        top = float(y.max())
        if bound > 0:
            worst_ratio = max(worst_ratio, top / bound)
        pos_bad = low < -neg_tol
        sup_bad = top > bound * (1 + 1e-12) + 1e-300
        n_pos += pos_bad
        n_sup += sup_bad
        if (pos_bad or sup_bad) and witness is None:
            n, i = np.unravel_index(np.argmin(y) if pos_bad else np.argmax(y), y.shape)
            witness = {
                "run": run,
                "kind": "positivity" if pos_bad else "sup_bound",
                "step": int(n),
                "node": int(i),
                "x": float(ops.mesh.nodes[i]),
                "value": float(y[n, i]),
                "bound": bound,
                "control": v.values.tolist(),
                "y0": data.tolist(),
            }
    return CheckReport(
        "max_principle",
        passed=(n_pos == 0 and n_sup == 0),
        margins={"min_value": worst_min, "max_sup_over_bound": worst_ratio},
        witness=witness,
        details={
            "runs": n_random_controls,
            "positivity_violations": n_pos,
            "sup_bound_violations": n_sup,
            "mass": opts.mass,
            "theta": opts.theta,
        },
    )


def fit_slope(eps, errors, floor_factor=100.0):
    """Log-log slope on the descending segment before the round-off plateau.

    The plateau starts at the eps minimizing the error (eps ordered from
    large to small).  Of the points before it, only those with error at least
    ``floor_factor`` times the minimum enter the fit, since points just above
    the floor already carry round-off; the factor is relaxed to 10 and then 3
    when fewer than two points qualify, and as a last resort every point up
    to the minimum is used.  Returns ``(slope, n_points)``.
    """
    eps = np.asarray(eps, float)
    errors = np.asarray(errors, float)
    if np.count_nonzero(errors > 0) < 2:
        return None, 0
    order = np.argsort(-eps)
    eps, errors = eps[order], errors[order]
    k = int(np.argmin(np.where(errors > 0, errors, np.inf)))
    floor = errors[k]
    pick = np.zeros(errors.size, dtype=bool)
    for factor in (floor_factor, 10.0, 3.0):
        pick[:k] = errors[:k] >= factor * floor
        if pick.sum() >= 2:
            break
    else:
        pick[:] = False
        pick[: max(k + 1, 2)] = True
    pick &= errors > 0
    if pick.sum() < 2:
        return None, 0
    slope = np.polyfit(np.log(eps[pick]), np.log(errors[pick]), 1)[0]
    return float(slope), int(pick.sum())


DEFAULT_EPS = tuple(10.0 ** (-k / 2) for k in range(2, 13))


def _check_feasible(spec, u, w, eps_grid):
    emax = max(eps_grid)
    for s in (emax, -emax):
        vals = u.values + s * w.values
        if np.any(vals < spec.m) or np.any(vals > spec.M):
            raise InvalidArgument(f"perturbation u + ({s:g}) w leaves the box")


def gradient_check(spec, ops, u, w, eps_grid=DEFAULT_EPS, opts=None, slope_range=(1.8, 2.2)):
    """Central finite differences of the reduced cost against ``<grad J(u), w>``.

    Also compares the pointwise gradient field with the sparse algebraic
    gradient (dual-path check).
    """
    opts = opts or DEFAULT_SCHEME
    _check_feasible(spec, u, w, eps_grid)
    J, y, q, g = gradient_at(spec, ops, u, opts)
    dJ = g.pair(w, ops, spec.time)
    errors = []
    for eps in eps_grid:
        Jp, _ = evaluate(spec, ops, u.with_values(u.values + eps * w.values), opts)
        Jm, _ = evaluate(spec, ops, u.with_values(u.values - eps * w.values), opts)
        fd = (Jp - Jm) / (2 * eps)
        errors.append(abs(fd - dJ) / abs(dJ) if dJ != 0 else abs(fd - dJ))
    alg = algebraic_gradient(spec, ops, u, opts)
    riesz = alg / (spec.time.dt * ops.omega_weights[ops.omega_nodes])
    diff = riesz - g.values
    scale = math.sqrt(control_inner(g.values, g.values, ops, spec.time))
    dual = math.sqrt(control_inner(diff, diff, ops, spec.time)) / scale if scale > 0 else 0.0
    trivial = not np.any(w.values)
    slope, n_fit = fit_slope(eps_grid, errors)
    if trivial:
        passed = all(e == 0 for e in errors) and dual < 1e-10
    else:
        passed = (
            min(errors) < 1e-6
            and slope is not None
            and slope_range[0] <= slope <= slope_range[1]
            and dual < 1e-10
        )
    return CheckReport(
        "gradient",
        passed=bool(passed),
        margins={"min_relative_error": min(errors), "slope": slope, "dual_path_relative": dual},
        witness=None if passed else {"eps": list(eps_grid), "errors": errors},
        details={"directional_derivative": dJ, "eps": list(eps_grid), "errors": errors, "n_fit": n_fit},
    )


def oscillating_directions(spec, ops, n):
    """Sign patterns ``sign(sin(2^k pi x)) sign(sin(2^k pi t / T))``, k = 1..n.

    A discrete stand-in for a weakly-null sequence of unit controls.
    """
    x = ops.mesh.nodes[ops.omega_nodes]
    t = 0.5 * (spec.time.times[1:] + spec.time.times[:-1]) / spec.time.T
    out = []
    for k in range(1, n + 1):
        sx = np.where(np.sin(2**k * np.pi * (x + 1) / 2 + 0.25) >= 0, 1.0, -1.0)
        st = np.where(np.sin(2**k * np.pi * t + 0.25) >= 0, 1.0, -1.0)
        v = st[:, None] * sx[None, :]
        v /= math.sqrt(control_inner(v, v, ops, spec.time))
        out.append(ControlField(v, spec.m, spec.M))
    return out


def hessian_check(spec, ops, u, directions, eps_grid=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4), opts=None, n_weak=5, rtol=1e-4):
    """Symmetry, second-difference agreement and the weak-sequence lower bound."""
    opts = opts or DEFAULT_SCHEME
    J, y, q, _ = gradient_at(spec, ops, u, opts)
    asym = 0.0
    for a, b in zip(directions, directions[1:] + directions[:1]):
        asym = max(asym, abs(hessian_form(spec, ops, u, q, a, b, y, opts) - hessian_form(spec, ops, u, q, b, a, y, opts)))
    fd_rows = []
    fd_ok = True
    for w in directions:
        _check_feasible(spec, u, w, eps_grid)
        H = hessian_form(spec, ops, u, q, w, w, y, opts)
        errs = []
        for eps in eps_grid:
            Jp, _ = evaluate(spec, ops, u.with_values(u.values + eps * w.values), opts)
            Jm, _ = evaluate(spec, ops, u.with_values(u.values - eps * w.values), opts)
            sd = (Jp - 2 * J + Jm) / eps**2
            errs.append(abs(sd - H) / abs(H) if H != 0 else abs(sd - H))
        k = int(np.argmin(errs))
        slope, _ = fit_slope(eps_grid, errs)
        fd_rows.append({"H": H, "calibrated_eps": eps_grid[k], "error": errs[k], "slope": slope})
        fd_ok &= errs[k] <= rtol
    deficits = []
    for v in oscillating_directions(spec, ops, n_weak):
        H = hessian_form(spec, ops, u, q, v, v, y, opts)
        deficits.append(spec.alpha - H)  # |v| = 1
    weak_ok = abs(deficits[-1]) <= max(0.5 * abs(deficits[0]), 1e-10)
    passed = asym == 0.0 and fd_ok and weak_ok
    return CheckReport(
        "hessian",
        passed=bool(passed),
        margins={
            "max_asymmetry": asym,
            "max_second_difference_error": max((r["error"] for r in fd_rows), default=0.0),
            "weak_sequence_final_deficit": deficits[-1],
        },
        witness=None if passed else {"fd": fd_rows, "deficits": deficits},
        details={"fd": fd_rows, "weak_sequence_deficits": deficits, "Lambda": spec.alpha},
    )


def _pair_norms(a, b, ops, time):
    d = Trajectory(a.values - b.values, a.role)
    return norm_CtL2(d, ops), norm_L2H1a(d, ops, time)


def lipschitz_probe(spec, ops, n_pairs=100, seed=0, opts=None, pairs=None):
    """Lipschitz ratios of the control-to-state and control-to-adjoint maps.

    Pairs are drawn uniformly in the box unless ``pairs`` lists them
    explicitly.  Identical pairs are skipped.

    State ratios are asserted against ``2 exp(2 (beta + 1) T) |y0|_inf``.  The
    adjoint ratios are reported against the majorant obtained by chaining the
    same estimates through the adjoint equation (reported, not asserted).
    """
    opts = opts or DEFAULT_SCHEME
    rng = np.random.default_rng(seed)
    beta, T = spec.beta, spec.time.T
    y0s, yds = norm_Linf(spec.y0), norm_Linf(spec.yd)
    grow = math.exp((beta + 1) * T)
    state_major = 2 * grow**2 * y0s
    adj_major = 2 * grow * (state_major + grow * (y0s + yds))
    ratios, adj_ratios, skipped = [], [], 0
    worst = None
    if pairs is None:
        pairs = ((ControlField.random(spec, ops, rng), ControlField.random(spec, ops, rng)) for _ in range(n_pairs))
    else:
        pairs = list(pairs)
        n_pairs = len(pairs)
    for k, (v1, v2) in enumerate(pairs):
        d = v1.values - v2.values
        dn = math.sqrt(control_inner(d, d, ops, spec.time))
        if dn == 0.0:
            skipped += 1
            continue
        y1, y2 = solve_state(spec, ops, v1, opts), solve_state(spec, ops, v2, opts)
        q1 = solve_adjoint(spec, ops, v1, y1.final - spec.yd, opts)
        q2 = solve_adjoint(spec, ops, v2, y2.final - spec.yd, opts)
        c, l2 = _pair_norms(y1, y2, ops, spec.time)
        ratio = (c + l2) / dn
        ratios.append(ratio)
        cq, l2q = _pair_norms(q1, q2, ops, spec.time)
        adj_ratios.append((cq + l2q) / dn)
        if ratio > state_major and worst is None:
            worst = {"pair": k, "ratio": ratio, "v1": v1.values.tolist(), "v2": v2.values.tolist()}
    max_ratio = max(ratios) if ratios else 0.0
    passed = max_ratio <= state_major and all(map(math.isfinite, adj_ratios))
    return CheckReport(
        "lipschitz",
        passed=bool(passed),
        margins={
            "max_state_ratio": max_ratio,
            "state_majorant": state_major,
            "max_adjoint_ratio": max(adj_ratios) if adj_ratios else 0.0,
            "adjoint_majorant": adj_major,
        },
        witness=worst,
        details={"pairs": n_pairs, "skipped": skipped},
    )


def _restrict_to(coarse_ops, coarse_time, fine_ops, fine_time, y):
    xi = np.searchsorted(fine_ops.mesh.nodes, coarse_ops.mesh.nodes)
    if not np.allclose(fine_ops.mesh.nodes[np.minimum(xi, fine_ops.n_nodes - 1)], coarse_ops.mesh.nodes, atol=1e-14):
        raise InvalidArgument("refinement levels are not nested")
    stride = fine_time.n_steps // coarse_time.n_steps
    return y[::stride][:, xi]


def convergence_study(setup, refinement_levels, reference=None, opts=None, min_order=0.9, seed=0):
    """Errors in C([0,T]; L2) under simultaneous halving of h and dt.

    ``reference`` is either ``None`` (the finest level is the reference) or a
    callable ``(t, x) -> y`` evaluated on each level's grid.  Observed orders
    use the closed-form errors when a reference callable is given, otherwise
    the successive differences between neighbouring levels.
    """
    opts = opts or DEFAULT_SCHEME
    levels = sorted(int(k) for k in refinement_levels)
    if len(levels) < 3:
        raise InvalidArgument("a convergence study needs at least three levels")
    runs = []
    for lvl in levels:
        s = setup.refined(lvl)
        spec, ops = s.build(opts, seed)
        v = s.control_field(spec, ops, seed) if s.control is not None else ControlField.constant(spec, ops, 0.0)
        runs.append((spec, ops, solve_state(spec, ops, v, opts).values))

    def err(k, ref):
        spec, ops, y = runs[k]
        return norm_CtL2(y - ref, ops)

    if reference is not None:
        errors = []
        for spec, ops, y in runs:
            ref = reference(spec.time.times[:, None], ops.mesh.nodes[None, :])
            errors.append(norm_CtL2(y - ref, ops))
        proxies = errors
    else:
        fspec, fops, fy = runs[-1]
        errors = [err(k, _restrict_to(runs[k][1], runs[k][0].time, fops, fspec.time, fy)) for k in range(len(runs) - 1)]
        proxies = [
            err(k, _restrict_to(runs[k][1], runs[k][0].time, runs[k + 1][1], runs[k + 1][0].time, runs[k + 1][2]))
            for k in range(len(runs) - 1)
        ]
    orders = [
        math.log2(a / b) if a > 0 and b > 0 else None for a, b in zip(proxies, proxies[1:])
    ]
    all_zero = all(e == 0 for e in errors)
    monotone = all(b < a for a, b in zip(errors, errors[1:])) or all_zero
    order_ok = all_zero or all(o is not None and o >= min_order for o in orders)
    passed = monotone and order_ok
    return CheckReport(
        "convergence",
        passed=bool(passed),
        margins={"min_order": min((o for o in orders if o is not None), default=None)},
        witness=None if passed else {"errors": errors, "orders": orders},
        details={
            "levels": levels,
            "n_cells": [r[1].mesh.n_cells for r in runs],
            "n_steps": [r[0].time.n_steps for r in runs],
            "errors": errors,
            "orders": orders,
            "reference": "closed_form" if reference is not None else "finest_level",
        },
    )
