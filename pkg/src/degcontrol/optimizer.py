"""Projected-gradient descent with Armijo backtracking, and certification of its output."""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .fields import ControlField, control_inner
from .reduced import (
    active_set,
    evaluate,
    gradient_at,
    hessian_form,
    project_box,
    ssc_threshold,
    stationarity_residual,
    trichotomy_audit,
)
from .solvers import DEFAULT_SCHEME

__all__ = [
    "OptimizerOptions",
    "OptimizationResult",
    "CertificationRecord",
    "optimize",
    "certify",
    "initial_control",
]


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 500
    stationarity_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    min_step: float = 1e-12
    seed: int = 0
    continuation: tuple = ()
    active_tau: float = 1e-8

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise InvalidArgument("max_iters must be a nonnegative integer")
        if not self.stationarity_tol > 0:
            raise InvalidArgument("stationarity_tol must be positive")
        for name in ("armijo_c", "backtrack_factor"):
            val = getattr(self, name)
            if not 0 < val < 1:
                raise InvalidArgument(f"{name} must lie in (0, 1), got {val}")
        if not 0 < self.min_step <= self.initial_step:
            raise InvalidArgument("need 0 < min_step <= initial_step")
        object.__setattr__(self, "continuation", tuple(float(a) for a in self.continuation))


@dataclass(eq=False)
class OptimizationResult:
    control: ControlField
    cost_history: list
    residual_history: list
    step_history: list
    iterations: int
    converged: bool
    status: str
    active_set: object
    ssc: object
    wall_time: float
    state: object = None
    adjoint: object = None
    stages: list = field(default_factory=list)

    @property
    def final_cost(self):
        return self.cost_history[-1]

    @property
    def final_residual(self):
        return self.residual_history[-1]

    def log_rows(self):
        """``(iter, cost, residual, step)`` rows; the step of iteration 0 is 0."""
        return [
            (k, c, r, s)
            for k, (c, r, s) in enumerate(
                zip(self.cost_history, self.residual_history, [0.0] + self.step_history)
            )
        ]


def initial_control(spec, ops, options, low=None, high=None):
    """Uniform random control in the box (or ``[low, high]``) from ``options.seed``."""
    rng = np.random.default_rng(options.seed)
    return ControlField.random(spec, ops, rng, low, high)


_NOISE = 64 * np.finfo(float).eps


def _descend(spec, ops, u, options, opts):
    t = spec.time
    J, y, q, g = gradient_at(spec, ops, u, opts)
    res = stationarity_residual(spec, ops, u, y, q, opts)
    costs, residuals, steps = [J], [res], []
    s = options.initial_step
    status = "converged" if res <= options.stationarity_tol else "max_iters"
    k = 0
    while res > options.stationarity_tol and k < options.max_iters:
        trial = s
        while True:
            u_new = project_box(u.values - trial * g.values, spec.m, spec.M)
            d = u_new.values - u.values
            dn2 = control_inner(d, d, ops, t)
            if dn2 == 0.0:
                status = "stalled"
                break
            J_new, y_new = evaluate(spec, ops, u_new, opts)
            wanted = options.armijo_c / trial * dn2
            if J_new <= J - wanted:
                break
            # below round-off the Armijo test is undecidable; settle for no increase
            if wanted <= _NOISE * abs(J) and J_new <= J:
                break
            trial *= options.backtrack_factor
            if trial < options.min_step:
                status = "stalled"
                break
        if status == "stalled":
            break
        _, _, q_new, g_new = gradient_at(spec, ops, u_new, opts)
        dg = control_inner(d, g_new.values - g.values, ops, t)
        s = dn2 / dg if dg > 0 else options.initial_step
        s = min(max(s, options.min_step), options.initial_step)
        u, J, y, q, g = u_new, J_new, y_new, q_new, g_new
        res = stationarity_residual(spec, ops, u, y, q, opts)
        costs.append(J)
        residuals.append(res)
        steps.append(trial)
        k += 1
        if res <= options.stationarity_tol:
            status = "converged"
    return u, y, q, costs, residuals, steps, k, status


def optimize(spec, ops, u0, options=None, opts=None):
    """Minimize the discrete reduced cost over the box, starting from ``u0``.

    With ``options.continuation`` set, the problem is first solved for each
    listed (larger) alpha in turn, warm-starting every stage; the histories
    returned are those of the final stage at ``spec.alpha``.
    """
    options = options or OptimizerOptions()
    opts = opts or DEFAULT_SCHEME
    if not isinstance(u0, ControlField) or not u0.in_box():
        raise InvalidArgument("initial control must be a ControlField inside the box")
    if u0.m != spec.m or u0.M != spec.M:
        u0 = ControlField(u0.values, spec.m, spec.M)
    start = _time.perf_counter()
    stages = []
    u = u0
    for alpha in options.continuation:
        if alpha <= spec.alpha:
            continue
        u, _, _, c, r, _, k, st = _descend(spec.replace(alpha=alpha), ops, u, options, opts)
        stages.append({"alpha": alpha, "iterations": k, "status": st, "cost": c[-1], "residual": r[-1]})
    u, y, q, costs, residuals, steps, k, status = _descend(spec, ops, u, options, opts)
    return OptimizationResult(
        control=u,
        cost_history=costs,
        residual_history=residuals,
        step_history=steps,
        iterations=k,
        converged=status == "converged",
        status=status,
        active_set=active_set(spec, ops, u, y, q, options.active_tau, opts),
        ssc=ssc_threshold(spec),
        wall_time=_time.perf_counter() - start,
        state=y,
        adjoint=q,
        stages=stages,
    )


@dataclass(eq=False)
class CertificationRecord:
    stationarity_residual: float
    trichotomy: dict
    ssc: object
    hessian_tau: float
    hessian_quotients: list
    hessian_min_quotient: float
    coercivity_holds: object
    necessary_condition_holds: bool
    growth_radius: float
    growth_ratios: list
    growth_all_nonnegative: bool
    gamma_hat: float

    def to_dict(self):
        return {
            "stationarity_residual": self.stationarity_residual,
            "trichotomy": self.trichotomy,
            "ssc": self.ssc.to_dict(),
            "hessian": {
                "tau": self.hessian_tau,
                "n_samples": len(self.hessian_quotients),
                "min_rayleigh_quotient": self.hessian_min_quotient,
                "coercivity_holds": self.coercivity_holds,
                "necessary_condition_holds": self.necessary_condition_holds,
            },
            "growth_probe": {
                "radius": self.growth_radius,
                "n_samples": len(self.growth_ratios),
                "min_ratio": min(self.growth_ratios) if self.growth_ratios else None,
                "all_nonnegative": self.growth_all_nonnegative,
                "gamma_hat": self.gamma_hat,
            },
        }


def cone_direction(rng, u, report):
    """Random unit-free direction in the critical cone of ``u``."""
    v = rng.standard_normal(u.values.shape)
    v[u.values == u.m] = np.abs(v[u.values == u.m])
    v[u.values == u.M] = -np.abs(v[u.values == u.M])
    v[report.mask] = 0.0
    return v


def certify(
    spec,
    ops,
    result,
    opts=None,
    n_hessian=50,
    n_growth=200,
    eps_probe=0.1,
    tau=1e-8,
    seed=0,
    tol=1e-8,
    audit_tol=1e-8,
):
    """Second-order certificate for a converged optimizer run.

    Samples ``n_hessian`` unit directions of the tau-critical cone and records
    ``J''(u) v^2``; the coercivity claim is ``J''(u) v^2 >= delta - tol`` with
    ``delta = alpha - threshold`` (only asserted when ``delta > 0``).  The
    growth probe draws ``n_growth`` feasible controls with
    ``0 < |v - u| <= eps_probe`` and fits ``gamma_hat = 2 min (J(v) - J(u)) / |v - u|^2``.
    """
    if not result.converged:
        raise InvalidArgument("certification needs a converged optimizer result")
    opts = opts or DEFAULT_SCHEME
    rng = np.random.default_rng(seed)
    u = result.control
    J_u, y, q, _ = gradient_at(spec, ops, u, opts)
    res = stationarity_residual(spec, ops, u, y, q, opts)
    audit = trichotomy_audit(spec, ops, u, y, q, audit_tol, opts)
    ssc = ssc_threshold(spec)
    report = active_set(spec, ops, u, y, q, tau, opts)

    quotients = []
    for _ in range(n_hessian):
        v = cone_direction(rng, u, report)
        nv = np.sqrt(control_inner(v, v, ops, spec.time))
        if nv == 0.0:
            continue
        vf = ControlField(v / nv, u.m, u.M)
        quotients.append(hessian_form(spec, ops, u, q, vf, vf, y, opts))
    min_q = min(quotients) if quotients else None
    coercive = bool(all(qv >= ssc.delta - tol for qv in quotients)) if ssc.satisfied else None
    necessary = bool(all(qv >= -tol for qv in quotients))

    ratios = []
    for _ in range(n_growth):
        d = project_box(u.values + rng.standard_normal(u.values.shape), u.m, u.M).values - u.values
        nd = np.sqrt(control_inner(d, d, ops, spec.time))
        if nd == 0.0:
            continue
        radius = eps_probe * rng.uniform(0.1, 1.0)
        v = ControlField(u.values + d * (radius / nd), u.m, u.M)
        v = project_box(v, u.m, u.M)
        diff = v.values - u.values
        dist2 = control_inner(diff, diff, ops, spec.time)
        if dist2 == 0.0:
            continue
        J_v, _ = evaluate(spec, ops, v, opts)
        ratios.append((J_v - J_u) / dist2)
    gamma_hat = 2.0 * min(ratios) if ratios else None
    return CertificationRecord(
        stationarity_residual=res,
        trichotomy=audit,
        ssc=ssc,
        hessian_tau=float(tau),
        hessian_quotients=quotients,
        hessian_min_quotient=min_q,
        coercivity_holds=coercive,
        necessary_condition_holds=necessary,
        growth_radius=eps_probe,
        growth_ratios=ratios,
        growth_all_nonnegative=bool(all(r >= 0 for r in ratios)),
        gamma_hat=gamma_hat,
    )
