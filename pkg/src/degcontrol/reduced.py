"""Reduced cost, gradient, Hessian form, box projection and second-order machinery.

All quantities are those of the *discrete* problem: the gradient returned by
:func:`reduced_gradient` is the Riesz representative, under
:func:`~degcontrol.fields.control_inner`, of the exact derivative of
:func:`cost` composed with the discrete control-to-state map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InvalidArgument
from .fields import ControlField, Trajectory, control_inner, norm_L2_spacetime, norm_Linf
from .solvers import (
    DEFAULT_SCHEME,
    solve_adjoint,
    solve_linearized,
    solve_state,
    stage_values,
)

__all__ = [
    "GradientField",
    "ActiveSetReport",
    "SSCReport",
    "cost",
    "evaluate",
    "reduced_gradient",
    "algebraic_gradient",
    "hessian_form",
    "project_box",
    "stationarity_residual",
    "active_set",
    "critical_cone_test",
    "ssc_threshold",
    "trichotomy_audit",
    "gradient_at",
]


@dataclass(frozen=True, eq=False)
class GradientField:
    """``alpha u + y q`` on omega_T, split into its two contributions."""

    values: np.ndarray
    regularization: np.ndarray
    state_part: np.ndarray

    def pair(self, w, ops, time):
        return control_inner(self.values, w, ops, time)


@dataclass(frozen=True, eq=False)
class ActiveSetReport:
    tau: float
    mask: np.ndarray
    multiplier: np.ndarray
    n_lower: int
    n_upper: int
    n_inactive: int

    def summary(self):
        return {
            "tau": self.tau,
            "n_lower": self.n_lower,
            "n_upper": self.n_upper,
            "n_inactive": self.n_inactive,
            "n_total": int(self.mask.size),
        }


@dataclass(frozen=True)
class SSCReport:
    beta: float
    T: float
    y0_sup: float
    yd_sup: float
    threshold: float
    alpha: float
    satisfied: bool
    delta: float

    def to_dict(self):
        return {
            "beta": self.beta,
            "T": self.T,
            "y0_sup": self.y0_sup,
            "yd_sup": self.yd_sup,
            "threshold": self.threshold,
            "alpha": self.alpha,
            "satisfied": self.satisfied,
            "delta": self.delta,
        }


def _state_values(y):
    return y.values if isinstance(y, Trajectory) else np.asarray(y, dtype=float)


def cost(spec, ops, v, y, opts=None):
    """``1/2 |y(T) - y^d|^2 + alpha/2 |v|^2_{L2(omega_T)}`` for a solved state."""
    opts = opts or DEFAULT_SCHEME
    yv = _state_values(y)
    if yv.shape != (spec.time.n_steps + 1, ops.n_nodes):
        raise InvalidArgument("state trajectory does not match the space-time grid")
    e = yv[-1] - spec.yd
    mass = ops.mass(opts.mass)
    misfit = 0.5 * float(e @ (mass @ e))
    return misfit + 0.5 * spec.alpha * control_inner(v, v, ops, spec.time)


def evaluate(spec, ops, v, opts=None):
    """Solve the state equation and return ``(J(v), y)``."""
    y = solve_state(spec, ops, v, opts)
    return cost(spec, ops, v, y, opts), y


def _restrict(arr, ops):
    return arr[:, ops.omega_nodes]


def reduced_gradient(spec, ops, u, y, q, opts=None):
    """Pointwise gradient field ``alpha u + Y q`` on omega_T.

    Step ``n`` pairs the stage value ``Y_n`` of the state with adjoint level
    ``n - 1`` (see :func:`~degcontrol.solvers.solve_adjoint`).
    """
    opts = opts or DEFAULT_SCHEME
    yv, qv = _state_values(y), _state_values(q)
    shape = (spec.time.n_steps + 1, ops.n_nodes)
    if yv.shape != shape or qv.shape != shape:
        raise InvalidArgument("state/adjoint trajectories do not match the grid")
    if u.values.shape != (spec.time.n_steps, ops.n_control):
        raise InvalidArgument("control does not match the grid")
    reg = spec.alpha * u.values
    state_part = _restrict(stage_values(spec, yv, opts) * qv[:-1], ops)
    return GradientField(reg + state_part, reg, state_part)


def algebraic_gradient(spec, ops, u, opts=None):
    """Coordinate gradient ``dJ/du[n, k]`` from a sparse Lagrangian computation.

    Independent of the banded solvers: builds every step matrix as a sparse
    matrix, solves forward, then solves with the explicit transposes.  Divide
    by ``dt * omega_weight_k`` to compare with :func:`reduced_gradient`.
    """
    opts = opts or DEFAULT_SCHEME
    N, dt, th, r = spec.time.n_steps, spec.time.dt, opts.theta, opts.shift_r
    mass = ops.mass(opts.mass).tocsc()
    L0 = (ops.K + r * mass).tocsc()
    wts = np.asarray(ops.omega_weights)
    vn = u.on_nodes(ops)
    A, C = [], []
    for n in range(N):
        L = L0 - sp.diags(wts * vn[n])
        A.append((mass + th * dt * L).tocsc())
        C.append((mass - (1 - th) * dt * L).tocsc())
    z = np.empty((N + 1, ops.n_nodes))
    z[0] = spec.y0
    for n in range(N):
        z[n + 1] = splu(A[n]).solve(C[n] @ z[n])
    eT = math.exp(r * spec.time.T)
    e = eT * z[-1] - spec.yd
    p = np.empty((N, ops.n_nodes))
    p[N - 1] = splu(A[N - 1].T.tocsc()).solve(eT * (mass.T @ e))
    for n in range(N - 2, -1, -1):
        p[n] = splu(A[n].T.tocsc()).solve(C[n + 1].T @ p[n + 1])
    # dA_n/dv_{n,k} = -theta dt w_k e_k e_k^T ; dC_n/dv_{n,k} = (1 - theta) dt w_k e_k e_k^T
    stage = th * z[1:] + (1 - th) * z[:-1]
    grad_nodes = dt * wts * p * stage
    grad = grad_nodes[:, ops.omega_nodes]
    grad += spec.alpha * dt * wts[ops.omega_nodes] * u.values
    return grad


def hessian_form(spec, ops, u, q, w, h, y=None, opts=None):
    """Second derivative ``J''(u)[w, h]`` of the discrete reduced cost.

    ``int_{omega_T} (h G'(u)w + w G'(u)h) q + int (G'(u)w)(T) (G'(u)h)(T)
    + alpha int_{omega_T} h w`` with the discrete pairings.  Each term is
    evaluated symmetrically, so swapping ``w`` and ``h`` gives a bitwise
    identical value.
    """
    opts = opts or DEFAULT_SCHEME
    if y is None:
        y = solve_state(spec, ops, u, opts)
    rho_w = solve_linearized(spec, ops, u, w, y, opts).values
    rho_h = solve_linearized(spec, ops, u, h, y, opts).values
    qv = _state_values(q)
    qn = _restrict(qv[:-1], ops)
    sw = _restrict(stage_values(spec, rho_w, opts), ops)
    sh = _restrict(stage_values(spec, rho_h, opts), ops)

    def coupling(a, s):
        return control_inner(a.values * qn, s, ops, spec.time)

    mixed = coupling(w, sh) + coupling(h, sw)
    mass = ops.mass(opts.mass)
    a, b = rho_w[-1], rho_h[-1]
    terminal = 0.5 * (float(a @ (mass @ b)) + float(b @ (mass @ a)))
    reg = spec.alpha * control_inner(w, h, ops, spec.time)
    return mixed + terminal + reg


def project_box(raw, m, M):
    """Pointwise clamp to ``[m, M]``."""
    if not m < M:
        raise InvalidArgument(f"box needs m < M, got m={m}, M={M}")
    values = raw.values if isinstance(raw, ControlField) else np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidArgument("cannot project non-finite values")
    return ControlField(np.minimum(np.maximum(values, m), M), m, M)


def stationarity_residual(spec, ops, u, y, q, opts=None):
    """``|u - P_[m,M](-(y q) / alpha)|`` in L2(omega_T); zero at stationary points."""
    if not spec.alpha > 0:
        raise InvalidArgument("alpha must be positive")
    g = reduced_gradient(spec, ops, u, y, q, opts)
    target = project_box(-g.state_part / spec.alpha, spec.m, spec.M)
    return norm_L2_spacetime(u.values - target.values, ops, spec.time)


def active_set(spec, ops, u, y, q, tau, opts=None):
    """Strongly active set ``{|alpha u + y q| > tau}`` and its classification.

    A positive multiplier marks the lower bound as active, a negative one the
    upper bound.
    """
    if not tau >= 0:
        raise InvalidArgument("tau must be nonnegative")
    g = reduced_gradient(spec, ops, u, y, q, opts).values
    mask = np.abs(g) > tau
    n_lower = int(np.count_nonzero(mask & (g > 0)))
    n_upper = int(np.count_nonzero(mask & (g < 0)))
    return ActiveSetReport(
        tau=float(tau),
        mask=mask,
        multiplier=g,
        n_lower=n_lower,
        n_upper=n_upper,
        n_inactive=int(mask.size - n_lower - n_upper),
    )


def critical_cone_test(v, u, report):
    """Whether ``v`` lies in the tau-critical cone of ``u``."""
    vv = v.values if isinstance(v, ControlField) else np.asarray(v, dtype=float)
    if vv.shape != u.values.shape or report.mask.shape != vv.shape:
        raise InvalidArgument("direction, control and active set must share a shape")
    at_lower = u.values == u.m
    at_upper = u.values == u.M
    ok = np.all(vv[at_lower] >= 0) and np.all(vv[at_upper] <= 0) and np.all(vv[report.mask] == 0)
    return bool(ok)


def ssc_threshold(spec):
    """``4 exp(3 (beta + 1) T) (|y0|_inf + |y^d|_inf)`` and the margin ``alpha - threshold``."""
    y0s, yds = norm_Linf(spec.y0), norm_Linf(spec.yd)
    beta, T = spec.beta, spec.time.T
    thr = 4.0 * math.exp(3.0 * (beta + 1.0) * T) * (y0s + yds)
    delta = spec.alpha - thr
    return SSCReport(
        beta=beta,
        T=T,
        y0_sup=y0s,
        yd_sup=yds,
        threshold=thr,
        alpha=spec.alpha,
        satisfied=bool(delta > 0),
        delta=delta,
    )


def trichotomy_audit(spec, ops, u, y, q, tol=1e-8, opts=None):
    """Check the pointwise sign conditions of first-order stationarity.

    Each omega_T node must satisfy exactly one of: multiplier > tol with
    ``u = m``; ``|multiplier| <= tol``; multiplier < -tol with ``u = M``.
    """
    g = reduced_gradient(spec, ops, u, y, q, opts).values
    uv = u.values
    lower = (g > tol) & (uv == spec.m)
    middle = np.abs(g) <= tol
    upper = (g < -tol) & (uv == spec.M)
    branches = lower.astype(int) + middle.astype(int) + upper.astype(int)
    bad = branches != 1
    worst = None
    if np.any(bad):
        idx = np.argwhere(bad)
        k = int(np.argmax(np.abs(g[bad])))
        n, i = (int(c) for c in idx[k])
        worst = {"step": n, "omega_node": i, "u": float(uv[n, i]), "multiplier": float(g[n, i])}
    return {
        "passed": not bool(np.any(bad)),
        "tol": tol,
        "n_lower": int(lower.sum()),
        "n_interior": int(middle.sum()),
        "n_upper": int(upper.sum()),
        "n_violations": int(bad.sum()),
        "worst": worst,
    }


def gradient_at(spec, ops, u, opts=None):
    """Convenience: ``(J, y, q, GradientField)`` at ``u``."""
    J, y = evaluate(spec, ops, u, opts)
    q = solve_adjoint(spec, ops, u, y.final - spec.yd, opts)
    return J, y, q, reduced_gradient(spec, ops, u, y, q, opts)
