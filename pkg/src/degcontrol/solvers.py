"""Theta-scheme time stepping for the state, adjoint and linearized equations.

Every forward solve marches

    (M + theta dt L_n) z_n = (M - (1 - theta) dt L_n) z_{n-1} + s_n,
    L_n = K_a + r M - B(v_n),

in the shifted variable ``z = exp(-r t) y`` (``r = shift_r``, zero by default)
and returns ``y``.  ``B(v)`` is the bilinear control operator with nodal
quadrature on omega, ``B(v) = diag(omega_weights * v)``.  The adjoint march is
the transpose of this scheme, so the gradient it produces is the exact
gradient of the discrete cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .errors import InvalidArgument, StepFailure
from .fields import ControlField, Trajectory

__all__ = [
    "SchemeOptions",
    "solve_state",
    "solve_state_inhomogeneous",
    "solve_adjoint",
    "solve_linearized",
    "solve_second_linearized",
    "stage_values",
]


@dataclass(frozen=True)
class SchemeOptions:
    theta: float = 1.0
    mass: str = "lumped"
    shift_r: float = 0.0
    linear_solver_tol: float = 1e-10

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise InvalidArgument(f"theta must lie in [1/2, 1], got {self.theta}")
        if self.mass not in ("consistent", "lumped"):
            raise InvalidArgument(f"mass must be 'consistent' or 'lumped', got {self.mass!r}")
        if not self.shift_r >= 0:
            raise InvalidArgument(f"shift_r must be nonnegative, got {self.shift_r}")
        if not self.linear_solver_tol > 0:
            raise InvalidArgument("linear_solver_tol must be positive")


DEFAULT_SCHEME = SchemeOptions()


class _Stepper:
    """Tridiagonal step matrices for one (spec, ops, opts) triple."""

    def __init__(self, spec, ops, opts):
        spec.check_mesh(ops)
        self.spec, self.ops, self.opts = spec, ops, opts
        self.dt = spec.time.dt
        self.N = spec.time.n_steps
        self.t = spec.time.times
        self.md, self.me = ops.tridiagonal("M", opts.mass)
        kd, ke = ops.tridiagonal("K")
        r = opts.shift_r
        self.ld = kd + r * self.md
        self.le = ke + r * self.me
        self.omega_w = np.asarray(ops.omega_weights)

    def check_control(self, v, name="control"):
        if not isinstance(v, ControlField):
            raise InvalidArgument(f"{name} must be a ControlField")
        expected = (self.N, self.ops.n_control)
        if v.values.shape != expected:
            raise InvalidArgument(f"{name} has shape {v.values.shape}, expected {expected}")

    def check_admissible(self, v):
        self.check_control(v)
        m, M = self.spec.m, self.spec.M
        if v.values.size and (v.values.min() < m or v.values.max() > M):
            raise InvalidArgument(
                f"control leaves the box [{m:g}, {M:g}] (range {v.values.min():g}..{v.values.max():g})"
            )
        prod = self.dt * v.sup
        if not prod < 1.0:
            raise InvalidArgument(
                f"step guard violated: dt * ||v||_inf = {self.dt:g} * {v.sup:g} = {prod:g} >= 1"
            )

    def step_matrices(self, vnodes):
        th, dt = self.opts.theta, self.dt
        ld = self.ld - self.omega_w * vnodes
        a = (self.md + th * dt * ld, self.me + th * dt * self.le)
        c = (self.md - (1.0 - th) * dt * ld, self.me - (1.0 - th) * dt * self.le)
        return a, c

    @staticmethod
    def matvec(tri, x):
        d, e = tri
        out = d * x
        out[:-1] += e * x[1:]
        out[1:] += e * x[:-1]
        return out

    def solve(self, tri, rhs, step):
        d, e = tri
        ab = np.zeros((3, d.size))
        ab[0, 1:] = e
        ab[1] = d
        ab[2, :-1] = e
        try:
            x = solve_banded((1, 1), ab, rhs, check_finite=False)
        except (LinAlgError, ValueError) as exc:
            raise StepFailure(f"singular step matrix: {exc}", step) from exc
        if not np.all(np.isfinite(x)):
            raise StepFailure("non-finite values produced", step)
        res = np.max(np.abs(self.matvec(tri, x) - rhs)) if x.size else 0.0
        scale = np.max(np.abs(rhs)) + np.max(np.abs(d) + 2 * np.max(np.abs(e))) * np.max(np.abs(x))
        if not res <= self.opts.linear_solver_tol * max(scale, np.finfo(float).tiny):
            raise StepFailure(f"linear solve residual {res:g} above tolerance", step)
        return x

    def forward(self, vnodes, z0, sources=None):
        """Levels ``z_0..z_N``; ``sources[n-1]`` is added to step ``n``."""
        z = np.empty((self.N + 1, z0.size))
        z[0] = z0
        for n in range(1, self.N + 1):
            a, c = self.step_matrices(vnodes[n - 1])
            rhs = self.matvec(c, z[n - 1])
            if sources is not None:
                rhs = rhs + sources[n - 1]
            z[n] = self.solve(a, rhs, n)
        return z

    def multipliers(self, vnodes, terminal):
        """Discrete Lagrange multipliers ``p_1..p_N`` (rows 0..N-1).

        ``terminal`` is the derivative of the cost with respect to ``z_N``.
        The step matrices are symmetric, so their transposes are themselves.
        """
        p = np.empty((self.N, terminal.size))
        a, c = self.step_matrices(vnodes[self.N - 1])
        p[self.N - 1] = self.solve(a, terminal, self.N)
        for n in range(self.N - 1, 0, -1):
            rhs = self.matvec(c, p[n])
            a, c = self.step_matrices(vnodes[n - 1])
            p[n - 1] = self.solve(a, rhs, n)
        return p

    def to_z(self, y):
        return y * np.exp(-self.opts.shift_r * self.t)[:, None]

    def from_z(self, z):
        return z * np.exp(self.opts.shift_r * self.t)[:, None]

    def stage_z(self, y):
        """``theta z_n + (1 - theta) z_{n-1}`` for n = 1..N, from y-levels."""
        z = self.to_z(y)
        th = self.opts.theta
        return th * z[1:] + (1.0 - th) * z[:-1]


def _traj_values(traj, stepper, name):
    y = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    expected = (stepper.N + 1, stepper.ops.n_nodes)
    if y.shape != expected:
        raise InvalidArgument(f"{name} has shape {y.shape}, expected {expected}")
    return y


def stage_values(spec, y, opts=None):
    """Time-stage values ``Y_n`` (n = 1..N) paired with the control on step n.

    ``Y_n = theta y_n + (1 - theta) exp(r dt) y_{n-1}``; for implicit Euler
    without shift this is simply ``y_n``.
    """
    opts = opts or DEFAULT_SCHEME
    y = y.values if isinstance(y, Trajectory) else np.asarray(y, dtype=float)
    th, r, dt = opts.theta, opts.shift_r, spec.time.dt
    return th * y[1:] + (1.0 - th) * np.exp(r * dt) * y[:-1]


def solve_state(spec, ops, v, opts=None):
    """State trajectory ``y = G(v)`` starting from ``spec.y0``."""
    opts = opts or DEFAULT_SCHEME
    st = _Stepper(spec, ops, opts)
    st.check_admissible(v)
    z = st.forward(v.on_nodes(ops), spec.y0)
    return Trajectory(st.from_z(z), "state")


def solve_state_inhomogeneous(spec, ops, v, f, opts=None, p0=None):
    """State equation with a source ``f`` given at every time level.

    The source enters step ``n`` as ``dt M (theta f_n + (1 - theta) f_{n-1})``.
    ``p0`` defaults to ``spec.y0``.
    """
    opts = opts or DEFAULT_SCHEME
    st = _Stepper(spec, ops, opts)
    st.check_admissible(v)
    f = _traj_values(f, st, "source")
    p0 = spec.y0 if p0 is None else np.asarray(p0, dtype=float)
    if p0.shape != (ops.n_nodes,):
        raise InvalidArgument("initial datum does not match the mesh")
    fz = st.stage_z(f)
    mass = ops.mass(opts.mass)
    sources = st.dt * (mass @ fz.T).T
    z = st.forward(v.on_nodes(ops), p0, sources)
    return Trajectory(st.from_z(z), "state")


def solve_adjoint(spec, ops, u, yT, opts=None):
    """Adjoint trajectory with terminal value ``yT = y(T; u) - y^d``.

    Level ``n - 1`` of the result holds the multiplier of step ``n`` (scaled
    back from the shifted frame), so the exact discrete gradient on step
    ``n`` reads ``alpha u_n + Y_n q_{n-1}`` with ``Y_n`` from
    :func:`stage_values`.  Level N holds ``yT`` itself.
    """
    opts = opts or DEFAULT_SCHEME
    st = _Stepper(spec, ops, opts)
    st.check_admissible(u)
    yT = np.asarray(yT, dtype=float)
    if yT.shape != (ops.n_nodes,):
        raise InvalidArgument("terminal datum does not match the mesh")
    T, r = spec.time.T, opts.shift_r
    mass = ops.mass(opts.mass)
    p = st.multipliers(u.on_nodes(ops), np.exp(r * T) * (mass @ yT))
    q = np.empty((st.N + 1, ops.n_nodes))
    q[:-1] = p * np.exp(-r * st.t[1:])[:, None]
    q[-1] = yT
    return Trajectory(q, "adjoint")


def solve_linearized(spec, ops, u, w, y, opts=None):
    """Directional derivative ``rho = G'(u) w`` of the discrete control-to-state map."""
    opts = opts or DEFAULT_SCHEME
    st = _Stepper(spec, ops, opts)
    st.check_admissible(u)
    st.check_control(w, "direction")
    y = _traj_values(y, st, "state")
    sources = st.dt * st.omega_w * w.on_nodes(ops) * st.stage_z(y)
    z = st.forward(u.on_nodes(ops), np.zeros(ops.n_nodes), sources)
    return Trajectory(st.from_z(z), "linearized")


def solve_second_linearized(spec, ops, u, w, h, rho_w, rho_h, opts=None):
    """Second derivative ``z = G''(u)[w, h]`` given ``rho_w = G'(u)w``, ``rho_h = G'(u)h``."""
    opts = opts or DEFAULT_SCHEME
    st = _Stepper(spec, ops, opts)
    st.check_admissible(u)
    st.check_control(w, "direction w")
    st.check_control(h, "direction h")
    rw = _traj_values(rho_w, st, "rho_w")
    rh = _traj_values(rho_h, st, "rho_h")
    wn, hn = w.on_nodes(ops), h.on_nodes(ops)
    sources = st.dt * st.omega_w * (wn * st.stage_z(rh) + hn * st.stage_z(rw))
    z = st.forward(u.on_nodes(ops), np.zeros(ops.n_nodes), sources)
    return Trajectory(st.from_z(z), "second_linearized")
