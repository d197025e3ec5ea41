"""Space-time grid functions, the problem container, and the norms used by the estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .geometry import ControlRegion, DiffusionCoefficient

__all__ = [
    "TimeGrid",
    "ControlField",
    "Trajectory",
    "ProblemSpec",
    "norm_L2_space",
    "norm_H1a",
    "norm_CtL2",
    "norm_L2H1a",
    "norm_L2_spacetime",
    "norm_Linf",
    "control_inner",
    "interpolation_error_H1a",
    "write_trajectory_csv",
    "write_control_csv",
    "read_trajectory_csv",
    "read_control_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidArgument(f"horizon T must be positive, got {self.T!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgument(f"n_steps must be an integer >= 1, got {self.n_steps!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def times(self):
        """The ``n_steps + 1`` time levels."""
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def trapezoid_weights(self):
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True, eq=False)
class ControlField:
    """Control values on omega nodes, one row per time step.

    Row ``n`` (0-based) holds the control on the step ``(t_n, t_{n+1}]``;
    the control is piecewise constant in time.
    """

    values: np.ndarray
    m: float
    M: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidArgument("control values must be a 2-D array (steps x omega nodes)")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("control values must be finite")
        if not self.m < self.M:
            raise InvalidArgument(f"box needs m < M, got m={self.m}, M={self.M}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "M", float(self.M))

    @classmethod
    def constant(cls, spec, ops, c):
        return cls(np.full((spec.time.n_steps, ops.n_control), float(c)), spec.m, spec.M)

    @classmethod
    def random(cls, spec, ops, rng, low=None, high=None):
        low = spec.m if low is None else low
        high = spec.M if high is None else high
        v = rng.uniform(low, high, size=(spec.time.n_steps, ops.n_control))
        return cls(v, spec.m, spec.M)

    def with_values(self, values):
        return ControlField(values, self.m, self.M)

    @property
    def shape(self):
        return self.values.shape

    @property
    def sup(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def in_box(self):
        return bool(np.all(self.values >= self.m) and np.all(self.values <= self.M))

    def on_nodes(self, ops):
        """Extend by zero to all mesh nodes: shape (n_steps, n_nodes)."""
        out = np.zeros((self.values.shape[0], ops.n_nodes))
        out[:, ops.omega_nodes] = self.values
        return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Nodal values at every time level; ``role`` tags what the field is."""

    values: np.ndarray
    role: str = "state"

    ROLES = ("state", "adjoint", "linearized", "second_linearized", "source")

    def __post_init__(self):
        y = np.array(self.values, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1:
            raise InvalidArgument("trajectory values must be a non-empty 2-D array")
        if self.role not in self.ROLES:
            raise InvalidArgument(f"unknown trajectory role {self.role!r}")
        y.setflags(write=False)
        object.__setattr__(self, "values", y)

    @property
    def n_levels(self):
        return self.values.shape[0]

    @property
    def final(self):
        return self.values[-1]

    def is_finite(self):
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    coefficient: DiffusionCoefficient
    region: ControlRegion
    time: TimeGrid
    m: float
    M: float
    alpha: float
    y0: np.ndarray
    yd: np.ndarray

    def __post_init__(self):
        if not self.m < self.M:
            raise InvalidArgument(f"box needs m < M, got m={self.m}, M={self.M}")
        if not self.alpha > 0:
            raise InvalidArgument(f"alpha must be positive, got {self.alpha}")
        for name in ("y0", "yd"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise InvalidArgument(f"{name} must be a finite nodal vector")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.y0.shape != self.yd.shape:
            raise InvalidArgument("y0 and yd must live on the same mesh")
        for name in ("m", "M", "alpha"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def beta(self):
        return max(abs(self.m), abs(self.M))

    def replace(self, **changes):
        fields = dict(
            coefficient=self.coefficient,
            region=self.region,
            time=self.time,
            m=self.m,
            M=self.M,
            alpha=self.alpha,
            y0=self.y0,
            yd=self.yd,
        )
        fields.update(changes)
        return ProblemSpec(**fields)

    def check_mesh(self, ops):
        if self.y0.size != ops.n_nodes:
            raise InvalidArgument(
                f"problem data has {self.y0.size} nodes but the mesh has {ops.n_nodes}"
            )


def _vec(v, ops):
    v = np.asarray(v, dtype=float)
    if v.shape != (ops.n_nodes,):
        raise InvalidArgument(f"expected a nodal vector of length {ops.n_nodes}, got shape {v.shape}")
    return v


def _quad(v, A):
    return float(max(v @ (A @ v), 0.0))


def norm_L2_space(v, ops):
    v = _vec(v, ops)
    return np.sqrt(_quad(v, ops.M))


def norm_H1a(v, ops):
    v = _vec(v, ops)
    return np.sqrt(_quad(v, ops.M) + _quad(v, ops.K))


def _levels(traj):
    y = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    if y.ndim != 2 or y.shape[0] == 0:
        raise InvalidArgument("empty or malformed trajectory")
    return y


def norm_CtL2(traj, ops):
    """max over time levels of the spatial L2 norm."""
    y = _levels(traj)
    if y.shape[1] != ops.n_nodes:
        raise InvalidArgument("trajectory does not match the mesh")
    sq = np.einsum("ni,ni->n", y, (ops.M @ y.T).T)
    return float(np.sqrt(np.max(np.maximum(sq, 0.0))))


def norm_L2H1a(traj, ops, time):
    """L2(0,T; H1_a) norm with trapezoidal time weights."""
    y = _levels(traj)
    if y.shape != (time.n_steps + 1, ops.n_nodes):
        raise InvalidArgument("trajectory does not match the space-time grid")
    A = ops.M + ops.K
    sq = np.einsum("ni,ni->n", y, (A @ y.T).T)
    return float(np.sqrt(max(time.trapezoid_weights() @ sq, 0.0)))


def control_inner(v, w, ops, time):
    """Discrete L2(omega_T) inner product of two controls.

    Each time step carries weight ``dt`` and each omega node its nodal
    quadrature weight; this is the pairing under which ``alpha u + y q`` is
    the exact gradient of the discrete cost.
    """
    a = v.values if isinstance(v, ControlField) else np.asarray(v, dtype=float)
    b = w.values if isinstance(w, ControlField) else np.asarray(w, dtype=float)
    expected = (time.n_steps, ops.n_control)
    if a.shape != expected or b.shape != expected:
        raise InvalidArgument(f"controls must have shape {expected}")
    wts = ops.omega_weights[ops.omega_nodes]
    return float(time.dt * np.sum((a * b) @ wts))


def norm_L2_spacetime(field, ops, time):
    """L2 norm over Q (trajectories) or omega_T (controls).

    Trajectories use trapezoidal weights in time and the consistent mass
    matrix; controls use :func:`control_inner`.
    """
    if isinstance(field, ControlField):
        return float(np.sqrt(max(control_inner(field, field, ops, time), 0.0)))
    y = _levels(field)
    if y.shape == (time.n_steps, ops.n_control) and not isinstance(field, Trajectory):
        return float(np.sqrt(max(control_inner(y, y, ops, time), 0.0)))
    if y.shape != (time.n_steps + 1, ops.n_nodes):
        raise InvalidArgument("field does not match the space-time grid")
    sq = np.einsum("ni,ni->n", y, (ops.M @ y.T).T)
    return float(np.sqrt(max(time.trapezoid_weights() @ sq, 0.0)))


def norm_Linf(field):
    if isinstance(field, (ControlField, Trajectory)):
        arr = field.values
    else:
        arr = np.asarray(field, dtype=float)
    if arr.size == 0:
        raise InvalidArgument("L-infinity norm of an empty field")
    return float(np.max(np.abs(arr)))


def interpolation_error_H1a(ops, func, dfunc, n_sub=8):
    """H1_a norm of ``func - I_h func`` by composite Gauss quadrature per cell."""
    nodes = ops.mesh.nodes
    xi, wi = np.polynomial.legendre.leggauss(n_sub)
    total = 0.0
    vals = func(nodes)
    for k in range(ops.mesh.n_cells):
        x0, x1 = nodes[k], nodes[k + 1]
        h = x1 - x0
        x = 0.5 * (x0 + x1) + 0.5 * h * xi
        w = 0.5 * h * wi
        interp = vals[k] + (vals[k + 1] - vals[k]) * (x - x0) / h
        slope = (vals[k + 1] - vals[k]) / h
        e = func(x) - interp
        de = dfunc(x) - slope
        total += np.sum(w * (e * e + ops.coefficient(x) * de * de))
    return float(np.sqrt(total))


def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(path, traj, ops, time):
    y = _levels(traj)
    t = time.times
    x = ops.mesh.nodes
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x", "value"])
        for n in range(y.shape[0]):
            for i in range(y.shape[1]):
                writer.writerow([_fmt(t[n]), _fmt(x[i]), _fmt(y[n, i])])


def write_control_csv(path, v, ops, time):
    """Rows ``(t, x, value)`` with ``t`` the right end of each control step."""
    t = time.times[1:]
    x = ops.mesh.nodes[ops.omega_nodes]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x", "value"])
        for n in range(v.values.shape[0]):
            for i in range(v.values.shape[1]):
                writer.writerow([_fmt(t[n]), _fmt(x[i]), _fmt(v.values[n, i])])


def _read_grid(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "x", "value"]:
            raise InvalidArgument(f"{path}: expected header t,x,value")
        rows = np.array([[float(c) for c in row] for row in reader])
    t = np.unique(rows[:, 0])
    x = np.unique(rows[:, 1])
    if rows.shape[0] != t.size * x.size:
        raise InvalidArgument(f"{path}: rows do not form a full t-x grid")
    return rows[:, 2].reshape(t.size, x.size), t, x


def read_trajectory_csv(path, role="state"):
    values, t, x = _read_grid(path)
    return Trajectory(values, role), t, x


def read_control_csv(path, m, M):
    values, t, x = _read_grid(path)
    return ControlField(values, m, M), t, x
