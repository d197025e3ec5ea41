"""Mesh-independent problem description that can be built at any resolution.

Initial data, targets and controls are described by small dictionaries (the
same ones the JSON run configuration uses), so a problem can be rebuilt on a
refined mesh for convergence studies and parameter sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument
from .fields import ControlField, ProblemSpec, TimeGrid
from .geometry import ControlRegion, DiffusionCoefficient, assemble, build_mesh
from .solvers import solve_state

__all__ = ["ProblemSetup", "nodal_data", "control_from_spec", "coefficient_from_spec"]


def coefficient_from_spec(desc):
    kind = desc.get("kind")
    if kind == "budyko":
        _only(desc, {"kind"})
        return DiffusionCoefficient.budyko()
    if kind == "power":
        _only(desc, {"kind", "p"})
        return DiffusionCoefficient.power(desc["p"])
    if kind == "tabulated":
        _only(desc, {"kind", "x", "a"})
        return DiffusionCoefficient.tabulated(desc["x"], desc["a"])
    raise InvalidArgument(f"unknown coefficient kind {kind!r}")


def _only(desc, allowed, required=None):
    extra = set(desc) - set(allowed)
    if extra:
        raise InvalidArgument(f"unknown keys {sorted(extra)} in {desc.get('kind', '?')!r} spec")
    for key in required if required is not None else set(allowed) - {"kind"}:
        if key not in desc:
            raise InvalidArgument(f"missing key {key!r} in {desc.get('kind', '?')!r} spec")


def _num(desc, key):
    val = desc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise InvalidArgument(f"{key!r} must be a finite number, got {val!r}")
    return float(val)


def nodal_data(desc, x):
    """Evaluate a ``constant`` / ``gaussian`` / ``table`` description at nodes ``x``."""
    if not isinstance(desc, dict):
        raise InvalidArgument(f"data description must be an object, got {desc!r}")
    kind = desc.get("kind")
    if kind == "constant":
        _only(desc, {"kind", "value"})
        return np.full(x.shape, _num(desc, "value"))
    if kind == "gaussian":
        _only(desc, {"kind", "center", "width", "height"})
        c, w, h = _num(desc, "center"), _num(desc, "width"), _num(desc, "height")
        if not w > 0:
            raise InvalidArgument("gaussian width must be positive")
        return h * np.exp(-(((x - c) / w) ** 2))
    if kind == "cosine":
        _only(desc, {"kind", "amplitude", "frequency", "offset"}, {"amplitude", "frequency"})
        off = _num(desc, "offset") if "offset" in desc else 0.0
        return off + _num(desc, "amplitude") * np.cos(_num(desc, "frequency") * np.pi * x)
    if kind == "table":
        _only(desc, {"kind", "x", "values"}, {"values"})
        vals = np.asarray(desc["values"], dtype=float)
        if "x" in desc:
            tx = np.asarray(desc["x"], dtype=float)
            if tx.shape != vals.shape or np.any(np.diff(tx) <= 0):
                raise InvalidArgument("table x must be increasing and match values")
            return np.interp(x, tx, vals)
        if vals.shape != x.shape:
            raise InvalidArgument(f"table has {vals.size} values for {x.size} nodes")
        return vals.copy()
    raise InvalidArgument(f"unknown data kind {kind!r}")


def control_from_spec(desc, spec, ops, seed=0):
    """Build a :class:`ControlField` from a ``constant``/``random``/``gaussian``/``table`` description."""
    shape = (spec.time.n_steps, ops.n_control)
    kind = desc.get("kind")
    if kind == "random":
        _only(desc, {"kind", "low", "high"}, set())
        low = _num(desc, "low") if "low" in desc else spec.m
        high = _num(desc, "high") if "high" in desc else spec.M
        return ControlField.random(spec, ops, np.random.default_rng(seed), low, high)
    if kind == "table":
        _only(desc, {"kind", "values"})
        vals = np.asarray(desc["values"], dtype=float)
        if vals.shape != shape:
            raise InvalidArgument(f"control table has shape {vals.shape}, expected {shape}")
        return ControlField(vals, spec.m, spec.M)
    if kind in ("constant", "gaussian", "cosine"):
        profile = nodal_data(desc, ops.mesh.nodes[ops.omega_nodes])
        return ControlField(np.broadcast_to(profile, shape), spec.m, spec.M)
    raise InvalidArgument(f"unknown control kind {kind!r}")


@dataclass(frozen=True)
class ProblemSetup:
    coefficient: DiffusionCoefficient
    region: ControlRegion
    T: float
    n_steps: int
    n_cells: int
    m: float
    M: float
    alpha: float
    y0: dict
    yd: dict
    grading: str = "uniform"
    control: dict = field(default=None)
    quad_order: int = 3

    def refined(self, level):
        """Same problem with ``2**level`` times more cells and steps."""
        k = 2 ** int(level)
        return replace(self, n_cells=self.n_cells * k, n_steps=self.n_steps * k)

    def build(self, opts=None, seed=0):
        """``(ProblemSpec, AssembledOperators)`` at this resolution."""
        mesh = build_mesh(self.n_cells, self.grading)
        ops = assemble(mesh, self.coefficient, self.region, self.quad_order)
        time = TimeGrid(self.T, self.n_steps)
        x = mesh.nodes
        y0 = nodal_data(self.y0, x)
        spec = ProblemSpec(self.coefficient, self.region, time, self.m, self.M, self.alpha, y0, np.zeros_like(x))
        if self.yd.get("kind") == "forward":
            yd = self._forward_target(spec, ops, opts, seed)
        else:
            yd = nodal_data(self.yd, x)
        return spec.replace(yd=yd), ops

    def _forward_target(self, spec, ops, opts, seed):
        desc = self.yd
        _only(desc, {"kind", "control", "T", "initial"}, {"control"})
        fspec = spec
        if "T" in desc:
            Tf = _num(desc, "T")
            n = max(1, int(round(Tf / spec.time.dt)))
            fspec = spec.replace(time=TimeGrid(Tf, n))
        if "initial" in desc:
            fspec = fspec.replace(y0=nodal_data(desc["initial"], ops.mesh.nodes))
        v = control_from_spec(desc["control"], fspec, ops, seed)
        return solve_state(fspec, ops, v, opts).final

    def control_field(self, spec, ops, seed=0):
        if self.control is None:
            raise InvalidArgument("problem has no control description")
        return control_from_spec(self.control, spec, ops, seed)
