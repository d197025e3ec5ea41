"""Mesh, degenerate diffusion coefficient and P1 finite-element assembly on (-1, 1).

The weak form of ``y_t - (a y_x)_x = v chi_omega y`` with the natural
condition ``a y_x = 0`` at ``x = +-1`` needs no boundary rows: the stiffness
matrix is assembled from ``int a phi_i' phi_j'`` over every cell and the
degeneracy of ``a`` is only felt through quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import PchipInterpolator

from .errors import AssemblyFailure, InvalidArgument

__all__ = [
    "DiffusionCoefficient",
    "Mesh1D",
    "ControlRegion",
    "AssembledOperators",
    "build_mesh",
    "assemble",
]


@dataclass(frozen=True)
class DiffusionCoefficient:
    """Diffusion coefficient ``a`` on [-1, 1], vanishing at both endpoints.

    Use the constructors :meth:`budyko`, :meth:`power` and :meth:`tabulated`.
    """

    kind: str
    p: float = 1.0
    table_x: tuple = ()
    table_a: tuple = ()
    _interp: object = field(default=None, repr=False, compare=False)

    @classmethod
    def budyko(cls):
        """``a(x) = 1 - x**2`` (principal part of the Budyko-Sellers model)."""
        return cls("budyko")

    @classmethod
    def power(cls, p):
        """``a(x) = (1 - x**2)**p`` with ``p >= 1``."""
        p = float(p)
        if not p >= 1.0:
            raise InvalidArgument(f"power coefficient needs p >= 1, got {p}")
        return cls("power", p=p)

    @classmethod
    def tabulated(cls, x, a):
        """Monotone-cubic (C1) interpolant of tabulated values.

        The table must start at -1 and end at 1 with ``a = 0`` there and
        ``a > 0`` at every interior abscissa.
        """
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        if x.ndim != 1 or x.shape != a.shape or x.size < 3:
            raise InvalidArgument("tabulated coefficient needs >= 3 matching x/a values")
        if np.any(np.diff(x) <= 0):
            raise InvalidArgument("tabulated abscissae must be strictly increasing")
        if x[0] != -1.0 or x[-1] != 1.0:
            raise InvalidArgument("tabulated abscissae must span exactly [-1, 1]")
        if a[0] != 0.0 or a[-1] != 0.0:
            raise InvalidArgument("tabulated coefficient must vanish at x = -1 and x = 1")
        if np.any(a[1:-1] <= 0) or not np.all(np.isfinite(a)):
            raise InvalidArgument("tabulated coefficient must be positive in the interior")
        interp = PchipInterpolator(x, a)
        return cls("tabulated", table_x=tuple(x), table_a=tuple(a), _interp=interp)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "budyko":
            return 1.0 - x * x
        if self.kind == "power":
            return np.maximum(1.0 - x * x, 0.0) ** self.p
        if self.kind == "tabulated":
            return self._interp(x)
        raise InvalidArgument(f"unknown coefficient kind {self.kind!r}")

    def describe(self):
        if self.kind == "power":
            return {"kind": "power", "p": self.p}
        if self.kind == "tabulated":
            return {"kind": "tabulated", "x": list(self.table_x), "a": list(self.table_a)}
        return {"kind": self.kind}


@dataclass(frozen=True)
class Mesh1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise InvalidArgument("a mesh needs at least two cells")
        if nodes[0] != -1.0 or nodes[-1] != 1.0:
            raise InvalidArgument("mesh must span exactly [-1, 1]")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidArgument("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def widths(self):
        return np.diff(self.nodes)

    @property
    def n_cells(self):
        return self.nodes.size - 1

    @property
    def n_nodes(self):
        return self.nodes.size


def build_mesh(n_cells, grading="uniform"):
    """Nodes of a mesh of ``n_cells`` cells on [-1, 1].

    ``boundary_refined`` maps a uniform parameter through ``sin(pi s / 2)``,
    which clusters nodes towards the degenerate endpoints.
    """
    if int(n_cells) != n_cells or n_cells < 2:
        raise InvalidArgument(f"n_cells must be an integer >= 2, got {n_cells!r}")
    n_cells = int(n_cells)
    s = np.linspace(-1.0, 1.0, n_cells + 1)
    if grading == "uniform":
        nodes = s
    elif grading == "boundary_refined":
        nodes = np.sin(0.5 * np.pi * s)
    else:
        raise InvalidArgument(f"unknown grading {grading!r}")
    nodes = nodes.copy()
    nodes[0], nodes[-1] = -1.0, 1.0
    if n_cells % 2 == 0:
        nodes[n_cells // 2] = 0.0
    return Mesh1D(nodes)


@dataclass(frozen=True)
class ControlRegion:
    """Finite union of closed subintervals of [-1, 1]."""

    intervals: tuple

    def __post_init__(self):
        raw = [tuple(map(float, iv)) for iv in self.intervals]
        if not raw:
            raise InvalidArgument("control region must contain at least one interval")
        for lo, hi in raw:
            if not (-1.0 <= lo < hi <= 1.0):
                raise InvalidArgument(f"invalid control interval [{lo}, {hi}]")
        raw.sort()
        merged = [list(raw[0])]
        for lo, hi in raw[1:]:
            if lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        object.__setattr__(self, "intervals", tuple(tuple(iv) for iv in merged))

    @classmethod
    def whole(cls):
        return cls(((-1.0, 1.0),))

    def indicator(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for lo, hi in self.intervals:
            out |= (x >= lo) & (x <= hi)
        return out

    @property
    def measure(self):
        return sum(hi - lo for lo, hi in self.intervals)


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    """P1 operators for one mesh, coefficient and control region.

    ``omega_weights`` are the row sums of ``M_omega`` (nodal quadrature
    weights of the region); the bilinear term and the control inner product
    are built from them.
    """

    mesh: Mesh1D
    coefficient: DiffusionCoefficient
    region: ControlRegion
    M: sp.csr_matrix
    M_lumped: np.ndarray
    K: sp.csr_matrix
    M_omega: sp.csr_matrix
    omega_weights: np.ndarray
    omega_nodes: np.ndarray
    omega_cells: np.ndarray
    snapped_intervals: tuple
    quad_points: np.ndarray
    quad_weights: np.ndarray
    cell_conductance: np.ndarray
    warnings: tuple = ()

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    @property
    def n_control(self):
        return self.omega_nodes.size

    def mass(self, kind="consistent"):
        if kind == "consistent":
            return self.M
        if kind == "lumped":
            return sp.diags(self.M_lumped, format="csr")
        raise InvalidArgument(f"unknown mass kind {kind!r}")

    def tridiagonal(self, name, mass_kind="consistent"):
        """(diagonal, off-diagonal) of M, K or the lumped mass."""
        if name == "K":
            c = self.cell_conductance
            d = np.zeros(self.n_nodes)
            d[:-1] += c
            d[1:] += c
            return d, -c
        if name == "M":
            if mass_kind == "lumped":
                return self.M_lumped.copy(), np.zeros(self.n_nodes - 1)
            return self.M.diagonal().copy(), self.M.diagonal(1).copy()
        raise InvalidArgument(f"unknown operator {name!r}")

    def apply_stiffness(self, y):
        """``K y`` in flux form; exactly zero on constants."""
        y = np.asarray(y, dtype=float)
        flux = self.cell_conductance * np.diff(y, axis=-1)
        out = np.zeros_like(y)
        out[..., :-1] -= flux
        out[..., 1:] += flux
        return out


def _quantize(c):
    # Common dyadic grid: every partial row sum of K is exact, so K @ 1 == 0.
    top = float(np.max(np.abs(c)))
    if top == 0.0:
        return c
    unit = 2.0 ** (math.floor(math.log2(top)) - 48)
    return np.round(c / unit) * unit


def _snap(mesh, region):
    nodes = mesh.nodes
    h = mesh.widths
    snapped, notes = [], []
    for lo, hi in region.intervals:
        i = int(np.argmin(np.abs(nodes - lo)))
        j = int(np.argmin(np.abs(nodes - hi)))
        if j <= i:
            mid = 0.5 * (lo + hi)
            cell = int(np.clip(np.searchsorted(nodes, mid) - 1, 0, mesh.n_cells - 1))
            i, j = cell, cell + 1
            notes.append(
                f"control interval [{lo:g}, {hi:g}] contains no pair of distinct nearest nodes; "
                f"widened to the cell [{nodes[i]:g}, {nodes[j]:g}]"
            )
        for end, k in ((lo, i), (hi, j)):
            local = h[min(k, mesh.n_cells - 1)]
            if abs(nodes[k] - end) > local:
                notes.append(
                    f"control interval endpoint {end:g} snapped to node {nodes[k]:g}, "
                    f"a move larger than one cell width"
                )
        if snapped and i <= snapped[-1][1]:
            snapped[-1] = (snapped[-1][0], max(j, snapped[-1][1]))
        else:
            snapped.append((i, j))
    return snapped, notes


def assemble(mesh, a, region, quad_order=3):
    """Assemble mass, lumped mass, weighted stiffness and region mass matrices.

    ``quad_order`` is the number of Gauss points per cell; the default 3 is
    exact for ``a = 1 - x**2``.
    """
    if int(quad_order) != quad_order or quad_order < 2:
        raise InvalidArgument(f"quad_order must be an integer >= 2, got {quad_order!r}")
    nodes = mesh.nodes
    h = mesh.widths
    n = mesh.n_nodes
    xi, wi = np.polynomial.legendre.leggauss(int(quad_order))
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    qp = mid[:, None] + 0.5 * h[:, None] * xi[None, :]
    qw = 0.5 * h[:, None] * wi[None, :]

    a_q = np.asarray(a(qp), dtype=float)
    if not np.all(np.isfinite(a_q)):
        raise AssemblyFailure("diffusion coefficient is not finite at a quadrature point")
    if np.any(a_q < 0):
        cell, q = np.argwhere(a_q < 0)[0]
        raise AssemblyFailure(
            f"diffusion coefficient negative ({a_q[cell, q]:g}) at x = {qp[cell, q]:g}"
        )
    conductance = _quantize(np.sum(qw * a_q, axis=1) / h**2)

    # local shape functions at quadrature points
    phi0 = 0.5 * (1.0 - xi)
    phi1 = 0.5 * (1.0 + xi)
    m00 = qw @ (phi0 * phi0)
    m01 = qw @ (phi0 * phi1)
    m11 = qw @ (phi1 * phi1)

    def tri(d0, d1, off, cells):
        diag = np.zeros(n)
        offd = np.zeros(n - 1)
        np.add.at(diag, cells, d0)
        np.add.at(diag, cells + 1, d1)
        offd[cells] = off
        return sp.diags([offd, diag, offd], [-1, 0, 1], format="csr")

    all_cells = np.arange(mesh.n_cells)
    M = tri(m00, m11, m01, all_cells)
    M_lumped = np.asarray(M.sum(axis=1)).ravel()
    d = np.zeros(n)
    d[:-1] += conductance
    d[1:] += conductance
    K = sp.diags([-conductance, d, -conductance], [-1, 0, 1], format="csr")

    snapped, notes = _snap(mesh, region)
    for note in notes:
        warnings.warn(note, stacklevel=2)
    omega_cells = np.concatenate([np.arange(i, j) for i, j in snapped])
    omega_nodes = np.unique(np.concatenate([np.arange(i, j + 1) for i, j in snapped]))
    M_omega = tri(m00[omega_cells], m11[omega_cells], m01[omega_cells], omega_cells)
    omega_weights = np.asarray(M_omega.sum(axis=1)).ravel()

    for arr in (M_lumped, omega_weights, omega_nodes, omega_cells, qp, qw, conductance):
        arr.setflags(write=False)
    return AssembledOperators(
        mesh=mesh,
        coefficient=a,
        region=region,
        M=M,
        M_lumped=M_lumped,
        K=K,
        M_omega=M_omega,
        omega_weights=omega_weights,
        omega_nodes=omega_nodes,
        omega_cells=omega_cells,
        snapped_intervals=tuple((float(nodes[i]), float(nodes[j])) for i, j in snapped),
        quad_points=qp,
        quad_weights=qw,
        cell_conductance=conductance,
        warnings=tuple(notes),
    )
