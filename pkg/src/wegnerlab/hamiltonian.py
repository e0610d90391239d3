"""Finite-difference two-particle Hamiltonian with Dirichlet boundary.

The box ``cube1 x cube2`` is discretized by the interior nodes of a lattice
of spacing ``h`` in each of the ``2d`` coordinates.  The kinetic part is
``-1/2 (Lap_1 + Lap_2)`` with the second-order central stencil; Dirichlet
conditions come from omitting boundary nodes.  The external field enters
at a node through the mean of the ``2^d`` field cells around it.

Grid points are ordered particle-1 major: ``index = i1 * N2 + i2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import Box, CellularSet, Cube
from .kernel_field import FieldSample, KernelError, _tile_count, sup_field

__all__ = [
    "InteractionPotential",
    "DiscreteHamiltonian",
    "PotentialBounds",
    "interior_nodes",
    "dirichlet_laplacian_1d",
    "kinetic_operator",
    "potential_energy",
    "assemble",
    "swap_operator",
    "sup_potential",
]


@dataclass(frozen=True)
class InteractionPotential:
    """Pair interaction as a function of ``s = |x1 - x2|_max``.

    ``profile="square"`` is the constant ``amplitude`` for ``s <= r1``;
    ``profile="table"`` interpolates the ``(s, U)`` pairs in ``table``
    linearly.  Beyond ``r1`` the interaction vanishes; below ``r0`` (when
    given) it is an infinite hard core.
    """

    r1: float = 1.0
    amplitude: float = 0.0
    profile: str = "square"
    table: Optional[tuple] = None
    r0: Optional[float] = None

    def __post_init__(self):
        if not self.r1 > 0:
            raise ValueError("interaction radius r1 must be positive")
        if self.r0 is not None and not (0 < self.r0 < self.r1):
            raise ValueError("hard-core radius must satisfy 0 < r0 < r1")
        if self.profile not in ("square", "table"):
            raise ValueError(f"unknown interaction profile {self.profile!r}")
        if self.profile == "table":
            if not self.table:
                raise ValueError("table profile needs (s, U) pairs")
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or np.any(np.diff(tab[:, 0]) <= 0):
                raise ValueError("table must be increasing (s, U) pairs")
            object.__setattr__(self, "table", tuple(map(tuple, tab.tolist())))

    @classmethod
    def none(cls) -> "InteractionPotential":
        return cls(r1=1.0, amplitude=0.0)

    @classmethod
    def from_record(cls, rec: dict) -> "InteractionPotential":
        table = rec.get("table")
        return cls(
            r1=float(rec.get("r1", 1.0)),
            amplitude=float(rec.get("amplitude", 0.0)),
            profile=rec.get("profile", "square"),
            table=tuple(map(tuple, table)) if table else None,
            r0=float(rec["r0"]) if rec.get("r0") is not None else None,
        )

    def to_record(self) -> dict:
        rec = {"r1": self.r1, "amplitude": self.amplitude, "profile": self.profile}
        if self.table:
            rec["table"] = [list(t) for t in self.table]
        if self.r0 is not None:
            rec["r0"] = self.r0
        return rec

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.profile == "square":
            val = np.full(s.shape, self.amplitude)
        else:
            tab = np.asarray(self.table)
            val = np.interp(s, tab[:, 0], tab[:, 1])
        val = np.where(s > self.r1, 0.0, val)
        if self.r0 is not None:
            val = np.where(s < self.r0, np.inf, val)
        return val

    def finite_sup(self) -> float:
        """Sup of ``|U|`` outside the hard core."""
        if self.profile == "square":
            return abs(self.amplitude)
        return float(np.max(np.abs(np.asarray(self.table)[:, 1])))


def interior_nodes(cube: Cube, h: float) -> np.ndarray:
    """Interior lattice nodes of ``cube``, shape ``((n-1)^d, d)`` in C order."""
    n = _tile_count(cube.side, h)
    if n < 2:
        raise KernelError(f"cube {cube} has no interior node at h={h}")
    ticks = np.arange(1, n) * h
    axes = [cube.lower[i] + ticks for i in range(cube.dim)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cube.dim)


def dirichlet_laplacian_1d(m: int, h: float) -> sp.csr_matrix:
    """``-d^2/dx^2`` on ``m`` interior nodes (positive definite)."""
    main = np.full(m, 2.0)
    off = np.full(m - 1, -1.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def kinetic_operator(m: int, dim: int, h: float) -> sp.csr_matrix:
    """``-Lap`` for one particle on an ``m^dim`` interior grid."""
    T = dirichlet_laplacian_1d(m, h)
    eye = sp.identity(m, format="csr")
    out = None
    for axis in range(dim):
        term = None
        for k in range(dim):
            f = T if k == axis else eye
            term = f if term is None else sp.kron(term, f, format="csr")
        out = term if out is None else out + term
    return out.tocsr()


@dataclass(frozen=True, eq=False)
class DiscreteHamiltonian:
    """Assembled operator on the retained grid points of a box."""

    box: Box
    h: float
    interaction: InteractionPotential
    field: FieldSample
    g: float
    nodes1: np.ndarray
    nodes2: np.ndarray
    keep: np.ndarray
    kinetic: sp.csr_matrix
    potential: np.ndarray
    interaction_values: np.ndarray

    @property
    def dimension(self) -> int:
        return self.potential.shape[0]

    @property
    def n_masked(self) -> int:
        return int(self.keep.size - self.keep.sum())

    @property
    def operator(self) -> sp.csr_matrix:
        return (self.kinetic + sp.diags(self.potential)).tocsr()

    def dense(self) -> np.ndarray:
        return self.operator.toarray()

    def points(self) -> np.ndarray:
        """Retained grid points as ``(N, 2, d)`` pairs ``(x1, x2)``."""
        n1, n2 = len(self.nodes1), len(self.nodes2)
        i1, i2 = np.divmod(np.arange(n1 * n2), n2)
        pts = np.stack([self.nodes1[i1], self.nodes2[i2]], axis=1)
        return pts[self.keep]


def _separation(nodes1: np.ndarray, nodes2: np.ndarray) -> np.ndarray:
    return np.max(np.abs(nodes1[:, None, :] - nodes2[None, :, :]), axis=-1)


def potential_energy(U: InteractionPotential, v: FieldSample, x: Sequence, g: float = 1.0) -> float:
    """``U(x) + g (v(x1) + v(x2))`` at a pair of lattice nodes; ``inf`` in the hard core."""
    x1, x2 = (np.atleast_1d(np.asarray(p, dtype=float)) for p in x)
    s = float(np.max(np.abs(x1 - x2)))
    u = float(U(s))
    if np.isinf(u):
        return u
    return u + g * (v.grid.node_value(v.values, x1) + v.grid.node_value(v.values, x2))


def assemble(
    box: Box,
    h: float,
    U: InteractionPotential,
    v: FieldSample,
    g: float = 1.0,
) -> DiscreteHamiltonian:
    """Discretize ``H = -1/2 (Lap_1 + Lap_2) + U + g (V(x1) + V(x2))`` on ``box``.

    The field sample must live on a grid of the same spacing covering both
    projections of the box; overlapping projections read the same cells.
    Hard-core points (``|x1 - x2|_max < r0``) are removed from the operator.
    """
    if abs(v.grid.h - h) > 1e-12 * h:
        raise KernelError(f"field grid spacing {v.grid.h} differs from h={h}")
    nodes1 = interior_nodes(box.cube1, h)
    nodes2 = interior_nodes(box.cube2, h)
    m1 = _tile_count(box.cube1.side, h) - 1
    m2 = _tile_count(box.cube2.side, h) - 1
    K1 = kinetic_operator(m1, box.dim, h)
    K2 = kinetic_operator(m2, box.dim, h)
    H0 = 0.5 * (
        sp.kron(K1, sp.identity(K2.shape[0]), format="csr") + sp.kron(sp.identity(K1.shape[0]), K2, format="csr")
    )
    v1 = v.at_nodes(box.cube1).ravel()
    v2 = v.at_nodes(box.cube2).ravel()
    sep = _separation(nodes1, nodes2)
    u = U(sep)
    W = u + g * (v1[:, None] + v2[None, :])
    keep = np.isfinite(u).ravel()
    if not keep.any():
        raise ValueError("hard core removes every grid point of the box")
    H0 = H0.tocsr()
    if not keep.all():
        H0 = H0[keep][:, keep].tocsr()
    return DiscreteHamiltonian(
        box=box,
        h=float(h),
        interaction=U,
        field=v,
        g=float(g),
        nodes1=nodes1,
        nodes2=nodes2,
        keep=keep,
        kinetic=H0,
        potential=W.ravel()[keep],
        interaction_values=u.ravel()[keep],
    )


def swap_operator(Hd: DiscreteHamiltonian) -> DiscreteHamiltonian:
    """The same Hamiltonian assembled on the swapped box ``cube2 x cube1``."""
    return assemble(Hd.box.swapped(), Hd.h, Hd.interaction, Hd.field, Hd.g)


@dataclass(frozen=True)
class PotentialBounds:
    w_bar: float
    u_bar: float
    v_bar1: float
    v_bar2: float
    v_bar_shadow: float
    g: float = 1.0

    @property
    def chain_holds(self) -> bool:
        """``W <= U + |g|(V1 + V2) <= U + 2|g| V_shadow`` up to rounding."""
        tol = 1e-12 * max(1.0, self.w_bar)
        mid = self.u_bar + abs(self.g) * (self.v_bar1 + self.v_bar2)
        top = self.u_bar + 2 * abs(self.g) * self.v_bar_shadow
        return self.w_bar <= mid + tol and mid <= top + tol


def sup_potential(Hd: DiscreteHamiltonian) -> PotentialBounds:
    """Sup of ``|W|`` and ``|U|`` over the retained points, with the field sups."""
    box = Hd.box
    return PotentialBounds(
        w_bar=float(np.max(np.abs(Hd.potential))),
        u_bar=float(np.max(np.abs(Hd.interaction_values))),
        v_bar1=sup_field(Hd.field, CellularSet([box.cube1])),
        v_bar2=sup_field(Hd.field, CellularSet([box.cube2])),
        v_bar_shadow=sup_field(Hd.field, box.shadow()),
        g=Hd.g,
    )
