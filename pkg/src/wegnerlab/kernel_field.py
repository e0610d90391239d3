"""Covariance kernels, the discretized space L2_C(A) and Gaussian fields.

A cellular set ``A`` is tiled by cubic cells of side ``h``.  Grid functions
are arrays indexed by cell.  The covariance form of two grid functions is

    <zeta, eta>_C = sum_{p,q} zeta_p C(x_p, x_q) eta_q h^d h^d,

so ``gram = cov * h**(2d)`` where ``cov`` is the cell-level covariance of
the field.  Coefficients of a field sample are plain integrals,
``[zeta] = sum_p zeta_p v_p h^d``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import linalg as sla
from scipy.spatial import cKDTree
from scipy.special import erf

from .geometry import Box, CellularSet, Cube, set_distance, max_dist, SEPARATION_FACTOR

__all__ = [
    "KernelError",
    "CovarianceKernel",
    "GridSpec",
    "GaussianField",
    "FieldSample",
    "KernelSpace",
    "Decomposition",
    "ModulusEstimate",
    "gram_assemble",
    "sample_field",
    "coefficient",
    "decompose",
    "sup_field",
    "closed_form_modulus",
    "window_mass",
    "conditional_law",
    "modulus_empirical",
    "modulus_bar",
]

KERNEL_FAMILIES = ("exponential", "squared_exponential")


class KernelError(ValueError):
    """Covariance data that cannot be factorized or tiled."""


@dataclass(frozen=True)
class CovarianceKernel:
    """Stationary covariance ``C(x, y)`` plus an optional cell nugget.

    ``scale`` is the variance ``s^2`` of the smooth part, ``length`` its
    correlation length.  ``nugget`` adds ``sigma0^2`` to the diagonal of the
    cell covariance (white noise with cell variance ``sigma0^2``).
    """

    family: str = "exponential"
    scale: float = 1.0
    length: float = 1.0
    nugget: float = 0.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        if self.scale < 0:
            raise ValueError("kernel scale must be >= 0")
        if not self.length > 0:
            raise ValueError("kernel length must be > 0")
        if self.nugget < 0:
            raise ValueError("nugget must be >= 0")

    @classmethod
    def from_record(cls, rec: dict) -> "CovarianceKernel":
        return cls(
            family=rec.get("family", "exponential"),
            scale=float(rec.get("scale", 1.0)),
            length=float(rec.get("length", 1.0)),
            nugget=float(rec.get("nugget", 0.0)),
        )

    def to_record(self) -> dict:
        return {"family": self.family, "scale": self.scale, "length": self.length, "nugget": self.nugget}

    @property
    def degenerate(self) -> bool:
        """True when the field is identically zero."""
        return self.scale == 0 and self.nugget == 0

    def smooth(self, x, y) -> np.ndarray:
        """Smooth part ``C(x, y)`` for point sets ``x`` (n, d) and ``y`` (m, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(-1))
        if self.family == "exponential":
            return self.scale * np.exp(-r / self.length)
        return self.scale * np.exp(-(r**2) / (2.0 * self.length**2))

    def cell_covariance(self, points) -> np.ndarray:
        """Covariance matrix of the field on the cells centered at ``points``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cov = self.smooth(points, points)
        cov[np.diag_indices_from(cov)] += self.nugget
        return cov


def _tile_count(side: float, h: float) -> int:
    n = side / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise KernelError(f"cube side {side} is not an integer multiple of h={h}")
    return k


class GridSpec:
    """Cell tiling of a cellular set with spacing ``h``.

    Cubes that overlap must share the cell lattice; shared cells are stored
    once.  ``cube_cells[k]`` holds the cell indices of cube ``k`` as an array
    of shape ``(n,) * d`` in C order.
    """

    def __init__(self, cellular_set: CellularSet, h: float):
        if not h > 0:
            raise KernelError("grid spacing must be positive")
        self.cellular_set = cellular_set
        self.h = float(h)
        self.dim = cellular_set.dim
        tol = 1e-7 * self.h
        centers: list[np.ndarray] = []
        cube_cells = []
        tree = None
        n_known = 0
        for cube in cellular_set.cubes:
            n = _tile_count(cube.side, self.h)
            offs = (np.arange(n) + 0.5) * self.h
            axes = [cube.lower[i] + offs for i in range(self.dim)]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
            idx = np.empty(len(pts), dtype=np.int64)
            if tree is not None:
                dist, hit = tree.query(pts, distance_upper_bound=tol)
                found = np.isfinite(dist)
            else:
                found = np.zeros(len(pts), dtype=bool)
                hit = np.zeros(len(pts), dtype=np.int64)
            idx[found] = hit[found]
            fresh = ~found
            # a fresh cell center inside an earlier cube means the lattices disagree
            for prev in cellular_set.cubes[: len(cube_cells)]:
                inside = np.all(np.abs(pts[fresh] - prev.center) < prev.half_side - tol, axis=1)
                if np.any(inside):
                    raise KernelError(f"overlapping cubes {prev} and {cube} do not share a cell lattice of spacing {h}")
            idx[fresh] = n_known + np.arange(int(fresh.sum()))
            n_known += int(fresh.sum())
            centers.append(pts[fresh])
            cube_cells.append(idx.reshape((n,) * self.dim))
            tree = cKDTree(np.concatenate(centers))
        self.centers = np.concatenate(centers)
        self.centers.setflags(write=False)
        self.cube_cells = tuple(cube_cells)
        self._tree = tree

    @property
    def n_cells(self) -> int:
        return self.centers.shape[0]

    @property
    def cell_measure(self) -> float:
        return self.h**self.dim

    def lookup(self, points) -> np.ndarray:
        """Indices of the cells centered at ``points``; KernelError if any is absent."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dist, idx = self._tree.query(points, distance_upper_bound=1e-7 * self.h)
        if not np.all(np.isfinite(dist)):
            bad = points[~np.isfinite(dist)][0]
            raise KernelError(f"point {bad.tolist()} is not a cell center of this grid")
        return idx

    def cells_in_cube(self, cube: Cube) -> np.ndarray:
        """Cell indices tiling ``cube``, shape ``(n,) * d``."""
        for c, cells in zip(self.cellular_set.cubes, self.cube_cells):
            if c == cube:
                return cells
        n = _tile_count(cube.side, self.h)
        offs = (np.arange(n) + 0.5) * self.h
        axes = [cube.lower[i] + offs for i in range(self.dim)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return self.lookup(pts).reshape((n,) * self.dim)

    def mask(self, region: CellularSet) -> np.ndarray:
        """Boolean mask of the cells belonging to ``region``."""
        m = np.zeros(self.n_cells, dtype=bool)
        for cube in region.cubes:
            m[self.cells_in_cube(cube).ravel()] = True
        return m

    def indicator(self, region: Optional[CellularSet] = None) -> np.ndarray:
        if region is None:
            return np.ones(self.n_cells)
        return self.mask(region).astype(float)

    def node_average(self, values: np.ndarray, cube: Cube) -> np.ndarray:
        """Field values at the interior lattice nodes of ``cube``.

        Each interior node is the common corner of ``2^d`` cells of the cube;
        its value is their mean.  Output shape ``(n-1,) * d``.
        """
        cells = self.cells_in_cube(cube)
        v = np.asarray(values)[cells]
        n = cells.shape[0]
        if n < 2:
            raise KernelError(f"cube {cube} has no interior node at h={self.h}")
        acc = np.zeros((n - 1,) * self.dim)
        for shift in itertools.product((0, 1), repeat=self.dim):
            sl = tuple(slice(s, s + n - 1) for s in shift)
            acc += v[sl]
        return acc / 2**self.dim

    def node_value(self, values: np.ndarray, x) -> float:
        """Field value at a single lattice node ``x`` (mean of its ``2^d`` cells)."""
        x = np.asarray(x, dtype=float)
        corners = [x + (np.array(s) - 0.5) * self.h for s in itertools.product((0, 1), repeat=self.dim)]
        idx = self.lookup(np.array(corners))
        return float(np.mean(np.asarray(values)[idx]))


@dataclass(frozen=True)
class FieldSample:
    """One realization of the field on the cells of ``grid``."""

    values: np.ndarray
    grid: GridSpec
    seed_path: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_cells,):
            raise ValueError(f"field has {vals.shape} values for {self.grid.n_cells} cells")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field sample has non-finite values")
        object.__setattr__(self, "values", vals)

    def shifted(self, t: float) -> "FieldSample":
        """The sample ``v + t`` on every cell of the grid."""
        return FieldSample(self.values + t, self.grid, self.seed_path)

    def at_nodes(self, cube: Cube) -> np.ndarray:
        return self.grid.node_average(self.values, cube)

    def to_csv(self, path) -> None:
        """Write ``x1,...,xd,value`` rows, one per cell."""
        header = ",".join([f"x{i + 1}" for i in range(self.grid.dim)] + ["value"])
        data = np.column_stack([self.grid.centers, self.values])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


class GaussianField:
    """Mean-zero Gaussian field on the cells of a grid, via Cholesky."""

    def __init__(self, kernel: CovarianceKernel, grid: GridSpec):
        self.kernel = kernel
        self.grid = grid

    @cached_property
    def cov(self) -> np.ndarray:
        return self.kernel.cell_covariance(self.grid.centers)

    @cached_property
    def factor(self) -> Optional[np.ndarray]:
        if self.kernel.degenerate:
            return None
        try:
            return np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise KernelError(
                "cell covariance is not numerically positive definite; add a nugget to the kernel"
            ) from exc

    def sample(self, rng: np.random.Generator, seed_path: str = "") -> FieldSample:
        z = rng.standard_normal(self.grid.n_cells)
        if self.factor is None:
            return FieldSample(np.zeros(self.grid.n_cells), self.grid, seed_path)
        return FieldSample(self.factor @ z, self.grid, seed_path)


@dataclass(frozen=True, eq=False)
class KernelSpace:
    """Discretized ``L2_C(A)`` with a C-orthonormal basis led by ``1_lead / Z``.

    ``basis`` has one grid function per column; column 0 is ``eta0``.
    """

    field: GaussianField
    gram: np.ndarray
    lead: np.ndarray
    Z: float
    eta0: np.ndarray
    basis: Optional[np.ndarray]

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def kernel(self) -> CovarianceKernel:
        return self.field.kernel

    def inner(self, zeta, eta) -> float:
        return float(np.asarray(zeta) @ self.gram @ np.asarray(eta))

    def norm(self, zeta) -> float:
        return math.sqrt(self.inner(zeta, zeta))


def _orthonormal_basis(gram: np.ndarray, lead: np.ndarray) -> np.ndarray:
    n = gram.shape[0]
    drop = int(np.flatnonzero(lead)[-1])
    cols = [lead] + [np.eye(n)[:, j] for j in range(n) if j != drop]
    M = np.column_stack(cols)
    # Householder QR in the metric of the Cholesky factor, then one CholQR pass
    Rg = sla.cholesky(gram, lower=False)
    R = sla.qr(Rg @ M, mode="r")[0]
    B = sla.solve_triangular(R, M.T, trans="T", lower=False).T
    S = B.T @ gram @ B
    Lc = sla.cholesky((S + S.T) / 2.0, lower=True)
    B = sla.solve_triangular(Lc, B.T, lower=True).T
    if B[drop, 0] < 0:
        B[:, 0] = -B[:, 0]
    return B


def gram_assemble(
    kernel: CovarianceKernel,
    grid: GridSpec,
    lead: Optional[CellularSet] = None,
    with_basis: bool = True,
) -> KernelSpace:
    """Assemble ``L2_C`` on ``grid`` with leading function ``1_lead / Z_lead``.

    ``lead`` defaults to the whole cellular set of the grid.  Raises
    :class:`KernelError` if the Gram matrix is not numerically positive
    definite (smallest eigenvalue <= 1e-12 times the largest).
    """
    fld = GaussianField(kernel, grid)
    gram = fld.cov * grid.cell_measure**2
    ev = np.linalg.eigvalsh(gram)
    if not ev[-1] > 0 or ev[0] <= 1e-12 * ev[-1]:
        raise KernelError(
            f"Gram matrix is not numerically positive definite "
            f"(eigenvalues in [{ev[0]:.3g}, {ev[-1]:.3g}]); add a nugget to the kernel"
        )
    ind = grid.indicator(lead)
    if not ind.any():
        raise KernelError("leading set contains no cells of the grid")
    Z = math.sqrt(float(ind @ gram @ ind))
    eta0 = ind / Z
    basis = None
    if with_basis:
        basis = _orthonormal_basis(gram, ind)
        basis[:, 0] = eta0
    return KernelSpace(fld, gram, ind, Z, eta0, basis)


def sample_field(space: KernelSpace, rng: np.random.Generator, seed_path: str = "") -> FieldSample:
    return space.field.sample(rng, seed_path)


def coefficient(space: KernelSpace, v: FieldSample, zeta) -> float:
    """Plain integral ``sum_p zeta_p v_p h^d``."""
    return float(np.asarray(zeta) @ v.values) * space.grid.cell_measure


@dataclass(frozen=True)
class Decomposition:
    """Split ``v = gamma0 * profile + fluctuation``."""

    gamma0: float
    profile: np.ndarray
    fluctuation: np.ndarray

    def recombine(self, gamma0: Optional[float] = None) -> np.ndarray:
        g = self.gamma0 if gamma0 is None else gamma0
        return g * self.profile + self.fluctuation


def regression_profile(space: KernelSpace) -> np.ndarray:
    """``Cov(v(x), [eta0]) / Var([eta0])`` for every cell ``x``."""
    cov_x = space.field.cov @ space.eta0 * space.grid.cell_measure
    var = space.inner(space.eta0, space.eta0)
    return cov_x / var


def decompose(space: KernelSpace, v: FieldSample) -> Decomposition:
    """Ground level along ``eta0`` plus a fluctuation uncorrelated with it."""
    g0 = coefficient(space, v, space.eta0)
    alpha = regression_profile(space)
    return Decomposition(g0, alpha, v.values - g0 * alpha)


def sup_field(v: FieldSample, region: Optional[CellularSet] = None) -> float:
    """Max of ``|v|`` over the cells of ``region`` (whole grid by default)."""
    vals = v.values if region is None else v.values[v.grid.mask(region)]
    return float(np.max(np.abs(vals)))


def closed_form_modulus(b) -> np.ndarray | float:
    """Largest mass a standard normal puts in a window of width ``b``."""
    b = np.asarray(b, dtype=float)
    out = erf(np.clip(b, 0.0, None) / (2.0 * math.sqrt(2.0)))
    return float(out) if out.ndim == 0 else out


def window_mass(samples: np.ndarray, b: float) -> float:
    """``max_y #{s : y <= s < y + b} / n`` for an empirical sample."""
    if b <= 0:
        return 0.0
    s = np.sort(np.asarray(samples, dtype=float))
    start = np.searchsorted(s, s, side="left")
    stop = np.searchsorted(s, s + b, side="left")
    return float(np.max(stop - start)) / len(s)


def conditional_law(space: KernelSpace) -> tuple[np.ndarray, float]:
    """Gaussian law of ``[eta0]`` given the other basis coefficients.

    Returns ``(weights, sd)``: the conditional mean is ``weights @ gamma[1:]``.
    The coefficient covariance is rebuilt from the cell covariance, so it
    does not presuppose that the basis is orthonormal.
    """
    B = space.basis
    S = B.T @ space.field.cov @ B * space.grid.cell_measure**2
    S = (S + S.T) / 2.0
    if S.shape[0] == 1:
        return np.zeros(0), math.sqrt(S[0, 0])
    w = sla.solve(S[1:, 1:], S[1:, 0], assume_a="pos")
    var = S[0, 0] - S[0, 1:] @ w
    return w, math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class ModulusEstimate:
    """Empirical conditioned continuity modulus.

    ``value`` is the max over the outer conditioning draws, hence a lower
    estimate of the essential supremum over conditioning data.
    """

    b: float
    value: float
    stderr: float
    n_outer: int
    n_inner: int
    outer_values: tuple = field(default=(), repr=False)

    @property
    def rel_stderr(self) -> float:
        return self.stderr / self.value if self.value > 0 else math.inf


def modulus_empirical(
    kernel: CovarianceKernel,
    region: CellularSet,
    other: Optional[CellularSet],
    h: float,
    b: float | Sequence[float],
    n_outer: int = 10,
    n_inner: int = 10_000,
    rng: Optional[np.random.Generator] = None,
):
    """Monte Carlo estimate of the conditioned continuity modulus of ``[1_A/Z_A]``.

    ``region`` is ``A`` and ``other`` is ``A'`` (or ``None``); the basis of
    ``L2_C(A u A')`` is led by ``1_A / Z_A``.  Each outer draw samples a
    field, reads off the remaining coefficients and resamples ``[eta0]``
    from its conditional law ``n_inner`` times; the window mass is the
    exact sup over ``y`` of the empirical ``F(y + b) - F(y)``.  The inner
    normal variates are shared between outer draws (common random numbers).
    """
    if n_inner < 100:
        raise ValueError("n_inner must be at least 100 for a usable CDF estimate")
    if n_outer < 1:
        raise ValueError("n_outer must be at least 1")
    if other is not None and set_distance(region, other) <= 0:
        raise ValueError("A and A' must be disjoint")
    rng = np.random.default_rng() if rng is None else rng
    union = region if other is None else region.union(other)
    space = gram_assemble(kernel, GridSpec(union, h), lead=region)
    w, sd = conditional_law(space)
    B = space.basis
    bs = np.atleast_1d(np.asarray(b, dtype=float))
    z = rng.standard_normal(n_inner)
    per_outer = np.zeros((n_outer, len(bs)))
    for k in range(n_outer):
        v = space.field.sample(rng)
        gamma = B.T @ v.values * space.grid.cell_measure
        m = float(w @ gamma[1:])
        draws = m + sd * z
        per_outer[k] = [window_mass(draws, bb) for bb in bs]
    values = per_outer.max(axis=0)
    out = [
        ModulusEstimate(
            b=float(bb),
            value=float(val),
            stderr=math.sqrt(val * (1.0 - val) / n_inner),
            n_outer=n_outer,
            n_inner=n_inner,
            outer_values=tuple(per_outer[:, i].tolist()),
        )
        for i, (bb, val) in enumerate(zip(bs, values))
    ]
    return out[0] if np.ndim(b) == 0 else out


def _far_apart(box: Box, other: Box) -> bool:
    # the plain distance condition, without the particle-swap term
    return max_dist(box.center, other.center) > SEPARATION_FACTOR * max(box.max_half_side, other.max_half_side)


def modulus_bar(
    box: Box,
    b: float,
    mode: str = "closed_form_gaussian",
    *,
    kernel: Optional[CovarianceKernel] = None,
    h: Optional[float] = None,
    probes: Sequence[Box] = (),
    n_outer: int = 10,
    n_inner: int = 10_000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Maximal conditioned modulus over the three leading-indicator choices.

    ``closed_form_gaussian`` returns the exact Gaussian value.  ``empirical``
    takes the max of :func:`modulus_empirical` over the shadow alone and, for
    every probe box far enough from ``box``, over the leading sets
    ``shadow``, ``cube1`` and ``cube2`` whenever they are disjoint from the
    rest.
    """
    if b <= 0:
        return 0.0
    if mode == "closed_form_gaussian":
        return closed_form_modulus(b)
    if mode != "empirical":
        raise ValueError(f"unknown modulus mode {mode!r}")
    if not probes:
        raise ValueError("empirical modulus needs a non-empty probe set")
    if kernel is None or h is None:
        raise ValueError("empirical modulus needs a kernel and a grid spacing")
    rng = np.random.default_rng() if rng is None else rng
    sh = box.shadow()
    c1, c2 = CellularSet([box.cube1]), CellularSet([box.cube2])

    def nu(a, rest):
        return modulus_empirical(kernel, a, rest, h, b, n_outer, n_inner, rng).value

    best = nu(sh, None)
    used = 0
    for probe in probes:
        if not _far_apart(box, probe):
            continue
        used += 1
        psh = probe.shadow()
        if set_distance(sh, psh) > 0:
            best = max(best, nu(sh, psh))
        rest1 = c2.union(psh)
        if set_distance(c1, rest1) > 0:
            best = max(best, nu(c1, rest1))
        rest2 = c1.union(psh)
        if set_distance(c2, rest2) > 0:
            best = max(best, nu(c2, rest2))
    if not used:
        raise ValueError("no probe box satisfies the distance condition")
    return best
