"""Cubes, two-particle boxes, shadows and max-norm separation.

All cubes are closed and axis-aligned.  Distances use the max-norm, so the
distance between two cubes is the largest per-axis gap between their
coordinate intervals.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Cube",
    "Box",
    "CellularSet",
    "SeparationVerdict",
    "SEPARATION_FACTOR",
    "max_dist",
    "cube_distance",
    "set_distance",
    "distance_condition",
    "classify_separation",
    "random_box_pair",
]

#: Separation factor in the distance condition; independent of dimension.
SEPARATION_FACTOR = 8.0


def _as_point(x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"expected a point in R^d, got shape {arr.shape}")
    return arr


def max_dist(x, y) -> float:
    """Max-norm distance between two points of the same dimension."""
    x = _as_point(x)
    y = _as_point(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return float(np.max(np.abs(x - y)))


@dataclass(frozen=True, eq=False)
class Cube:
    """Closed cube ``prod_i [c_i - L, c_i + L]``."""

    center: np.ndarray
    half_side: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        object.__setattr__(self, "half_side", float(self.half_side))
        if not self.half_side > 0:
            raise ValueError(f"half_side must be positive, got {self.half_side}")
        self.center.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_side

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_side

    @property
    def side(self) -> float:
        return 2.0 * self.half_side

    @property
    def volume(self) -> float:
        return self.side**self.dim

    def contains(self, x) -> bool:
        x = _as_point(x)
        return bool(np.all(np.abs(x - self.center) <= self.half_side))

    def __eq__(self, other):
        if not isinstance(other, Cube):
            return NotImplemented
        return (
            self.half_side == other.half_side
            and self.center.shape == other.center.shape
            and bool(np.all(self.center == other.center))
        )

    def __hash__(self):
        return hash((self.half_side, tuple(self.center.tolist())))

    def __repr__(self):
        return f"Cube(center={self.center.tolist()}, half_side={self.half_side})"

    def to_record(self) -> dict:
        return {"center": self.center.tolist(), "L": self.half_side}


def cube_distance(a: Cube, b: Cube) -> float:
    """Max-norm distance between two closed cubes (0 when they meet)."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    gaps = np.abs(a.center - b.center) - (a.half_side + b.half_side)
    return float(max(0.0, np.max(gaps)))


def _intersection_volume(cubes: Sequence[Cube]) -> float:
    lo = np.max([c.lower for c in cubes], axis=0)
    hi = np.min([c.upper for c in cubes], axis=0)
    return float(np.prod(np.clip(hi - lo, 0.0, None)))


class CellularSet:
    """Finite union of closed cubes.

    A shadow of a two-particle box is a union of one or two cubes; unions of
    several shadows (needed when two boxes share one random field) are
    represented by the same class.
    """

    def __init__(self, cubes: Iterable[Cube]):
        cubes = tuple(cubes)
        if not cubes:
            raise ValueError("a cellular set needs at least one cube")
        dims = {c.dim for c in cubes}
        if len(dims) != 1:
            raise ValueError(f"cubes of mixed dimension: {sorted(dims)}")
        # repeated cubes carry no extra measure
        unique = []
        for c in cubes:
            if c not in unique:
                unique.append(c)
        self.cubes = tuple(unique)

    @property
    def dim(self) -> int:
        return self.cubes[0].dim

    @property
    def measure(self) -> float:
        """Lebesgue measure of the union, by inclusion-exclusion."""
        total = 0.0
        n = len(self.cubes)
        for r in range(1, n + 1):
            sign = 1.0 if r % 2 else -1.0
            for combo in itertools.combinations(self.cubes, r):
                total += sign * _intersection_volume(combo)
        return total

    def contains(self, x) -> bool:
        return any(c.contains(x) for c in self.cubes)

    def union(self, other: "CellularSet") -> "CellularSet":
        return CellularSet(self.cubes + other.cubes)

    def __eq__(self, other):
        if not isinstance(other, CellularSet):
            return NotImplemented
        return set(self.cubes) == set(other.cubes)

    def __hash__(self):
        return hash(frozenset(self.cubes))

    def __repr__(self):
        return f"CellularSet({list(self.cubes)})"


@dataclass(frozen=True)
class Box:
    """Two-particle box ``cube1 x cube2`` in ``R^d x R^d``."""

    cube1: Cube
    cube2: Cube

    def __post_init__(self):
        if self.cube1.dim != self.cube2.dim:
            raise ValueError("both projections must live in the same R^d")

    @classmethod
    def from_centers(cls, u1, L1: float, u2, L2: float) -> "Box":
        return cls(Cube(u1, L1), Cube(u2, L2))

    @classmethod
    def from_record(cls, rec: dict) -> "Box":
        return cls.from_centers(rec["center1"], rec["L1"], rec["center2"], rec["L2"])

    def to_record(self) -> dict:
        return {
            "center1": self.cube1.center.tolist(),
            "L1": self.cube1.half_side,
            "center2": self.cube2.center.tolist(),
            "L2": self.cube2.half_side,
        }

    @property
    def dim(self) -> int:
        return self.cube1.dim

    def projection(self, j: int) -> Cube:
        if j == 1:
            return self.cube1
        if j == 2:
            return self.cube2
        raise ValueError(f"projection index must be 1 or 2, got {j}")

    @property
    def volume(self) -> float:
        return self.cube1.volume * self.cube2.volume

    @property
    def center(self) -> np.ndarray:
        """Concatenated center ``(u1, u2)`` in ``R^{2d}``."""
        return np.concatenate([self.cube1.center, self.cube2.center])

    @property
    def max_half_side(self) -> float:
        return max(self.cube1.half_side, self.cube2.half_side)

    def shadow(self) -> CellularSet:
        return CellularSet([self.cube1, self.cube2])

    def swapped(self) -> "Box":
        return Box(self.cube2, self.cube1)


def set_distance(a: CellularSet, b: CellularSet) -> float:
    """Max-norm distance between two cellular sets."""
    return min(cube_distance(p, q) for p in a.cubes for q in b.cubes)


def distance_condition(box: Box, other: Box) -> bool:
    """Check ``min(|u-u'|, |S(u)-u'|) > 8 max(L1, L2, L1', L2')``.

    ``S`` swaps the two particle centers and the norm is the max-norm on the
    concatenated ``2d`` coordinates.
    """
    if box.dim != other.dim:
        raise ValueError("boxes live in different dimensions")
    u, up = box.center, other.center
    su = box.swapped().center
    sep = min(max_dist(u, up), max_dist(su, up))
    scale = max(box.max_half_side, other.max_half_side)
    return sep > SEPARATION_FACTOR * scale


@dataclass(frozen=True)
class SeparationVerdict:
    distance_condition_met: bool
    complete: bool
    partial_cases: frozenset = field(default_factory=frozenset)

    @property
    def classified(self) -> bool:
        return self.complete or bool(self.partial_cases)


def classify_separation(box: Box, other: Box) -> SeparationVerdict:
    """Complete/partial separation of two boxes.

    Partial cases: (A) cube1 away from cube2 and the other shadow, (B) cube2
    away from cube1 and the other shadow, (C)/(D) the same for the cubes of
    ``other``.
    """
    if not distance_condition(box, other):
        return SeparationVerdict(False, False, frozenset())
    p1, p2 = CellularSet([box.cube1]), CellularSet([box.cube2])
    q1, q2 = CellularSet([other.cube1]), CellularSet([other.cube2])
    sh, sh_other = box.shadow(), other.shadow()
    complete = set_distance(sh, sh_other) > 0
    tests = {
        "A": (p1, p2.union(sh_other)),
        "B": (p2, p1.union(sh_other)),
        "C": (q1, sh.union(q2)),
        "D": (q2, sh.union(q1)),
    }
    cases = frozenset(k for k, (s, rest) in tests.items() if set_distance(s, rest) > 0)
    return SeparationVerdict(True, complete, cases)


def random_box_pair(rng: np.random.Generator, dim: int, l_range=(1.0, 3.0), near_prob=0.5):
    """Draw a pair of boxes for exhaustiveness checks.

    Centers are uniform in a ball of radius ``100 * max L``.  With
    probability ``near_prob`` some projection of the second box is placed
    right next to a projection of the first, so that partially separated
    configurations are sampled too.  No rejection is done here.
    """
    Ls = rng.uniform(*l_range, size=4)
    radius = 100.0 * Ls.max()

    def in_ball():
        while True:
            p = rng.uniform(-radius, radius, size=dim)
            if np.linalg.norm(p) <= radius:
                return p

    u1, u2, v1, v2 = (in_ball() for _ in range(4))
    if rng.random() < near_prob:
        # glue one cube of the second box onto one cube of the first
        src = u1 if rng.random() < 0.5 else u2
        offset = rng.uniform(-2.0, 2.0, size=dim) * Ls.max()
        if rng.random() < 0.5:
            v1 = src + offset
        else:
            v2 = src + offset
    return (
        Box.from_centers(u1, Ls[0], u2, Ls[1]),
        Box.from_centers(v1, Ls[2], v2, Ls[3]),
    )
