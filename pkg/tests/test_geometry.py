import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wegnerlab.geometry import (
    Box,
    CellularSet,
    Cube,
    classify_separation,
    cube_distance,
    distance_condition,
    max_dist,
    random_box_pair,
    set_distance,
)

coord = st.floats(-50, 50, allow_nan=False)
half = st.floats(0.1, 5, allow_nan=False)


@pytest.mark.parametrize(
    "x, y, expected",
    [((0, 0), (3, 4), 4.0), ((5,), (5,), 0.0), ((1, -2), (-1, 1), 3.0)],
)
def test_max_dist_examples(x, y, expected):
    assert max_dist(x, y) == expected


def test_max_dist_dimension_mismatch():
    with pytest.raises(ValueError):
        max_dist((0, 0), (1,))


@given(st.lists(st.tuples(coord, coord), min_size=3, max_size=3))
def test_max_dist_triangle_inequality(points):
    a, b, c = points
    assert max_dist(a, c) <= max_dist(a, b) + max_dist(b, c) + 1e-12
    assert max_dist(a, b) == max_dist(b, a)


def test_cube_membership_is_closed():
    c = Cube([0.0, 0.0], 1.0)
    assert c.contains([1.0, -1.0])
    assert not c.contains([1.0 + 1e-12, 0.0])
    with pytest.raises(ValueError):
        Cube([0.0], 0.0)


def test_box_volume_and_projections():
    b = Box.from_centers([0.0, 0.0], 1.0, [5.0, 5.0], 0.5)
    assert b.volume == pytest.approx((2 * 1.0) ** 2 * (2 * 0.5) ** 2)
    assert b.projection(1) == b.cube1 and b.projection(2) == b.cube2


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (CellularSet([Cube([0.0], 1.0)]), CellularSet([Cube([20.0], 1.0)]), 18.0),
        (CellularSet([Cube([0.0], 1.0)]), CellularSet([Cube([1.0], 1.0)]), 0.0),
        (CellularSet([Cube([0.0], 1.0), Cube([10.0], 1.0)]), CellularSet([Cube([3.5], 0.5)]), 2.0),
    ],
)
def test_set_distance_examples(a, b, expected):
    assert set_distance(a, b) == pytest.approx(expected)
    assert set_distance(b, a) == pytest.approx(expected)


def _grid_measure(cs: CellularSet, step=0.05):
    # midpoint-rule count on a lattice aligned with the test cubes
    lo = min(c.lower[0] for c in cs.cubes)
    hi = max(c.upper[0] for c in cs.cubes)
    xs = np.arange(lo + step / 2, hi, step)
    return step * sum(cs.contains([x]) for x in xs)


@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(1, 10), st.integers(1, 10))
@settings(max_examples=40, deadline=None)
def test_union_measure_inclusion_exclusion(c1, c2, l1, l2):
    cs = CellularSet([Cube([c1 / 2], l1 / 4), Cube([c2 / 2], l2 / 4)])
    assert cs.measure == pytest.approx(_grid_measure(cs), abs=1e-9)


@given(coord, half, coord, half)
def test_shadow_invariant_under_swap(u1, l1, u2, l2):
    b = Box.from_centers([u1], l1, [u2], l2)
    assert b.swapped().shadow() == b.shadow()
    assert b.swapped().swapped() == b


@pytest.mark.parametrize(
    "u, v, expected",
    [((0, 0), (20, 20), True), ((0, 0), (8, 8), False), ((0, 10), (10, 0), False)],
)
def test_distance_condition_examples(u, v, expected):
    b = Box.from_centers([u[0]], 1.0, [u[1]], 1.0)
    b2 = Box.from_centers([v[0]], 1.0, [v[1]], 1.0)
    assert distance_condition(b, b2) is expected


def test_classify_complete_separation():
    v = classify_separation(Box.from_centers([0.0], 1, [0.0], 1), Box.from_centers([20.0], 1, [20.0], 1))
    assert v.distance_condition_met and v.complete


def test_classify_partial_case_b():
    v = classify_separation(Box.from_centers([0.0], 1, [10.0], 1), Box.from_centers([100.0], 1, [0.0], 1))
    assert v.distance_condition_met
    assert not v.complete
    assert "B" in v.partial_cases


def test_classify_flags_failed_condition():
    v = classify_separation(Box.from_centers([0.0], 1, [0.0], 1), Box.from_centers([5.0], 1, [5.0], 1))
    assert not v.distance_condition_met


def _interval_gap(a: Cube, b: Cube) -> float:
    return max(max(0.0, bl - au, al - bu) for al, au, bl, bu in zip(a.lower, a.upper, b.lower, b.upper))


@pytest.mark.parametrize("dim", [1, 2])
def test_separation_lemma_randomized(dim):
    rng = np.random.default_rng(100 + dim)
    seen = 0
    while seen < 2000:
        b1, b2 = random_box_pair(rng, dim)
        v = classify_separation(b1, b2)
        if not v.distance_condition_met:
            continue
        seen += 1
        assert v.classified
        p, q = [b1.cube1, b1.cube2], [b2.cube1, b2.cube2]
        assert v.complete == all(_interval_gap(x, y) > 0 for x, y in itertools.product(p, q))
        assert cube_distance(b1.cube1, b2.cube1) == pytest.approx(_interval_gap(b1.cube1, b2.cube1))
