import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wegnerlab.geometry import Box, CellularSet, Cube
from wegnerlab.hamiltonian import (
    InteractionPotential,
    assemble,
    dirichlet_laplacian_1d,
    interior_nodes,
    potential_energy,
    sup_potential,
    swap_operator,
)
from wegnerlab.kernel_field import CovarianceKernel, FieldSample, GaussianField, GridSpec, KernelError
from wegnerlab.spectral import eigensolve

UNIT_BOX = Box.from_centers([0.5], 0.5, [0.5], 0.5)


def zero_field(box, h):
    grid = GridSpec(box.shadow(), h)
    return FieldSample(np.zeros(grid.n_cells), grid, "zero")


def const_field(box, h, c):
    grid = GridSpec(box.shadow(), h)
    return FieldSample(np.full(grid.n_cells, float(c)), grid, "const")


def gaussian_field(box, h, seed, kernel=CovarianceKernel("exponential", 1.0, 1.0, 0.05)):
    return GaussianField(kernel, GridSpec(box.shadow(), h)).sample(np.random.default_rng(seed), str(seed))


def dirichlet_eigs(m, h):
    j = np.arange(1, m + 1)
    return (2 / h**2) * (1 - np.cos(j * np.pi / (m + 1)))


def test_free_spectrum_unit_box():
    h = 0.25
    H = assemble(UNIT_BOX, h, InteractionPotential.none(), zero_field(UNIT_BOX, h))
    lam = dirichlet_eigs(3, h)
    want = np.sort((lam[:, None] + lam[None, :]).ravel() / 2)
    np.testing.assert_allclose(eigensolve(H).eigenvalues, want, atol=1e-10)
    assert lam == pytest.approx((2 / h**2) * (1 - np.cos(np.arange(1, 4) * np.pi / 4)))


def test_one_dimensional_laplacian_spectrum():
    T = dirichlet_laplacian_1d(9, 0.1).toarray()
    np.testing.assert_allclose(np.linalg.eigvalsh(T), dirichlet_eigs(9, 0.1), atol=1e-9)


def test_interior_nodes_exclude_boundary():
    nodes = interior_nodes(Cube([0.5], 0.5), 0.25)
    np.testing.assert_allclose(nodes[:, 0], [0.25, 0.5, 0.75])
    nodes2 = interior_nodes(Cube([0.0, 0.0], 0.5), 0.25)
    assert nodes2.shape == (9, 2)


def test_constant_field_shifts_diagonal_by_twice_constant():
    h = 0.25
    U = InteractionPotential(r1=0.3, amplitude=1.7)
    H0 = assemble(UNIT_BOX, h, U, zero_field(UNIT_BOX, h))
    Hc = assemble(UNIT_BOX, h, U, const_field(UNIT_BOX, h, 0.8))
    np.testing.assert_allclose(Hc.dense() - H0.dense(), 2 * 0.8 * np.eye(H0.dimension), atol=1e-14)


def _brute_force_removed(nodes1, nodes2, r0):
    return {(a, b) for a, b in itertools.product(nodes1, nodes2) if abs(a - b) < r0}


@pytest.mark.parametrize("r0, n_removed", [(0.3, 7), (0.2, 3)])
def test_hard_core_points_removed(r0, n_removed):
    h = 0.25
    U = InteractionPotential(r1=0.5, amplitude=1.0, r0=r0)
    H = assemble(UNIT_BOX, h, U, zero_field(UNIT_BOX, h))
    grid_nodes = [0.25, 0.5, 0.75]
    removed = _brute_force_removed(grid_nodes, grid_nodes, r0)
    assert len(removed) == n_removed
    assert H.n_masked == n_removed
    assert H.dimension == 9 - n_removed
    kept = {(float(p[0, 0]), float(p[1, 0])) for p in H.points()}
    assert kept.isdisjoint(removed)
    assert {(0.25, 0.25), (0.5, 0.5), (0.75, 0.75)} <= removed


def test_hard_core_removing_everything_is_an_error():
    h = 0.25
    U = InteractionPotential(r1=2.0, amplitude=0.0, r0=1.5)
    with pytest.raises(ValueError):
        assemble(UNIT_BOX, h, U, zero_field(UNIT_BOX, h))


def test_hard_core_never_lowers_ground_state():
    box = Box.from_centers([0.0], 1.0, [0.5], 1.0)
    h = 0.25
    v = gaussian_field(box, h, 0)
    base = eigensolve(assemble(box, h, InteractionPotential(r1=1.0, amplitude=0.5), v)).eigenvalues[0]
    for r0 in (0.1, 0.3, 0.6):
        cored = assemble(box, h, InteractionPotential(r1=1.0, amplitude=0.5, r0=r0), v)
        assert eigensolve(cored).eigenvalues[0] >= base - 1e-10


def test_mismatched_spacing_rejected():
    with pytest.raises(KernelError):
        assemble(UNIT_BOX, 0.25, InteractionPotential.none(), zero_field(UNIT_BOX, 0.125))


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_operator_symmetric_and_kinetic_nonnegative(seed):
    box = Box.from_centers([0.0], 0.75, [0.5], 1.0)
    h = 0.25
    H = assemble(box, h, InteractionPotential(r1=0.8, amplitude=-1.0), gaussian_field(box, h, seed))
    A = H.operator
    assert abs(A - A.T).max() == 0
    assert np.linalg.eigvalsh(H.kinetic.toarray())[0] >= -1e-10


# potential energy -------------------------------------------------------------

def test_potential_energy_examples():
    box = Box.from_centers([0.0], 1.0, [0.0], 1.0)
    h = 0.5
    square = InteractionPotential(r1=1.0, amplitude=2.0)
    v0 = zero_field(box, h)
    assert potential_energy(square, v0, ([0.0], [0.5])) == 2.0
    far = Box.from_centers([0.0], 1.0, [3.0], 1.0)
    assert potential_energy(square, zero_field(far, h), ([0.0], [3.0])) == 0.0
    with pytest.raises(KernelError):
        potential_energy(square, v0, ([0.0], [3.0]))
    # field nodes read the mean of adjacent cells; choose cells to give v(0)=1.5, v(0.5)=-0.5
    grid = v0.grid
    c = grid.centers[:, 0]
    vals = np.select([c == -0.25, c == 0.25, c == 0.75], [1.5, 1.5, -2.5], 0.0)
    v = FieldSample(vals, grid, "")
    assert grid.node_value(vals, [0.0]) == 1.5
    assert grid.node_value(vals, [0.5]) == -0.5
    assert potential_energy(InteractionPotential.none(), v, ([0.0], [0.5])) == pytest.approx(1.0)


def test_potential_energy_hard_core_is_infinite():
    box = Box.from_centers([0.0], 1.0, [0.0], 1.0)
    U = InteractionPotential(r1=1.0, amplitude=2.0, r0=0.2)
    assert potential_energy(U, zero_field(box, 0.5), ([0.0], [0.0])) == np.inf


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_potential_energy_exchange_symmetric(seed):
    box = Box.from_centers([0.0], 1.0, [0.5], 1.0)
    h = 0.25
    v = gaussian_field(box, h, seed)
    U = InteractionPotential(r1=1.0, profile="table", table=((0.0, 3.0), (1.0, 0.0)))
    rng = np.random.default_rng(seed)
    shared = np.arange(-0.25, 1.0 + 1e-9, 0.25)  # nodes interior to both cubes
    x1, x2 = rng.choice(shared, 2)
    assert potential_energy(U, v, ([x1], [x2])) == potential_energy(U, v, ([x2], [x1]))


def test_interaction_profile_support():
    U = InteractionPotential(r1=1.0, amplitude=2.0, r0=0.25)
    np.testing.assert_array_equal(U([0.1, 0.25, 1.0, 1.01]), [np.inf, 2.0, 2.0, 0.0])
    with pytest.raises(ValueError):
        InteractionPotential(r1=1.0, r0=1.5)
    with pytest.raises(ValueError):
        InteractionPotential(profile="table", table=((1.0, 0.0), (0.5, 1.0)))


# swap and bounds ----------------------------------------------------------------

def test_swap_symmetric_box_is_exact():
    box = Box.from_centers([0.0], 1.0, [0.0], 1.0)
    h = 0.25
    H = assemble(box, h, InteractionPotential(r1=0.6, amplitude=1.0), gaussian_field(box, h, 1))
    a = eigensolve(H).eigenvalues
    b = eigensolve(swap_operator(H)).eigenvalues
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_swap_is_an_involution():
    box = Box.from_centers([0.0], 0.5, [2.0], 1.0)
    h = 0.25
    H = assemble(box, h, InteractionPotential.none(), gaussian_field(box, h, 2))
    twice = swap_operator(swap_operator(H))
    assert np.array_equal(eigensolve(twice).eigenvalues, eigensolve(H).eigenvalues)


def test_sup_potential_examples():
    h = 0.25
    Hc = assemble(UNIT_BOX, h, InteractionPotential.none(), const_field(UNIT_BOX, h, -1.5))
    assert sup_potential(Hc).w_bar == pytest.approx(3.0)
    H2 = assemble(UNIT_BOX, h, InteractionPotential(r1=5.0, amplitude=2.0), zero_field(UNIT_BOX, h))
    b = sup_potential(H2)
    assert b.w_bar == 2.0 and b.u_bar == 2.0


@given(st.integers(0, 10_000), st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_potential_bound_chain(seed, amp):
    box = Box.from_centers([0.0], 1.0, [1.5], 0.5)
    h = 0.25
    H = assemble(box, h, InteractionPotential(r1=1.0, amplitude=amp), gaussian_field(box, h, seed))
    assert sup_potential(H).chain_holds
