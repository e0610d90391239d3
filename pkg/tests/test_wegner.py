import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from wegnerlab.geometry import Box
from wegnerlab.hamiltonian import InteractionPotential, assemble
from wegnerlab.kernel_field import CovarianceKernel, FieldSample, GridSpec, closed_form_modulus
from wegnerlab.spectral import eigensolve
from wegnerlab.wegner import (
    RunError,
    WegnerOneConfig,
    WegnerTwoConfig,
    rhs_bound_one,
    rhs_bound_two,
    wegner_one,
    wegner_two,
    wilson_interval,
)

BOX = Box.from_centers([0.0], 1.0, [3.0], 1.0)
BOX2 = Box.from_centers([20.0], 1.0, [24.0], 1.0)
EXP = CovarianceKernel("exponential", 1.0, 1.0, 0.0)
ZERO = CovarianceKernel("exponential", 0.0, 1.0, 0.0)
NO_U = InteractionPotential.none()


def one_cfg(**kw):
    base = dict(box=BOX, energy=10.0, epsilons=(0.02, 0.05, 0.1), kernel=EXP, interaction=NO_U, h=0.25, n_samples=200, seed=1)
    base.update(kw)
    return WegnerOneConfig(**base)


def two_cfg(**kw):
    base = dict(
        box=BOX, box2=BOX2, center=10.0, half_width=2.0, epsilons=(0.02, 0.05, 0.1),
        kernel=EXP, interaction=NO_U, h=0.25, n_samples=200, seed=2,
    )
    base.update(kw)
    return WegnerTwoConfig(**base)


def free_levels(box, h):
    grid = GridSpec(box.shadow(), h)
    return eigensolve(assemble(box, h, NO_U, FieldSample(np.zeros(grid.n_cells), grid, ""))).eigenvalues


def test_wilson_interval_matches_formula():
    lo, hi = wilson_interval(30, 200)
    p, n, z = 0.15, 200, stats.norm.ppf(0.975)
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    assert lo == pytest.approx(centre - half, rel=1e-9)
    assert hi == pytest.approx(centre + half, rel=1e-9)


def test_config_preconditions():
    with pytest.raises(ValueError):
        one_cfg(epsilons=(0.5, 1.0))
    with pytest.raises(ValueError):
        one_cfg(n_samples=50)
    with pytest.raises(ValueError):
        two_cfg(box2=Box.from_centers([5.0], 1.0, [8.0], 1.0))
    with pytest.raises(ValueError):
        two_cfg(half_width=0.0)


def test_deterministic_field_gives_indicator():
    ev = free_levels(BOX, 0.25)
    energy = float(ev[3]) + 0.03
    rep = wegner_one(one_cfg(kernel=ZERO, energy=energy, n_samples=100))
    assert rep.p_hat.tolist() == [0.0, 1.0, 1.0]
    assert math.isnan(rep.constant)


def test_one_volume_monotone_and_factors():
    rep = wegner_one(one_cfg(interaction=InteractionPotential(r1=1.0, amplitude=1.0)))
    assert rep.monotone and rep.checks["monotone"]
    f = rep.factors
    assert f["volume"] == BOX.volume
    for r in rep.rows:
        assert r.ci_lo <= r.p_hat <= r.ci_hi
        assert r.modulus == closed_form_modulus(4 * f["Z"] * r.epsilon)
        assert r.rhs_unit == pytest.approx(rhs_bound_one(r.epsilon, f["volume"], f["moment"], f["Z"]), rel=1e-14)
        assert r.slope == pytest.approx(r.p_hat / r.epsilon)
    assert max(r.p_hat / r.rhs_unit for r in rep.rows) == rep.constant


def test_too_many_failures_abort():
    # a hard core wider than the box empties every sample's operator
    core = InteractionPotential(r1=10.0, amplitude=0.0, r0=9.0)
    with pytest.raises(RunError, match="failed"):
        wegner_one(one_cfg(box=Box.from_centers([0.0], 1.0, [0.0], 1.0), interaction=core, n_samples=100))


def test_rhs_bound_one_examples():
    assert rhs_bound_one(0.0, 4, 10, 0.858) == 0.0
    base = rhs_bound_one(0.05, 4, 10, 0.858)
    assert rhs_bound_one(0.05, 8, 10, 0.858) == pytest.approx(2 * base)
    oracle = 4 * 10 * (stats.norm.cdf(0.0858) - stats.norm.cdf(-0.0858))
    assert base == pytest.approx(oracle, rel=1e-12)
    assert base == pytest.approx(2.737, rel=2e-3)


@given(st.floats(0, 0.99), st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0.1, 5), st.floats(0.1, 5))
def test_rhs_bound_two_symmetric(eps, vol1, vol2, z1, z2):
    a = rhs_bound_two(eps, vol1, vol2, 7.0, z1, z2)
    b = rhs_bound_two(eps, vol2, vol1, 7.0, z2, z1)
    assert a == pytest.approx(b, rel=1e-14)
    assert rhs_bound_two(0.0, vol1, vol2, 7.0, z1, z2) == 0.0


def test_two_volume_congruent_boxes_without_noise_always_hit():
    # same shapes, zero field: both restricted spectra coincide, so the distance is 0
    ev = free_levels(BOX, 0.25)
    cfg = two_cfg(kernel=ZERO, center=float(ev[0]), half_width=0.5, n_samples=100)
    rep = wegner_two(cfg)
    assert rep.p_hat.tolist() == [1.0, 1.0, 1.0]


def test_two_volume_interval_below_spectrum_never_hits():
    rep = wegner_two(two_cfg(center=-100.0, half_width=1.0, n_samples=100))
    assert rep.p_hat.tolist() == [0.0, 0.0, 0.0]
    assert rep.factors["mean_count"] == 0.0


def test_two_volume_rhs_recomputes():
    rep = wegner_two(two_cfg(interaction=InteractionPotential(r1=1.0, amplitude=1.0)))
    f = rep.factors
    for r in rep.rows:
        again = rhs_bound_two(r.epsilon, f["volume"], f["volume2"], f["moment"], f["Z"], f["Z2"], c2=rep.constant)
        assert again == pytest.approx(r.rhs, rel=1e-12, abs=1e-12)


def test_theorem_shape_holds_on_gaussian_run():
    rep = wegner_one(one_cfg(n_samples=400, interaction=InteractionPotential(r1=1.0, amplitude=1.0)))
    assert rep.theorem_shape()
