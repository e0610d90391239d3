"""Coefficients of a Gaussian field and the continuity modulus of its ground level.

The field is sampled on the shadow of a box.  Integrating it against a basis
that is orthonormal in the covariance inner product gives iid standard
normal coefficients; the leading one (the ground level) therefore puts at
most b / sqrt(2 pi) mass in any window of width b, even after conditioning
on the rest.

Run:

    python demos/field_and_modulus.py
"""
from __future__ import annotations

import math

import numpy as np

from wegnerlab.geometry import Box
from wegnerlab.kernel_field import (
    CovarianceKernel,
    GridSpec,
    closed_form_modulus,
    coefficient,
    gram_assemble,
    modulus_empirical,
)


def main() -> None:
    box = Box.from_centers([0.0], 1.0, [5.0], 1.0)
    kernel = CovarianceKernel("exponential", scale=1.0, length=1.0, nugget=0.05)
    space = gram_assemble(kernel, GridSpec(box.shadow(), 0.25))
    print(f"{space.grid.n_cells} cells, Z = |1_A|_C = {space.Z:.6f}")

    rng = np.random.default_rng(1)
    coefs = np.array([
        [coefficient(space, v, space.basis[:, k]) for k in range(4)]
        for v in (space.field.sample(rng) for _ in range(2000))
    ])
    print("empirical coefficient covariance (should be close to the identity):")
    print(np.array2string(np.cov(coefs.T), precision=3, suppress_small=True))

    print("\n   b   empirical   closed form   b/sqrt(2 pi)")
    for est in modulus_empirical(kernel, box.shadow(), None, 0.25, [0.25, 0.5, 1.0, 2.0], 10, 10_000, rng):
        print(f"{est.b:4g}   {est.value:9.4f}   {closed_form_modulus(est.b):11.4f}   {est.b / math.sqrt(2 * math.pi):12.4f}")


if __name__ == "__main__":
    main()
