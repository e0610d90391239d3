"""Eigenvalues of assembled Hamiltonians, window counts and spectral distance."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy import linalg as sla
from scipy.sparse import linalg as spla

from .hamiltonian import DiscreteHamiltonian, assemble

__all__ = [
    "DENSE_LIMIT",
    "SpectralError",
    "Spectrum",
    "eigensolve",
    "shift_check",
    "count_in_window",
    "spectral_distance",
]

#: Largest operator dimension handled by the dense solver.
DENSE_LIMIT = 4096


class SpectralError(RuntimeError):
    """Eigensolver failure or a query outside the computed spectral range."""


@dataclass(frozen=True)
class Spectrum:
    """Sorted eigenvalues (with multiplicity) of a symmetric operator.

    ``covered_up_to`` is the energy below which every eigenvalue is known
    to be present: ``inf`` for a complete spectrum, the largest computed
    eigenvalue for a lowest-k computation.
    """

    eigenvalues: np.ndarray
    dimension: int
    method: str

    @property
    def count_computed(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def complete(self) -> bool:
        return self.count_computed == self.dimension

    @property
    def covered_up_to(self) -> float:
        return math.inf if self.complete else float(self.eigenvalues[-1])

    def restrict(self, lo: float, hi: float) -> np.ndarray:
        ev = self.eigenvalues
        return ev[np.searchsorted(ev, lo, "left") : np.searchsorted(ev, hi, "right")]

    def to_csv(self, path) -> None:
        data = np.column_stack([np.arange(self.count_computed), self.eigenvalues])
        np.savetxt(path, data, delimiter=",", header="index,eigenvalue", comments="", fmt=["%d", "%.17g"])


Operator = Union[DiscreteHamiltonian, np.ndarray, sp.spmatrix]


def _as_matrix(H: Operator):
    if isinstance(H, DiscreteHamiltonian):
        return H.operator
    return H


def eigensolve(
    H: Operator,
    k: Optional[int] = None,
    method: str = "auto",
    dense_limit: int = DENSE_LIMIT,
    maxiter: Optional[int] = None,
    residual_tol: float = 1e-8,
) -> Spectrum:
    """Eigenvalues of a real symmetric operator in nondecreasing order.

    Dense mode returns the whole spectrum.  Iterative mode returns the
    lowest ``k`` eigenvalues and checks every residual
    ``|H psi - E psi| <= residual_tol * |H|``.
    """
    A = _as_matrix(H)
    n = A.shape[0]
    if n < 1:
        raise SpectralError("operator has dimension 0")
    if method == "auto":
        method = "dense" if (n <= dense_limit or k is None or k >= n - 1) else "iterative"
    if method == "dense":
        M = A.toarray() if sp.issparse(A) else np.asarray(A)
        ev = sla.eigvalsh(M)
        return Spectrum(np.sort(ev), n, "dense")
    if method != "iterative":
        raise ValueError(f"unknown eigensolver method {method!r}")
    if k is None or not 1 <= k < n - 1:
        raise ValueError(f"iterative mode needs 1 <= k < {n - 1}, got {k}")
    A = sp.csr_matrix(A)
    try:
        vals, vecs = spla.eigsh(A, k=k, which="SA", maxiter=maxiter, tol=0)
    except spla.ArpackNoConvergence as exc:
        raise SpectralError(
            f"Lanczos did not converge: {len(exc.eigenvalues)} of {k} eigenpairs after maxiter={maxiter}"
        ) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    norm = abs(spla.eigsh(A, k=1, which="LM", return_eigenvectors=False)[0])
    res = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
    worst = float(res.max())
    if worst > residual_tol * norm:
        raise SpectralError(f"residual {worst:.3e} exceeds {residual_tol:g} * |H| = {residual_tol * norm:.3e}")
    return Spectrum(vals, n, "iterative")


def shift_check(Hd: DiscreteHamiltonian, t: float) -> float:
    """Max deviation from ``E_j(v + t) = E_j(v) + 2 g t`` over all levels."""
    shifted = assemble(Hd.box, Hd.h, Hd.interaction, Hd.field.shifted(t), Hd.g)
    e0 = eigensolve(Hd, method="dense").eigenvalues
    e1 = eigensolve(shifted, method="dense").eigenvalues
    return float(np.max(np.abs(e1 - e0 - 2.0 * Hd.g * t)))


def count_in_window(S: Spectrum, lo: float, hi: float) -> int:
    """Number of eigenvalues in ``[lo, hi]``, counted with multiplicity."""
    if lo > hi:
        raise ValueError(f"empty window [{lo}, {hi}]")
    if hi > S.covered_up_to:
        raise SpectralError(f"window top {hi} exceeds computed range (up to {S.covered_up_to}); count may be short")
    return int(S.restrict(lo, hi).shape[0])


def spectral_distance(S: Spectrum, S2: Spectrum, J: tuple[float, float]) -> float:
    """Smallest gap between eigenvalues of ``S`` and ``S2`` lying in ``J``.

    Returns ``inf`` when either spectrum has no eigenvalue in ``J``.
    """
    lo, hi = J
    for s in (S, S2):
        if hi > s.covered_up_to:
            raise SpectralError(f"interval top {hi} exceeds computed range (up to {s.covered_up_to})")
    a, b = S.restrict(lo, hi), S2.restrict(lo, hi)
    if a.size == 0 or b.size == 0:
        return math.inf
    pos = np.searchsorted(b, a)
    right = np.abs(b[np.minimum(pos, b.size - 1)] - a)
    left = np.abs(a - b[np.maximum(pos - 1, 0)])
    return float(min(right.min(), left.min()))
