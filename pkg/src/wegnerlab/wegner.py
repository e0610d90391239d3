"""Monte Carlo estimates of eigenvalue concentration and their bounds.

One-volume: probability that some eigenvalue of ``H_box`` lies within
``eps`` of an energy ``E``.  Two-volume: probability that eigenvalues of
two distant boxes, both inside an interval ``J``, come within ``eps`` of
each other.  Both boxes of a two-volume run see one shared field sample.

The multiplicative constants of the bounds are not known, so each report
fits them as ``max_eps p_hat / rhs_unit`` where ``rhs_unit`` is the bound
with unit constant.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .geometry import Box, distance_condition
from .hamiltonian import InteractionPotential, assemble, sup_potential
from .kernel_field import (
    CovarianceKernel,
    GaussianField,
    GridSpec,
    closed_form_modulus,
    gram_assemble,
    modulus_bar,
    modulus_empirical,
)
from .spectral import count_in_window, eigensolve, spectral_distance
from .streams import AUX_STREAM, derive_stream, run_indexed, stream_id

__all__ = [
    "RunError",
    "WegnerOneConfig",
    "WegnerTwoConfig",
    "EpsilonRow",
    "WegnerReport",
    "wilson_interval",
    "wegner_one",
    "wegner_two",
    "rhs_bound_one",
    "rhs_bound_two",
]

log = logging.getLogger(__name__)

#: Largest tolerated fraction of failed samples.
MAX_FAILURE_RATE = 0.01


class RunError(RuntimeError):
    """Too many failed Monte Carlo samples."""


def wilson_interval(hits: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(hits), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def rhs_bound_one(
    eps: float,
    volume: float,
    moment: float,
    Z: float,
    c1: float = 1.0,
    modulus: Callable[[float], float] = closed_form_modulus,
) -> float:
    """``c1 * |box| * E(E + 2 + W_bar)^d * mu(4 Z eps)``."""
    return c1 * volume * moment * modulus(4.0 * Z * eps)


def rhs_bound_two(
    eps: float,
    volume: float,
    volume2: float,
    moment: float,
    Z: float,
    Z2: float,
    c2: float = 1.0,
    modulus: Callable[[float], float] = closed_form_modulus,
    modulus2: Optional[Callable[[float], float]] = None,
) -> float:
    """``c2 |box| |box'| E[(..)^d (..')^d] max(mu(4 eps Z), mu'(4 eps Z'))``."""
    modulus2 = modulus if modulus2 is None else modulus2
    return c2 * volume * volume2 * moment * max(modulus(4.0 * eps * Z), modulus2(4.0 * eps * Z2))


def _check_eps(epsilons: Sequence[float]) -> tuple:
    eps = tuple(float(e) for e in epsilons)
    if not eps:
        raise ValueError("epsilon grid is empty")
    for e in eps:
        if not 0 < e < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {e}")
    return tuple(sorted(eps))


@dataclass(frozen=True)
class WegnerOneConfig:
    box: Box
    energy: float
    epsilons: tuple
    kernel: CovarianceKernel
    interaction: InteractionPotential
    h: float
    n_samples: int
    seed: int
    g: float = 1.0
    modulus_mode: str = "closed_form_gaussian"
    modulus_n_outer: int = 10
    modulus_n_inner: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "epsilons", _check_eps(self.epsilons))
        if self.n_samples < 100:
            raise ValueError("n_samples must be at least 100")


@dataclass(frozen=True)
class WegnerTwoConfig:
    box: Box
    box2: Box
    center: float
    half_width: float
    epsilons: tuple
    kernel: CovarianceKernel
    interaction: InteractionPotential
    h: float
    n_samples: int
    seed: int
    g: float = 1.0
    modulus_mode: str = "closed_form_gaussian"
    modulus_n_outer: int = 10
    modulus_n_inner: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "epsilons", _check_eps(self.epsilons))
        if not self.half_width > 0:
            raise ValueError("interval half-width delta must be positive")
        if self.n_samples < 100:
            raise ValueError("n_samples must be at least 100")
        if not distance_condition(self.box, self.box2):
            raise ValueError("boxes violate the distance condition min(|u-u'|, |S(u)-u'|) > 8 max L")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.center - self.half_width, self.center + self.half_width)


@dataclass(frozen=True)
class EpsilonRow:
    epsilon: float
    hits: int
    n: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    modulus: float
    rhs_unit: float
    rhs: float
    slope: float


@dataclass
class WegnerReport:
    estimator: str
    rows: list
    factors: dict
    n_failed: int
    constant: float
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def p_hat(self) -> np.ndarray:
        return np.array([r.p_hat for r in self.rows])

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.rows])

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.p_hat) >= 0))

    def ratio_to_modulus(self) -> np.ndarray:
        """``p_hat / mu(4 Z eps)`` for each epsilon."""
        return np.array([r.p_hat / r.modulus if r.modulus > 0 else math.nan for r in self.rows])

    def theorem_shape(self, calibrate: int = -1) -> bool:
        """Fit the constant at one epsilon, then check every row's Wilson band."""
        ref = self.rows[calibrate]
        if not ref.rhs_unit > 0:
            return False
        c = ref.p_hat / ref.rhs_unit
        return all(r.ci_lo <= c * r.rhs_unit or r.rhs_unit == 0 and r.hits == 0 for r in self.rows)

    def records(self) -> list[dict]:
        out = []
        for r in self.rows:
            rec = {"estimator": self.estimator}
            rec.update(r.__dict__)
            rec["constant"] = self.constant
            rec.update(self.factors)
            out.append(rec)
        return out


def _rows(hit_matrix, epsilons, moduli, rhs_units):
    n = hit_matrix.shape[0]
    hits = hit_matrix.sum(axis=0)
    ratios = [h / n / u for h, u in zip(hits, rhs_units) if u > 0]
    const = max(ratios) if ratios else math.nan
    rows = []
    for e, k, mu, unit in zip(epsilons, hits, moduli, rhs_units):
        lo, hi = wilson_interval(k, n)
        rows.append(EpsilonRow(e, int(k), n, float(k / n), lo, hi, mu, unit, const * unit, float(k / n / e)))
    return rows, const


def _failures(results, n):
    failed = [(i, r) for i, r in enumerate(results) if isinstance(r, str)]
    if len(failed) > MAX_FAILURE_RATE * n:
        i, msg = failed[0]
        raise RunError(f"{len(failed)} of {n} samples failed (first: sample {i}: {msg})")
    return failed


def _empirical_modulus(cfg, sets, b, rng):
    """Empirical mu_bar for one box given a list of (box, probes)."""
    box, probes = sets
    if probes:
        return modulus_bar(
            box, b, "empirical", kernel=cfg.kernel, h=cfg.h, probes=probes,
            n_outer=cfg.modulus_n_outer, n_inner=cfg.modulus_n_inner, rng=rng,
        )
    est = modulus_empirical(
        cfg.kernel, box.shadow(), None, cfg.h, b, cfg.modulus_n_outer, cfg.modulus_n_inner, rng
    )
    return est.value


def _shadow_Z(kernel: CovarianceKernel, box: Box, h: float) -> float:
    if kernel.degenerate:
        return math.nan
    return gram_assemble(kernel, GridSpec(box.shadow(), h), with_basis=False).Z


# one-volume ------------------------------------------------------------------

def _one_ctx(cfg: WegnerOneConfig):
    grid = GridSpec(cfg.box.shadow(), cfg.h)
    fld = GaussianField(cfg.kernel, grid)
    _ = fld.factor
    return cfg, fld


def _one_sample(ctx, i):
    cfg, fld = ctx
    try:
        v = fld.sample(derive_stream(cfg.seed, i), stream_id(cfg.seed, i))
        Hd = assemble(cfg.box, cfg.h, cfg.interaction, v, cfg.g)
        ev = eigensolve(Hd, method="dense").eigenvalues
        dmin = float(np.min(np.abs(ev - cfg.energy)))
        return dmin, sup_potential(Hd).w_bar
    except Exception as exc:  # noqa: BLE001 - counted and reported
        return f"{type(exc).__name__}: {exc}"


def wegner_one(cfg: WegnerOneConfig, workers: int = 1) -> WegnerReport:
    """Estimate ``P(exists k: |E - E_k| <= eps)`` for every eps of the grid."""
    n = cfg.n_samples
    results = run_indexed(_one_sample, _one_ctx, (cfg,), range(n), workers)
    failed = _failures(results, n)
    ok = [r for r in results if not isinstance(r, str)]
    dmin = np.array([r[0] for r in ok])
    wbar = np.array([r[1] for r in ok])
    d = cfg.box.dim
    moment = math.fsum((cfg.energy + 2.0 + wbar) ** d) / len(ok)
    Z = _shadow_Z(cfg.kernel, cfg.box, cfg.h)
    volume = cfg.box.volume
    if math.isnan(Z):
        moduli = [math.nan] * len(cfg.epsilons)
    elif cfg.modulus_mode == "empirical":
        rng = derive_stream(cfg.seed, AUX_STREAM)
        moduli = [_empirical_modulus(cfg, (cfg.box, ()), 4 * Z * e, rng) for e in cfg.epsilons]
    else:
        moduli = [closed_form_modulus(4 * Z * e) for e in cfg.epsilons]
    units = [volume * moment * mu for mu in moduli]
    hit = dmin[:, None] <= np.array(cfg.epsilons)[None, :]
    rows, const = _rows(hit, cfg.epsilons, moduli, units)
    report = WegnerReport(
        estimator="one-volume",
        rows=rows,
        factors={"volume": volume, "moment": moment, "Z": Z, "energy": cfg.energy, "dim": d},
        n_failed=len(failed),
        constant=const,
        failures=[f"{i}: {m}" for i, m in failed],
    )
    report.checks["monotone"] = report.monotone
    log.info("one-volume: %d samples, %d failed, c1_hat=%.6g", n, len(failed), const)
    return report


# two-volume ------------------------------------------------------------------

def _two_ctx(cfg: WegnerTwoConfig):
    grid = GridSpec(cfg.box.shadow().union(cfg.box2.shadow()), cfg.h)
    fld = GaussianField(cfg.kernel, grid)
    _ = fld.factor
    return cfg, fld


def _two_sample(ctx, i):
    cfg, fld = ctx
    try:
        v = fld.sample(derive_stream(cfg.seed, i), stream_id(cfg.seed, i))
        H1 = assemble(cfg.box, cfg.h, cfg.interaction, v, cfg.g)
        H2 = assemble(cfg.box2, cfg.h, cfg.interaction, v, cfg.g)
        S1 = eigensolve(H1, method="dense")
        S2 = eigensolve(H2, method="dense")
        J = cfg.interval
        dist = spectral_distance(S1, S2, J)
        n1 = count_in_window(S1, *J)
        n2 = count_in_window(S2, *J)
        return dist, sup_potential(H1).w_bar, sup_potential(H2).w_bar, n1, n2
    except Exception as exc:  # noqa: BLE001 - counted and reported
        return f"{type(exc).__name__}: {exc}"


def wegner_two(cfg: WegnerTwoConfig, workers: int = 1) -> WegnerReport:
    """Estimate ``P(dist(sigma(H) n J, sigma(H') n J) <= eps)`` with a shared field."""
    n = cfg.n_samples
    results = run_indexed(_two_sample, _two_ctx, (cfg,), range(n), workers)
    failed = _failures(results, n)
    ok = [r for r in results if not isinstance(r, str)]
    dist = np.array([r[0] for r in ok])
    w1 = np.array([r[1] for r in ok])
    w2 = np.array([r[2] for r in ok])
    c1 = np.array([r[3] for r in ok], dtype=float)
    c2 = np.array([r[4] for r in ok], dtype=float)
    d = cfg.box.dim
    top = cfg.center + cfg.half_width + 1.0
    moment = math.fsum((top + w1) ** d * (top + w2) ** d) / len(ok)
    Z1 = _shadow_Z(cfg.kernel, cfg.box, cfg.h)
    Z2 = _shadow_Z(cfg.kernel, cfg.box2, cfg.h)
    vol1, vol2 = cfg.box.volume, cfg.box2.volume
    if math.isnan(Z1) or math.isnan(Z2):
        moduli = [math.nan] * len(cfg.epsilons)
    elif cfg.modulus_mode == "empirical":
        rng = derive_stream(cfg.seed, AUX_STREAM)
        moduli = [
            max(
                _empirical_modulus(cfg, (cfg.box, [cfg.box2]), 4 * e * Z1, rng),
                _empirical_modulus(cfg, (cfg.box2, [cfg.box]), 4 * e * Z2, rng),
            )
            for e in cfg.epsilons
        ]
    else:
        moduli = [max(closed_form_modulus(4 * e * Z1), closed_form_modulus(4 * e * Z2)) for e in cfg.epsilons]
    units = [vol1 * vol2 * moment * mu for mu in moduli]
    hit = dist[:, None] <= np.array(cfg.epsilons)[None, :]
    rows, const = _rows(hit, cfg.epsilons, moduli, units)
    if np.std(c1) > 0 and np.std(c2) > 0:
        corr = float(np.corrcoef(c1, c2)[0, 1])
    else:
        corr = math.nan
    J = cfg.interval
    report = WegnerReport(
        estimator="two-volume",
        rows=rows,
        factors={
            "volume": vol1,
            "volume2": vol2,
            "moment": moment,
            "Z": Z1,
            "Z2": Z2,
            "J_lo": J[0],
            "J_hi": J[1],
            "dim": d,
            "count_corr": corr,
            "mean_count": float(c1.mean()),
            "mean_count2": float(c2.mean()),
        },
        n_failed=len(failed),
        constant=const,
        failures=[f"{i}: {m}" for i, m in failed],
    )
    report.checks["monotone"] = report.monotone
    log.info("two-volume: %d samples, %d failed, c2_hat=%.6g", n, len(failed), const)
    return report
