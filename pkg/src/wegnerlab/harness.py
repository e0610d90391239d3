"""Experiment configuration, orchestration and persistence.

A run directory holds

* ``manifest.json`` -- config hash, code version, seed rule, timing, failures
* ``records.jsonl`` -- one machine record per line, floats with 17 digits
* ``report.txt``    -- human-readable table rendered from the records
* ``*.dat``         -- two-column data files for plotting

Everything except the manifest is a pure function of the config and seed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli
from scipy import stats

from . import __version__
from .geometry import Box, classify_separation, cube_distance, random_box_pair
from .hamiltonian import InteractionPotential
from .kernel_field import (
    CovarianceKernel,
    GridSpec,
    KernelError,
    closed_form_modulus,
    coefficient,
    gram_assemble,
    modulus_empirical,
    sup_field,
)
from .streams import AUX_STREAM, SEED_RULE, derive_stream, stream_id
from .wegner import WegnerOneConfig, WegnerTwoConfig, wegner_one, wegner_two

__all__ = [
    "ESTIMATORS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run",
    "render_report",
    "read_records",
    "format_record",
    "lemma_check",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("one-volume", "two-volume", "field-diagnostics", "geometry-check", "modulus")


class ConfigError(ValueError):
    """Malformed configuration or a violated precondition."""


@dataclass(frozen=True)
class ExperimentConfig:
    estimator: str
    seed: int
    samples: int
    h: float
    box: Optional[Box] = None
    box2: Optional[Box] = None
    kernel: CovarianceKernel = field(default_factory=CovarianceKernel)
    interaction: InteractionPotential = field(default_factory=InteractionPotential.none)
    g: float = 1.0
    epsilons: tuple = ()
    energy: Optional[float] = None
    interval: Optional[tuple] = None
    modulus: dict = field(default_factory=dict)
    geometry_check: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    workers: int = 1
    out: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def config_hash(self) -> str:
        """Hash of the result-relevant settings (workers and out excluded)."""
        body = {k: v for k, v in self.raw.items() if k not in ("workers", "out")}
        body["seed"] = self.seed
        text = json.dumps(body, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing field '{where}{key}'")
    return section[key]


def _box(rec: Any, where: str) -> Box:
    if not isinstance(rec, dict):
        raise ConfigError(f"'{where}' must be a table with center1, L1, center2, L2")
    for k in ("center1", "L1", "center2", "L2"):
        _need(rec, k, where + ".")
    try:
        return Box.from_record(rec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"'{where}': {exc}") from exc


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a parsed config table; the first violated condition is named."""
    est = _need(data, "estimator", "")
    if est not in ESTIMATORS:
        raise ConfigError(f"field 'estimator': unknown value {est!r}; expected one of {ESTIMATORS}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("field 'seed' must be a non-negative integer")
    samples = data.get("samples", 1000)
    if not isinstance(samples, int) or samples < 1:
        raise ConfigError("field 'samples' must be a positive integer")
    h = float(data.get("h", 0.1))
    if not h > 0:
        raise ConfigError("field 'h' must be positive")
    geo = data.get("geometry", {})
    box = _box(geo["box"], "geometry.box") if "box" in geo else None
    box2 = _box(geo["box2"], "geometry.box2") if "box2" in geo else None
    try:
        kernel = CovarianceKernel.from_record(data.get("kernel", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"section 'kernel': {exc}") from exc
    try:
        interaction = InteractionPotential.from_record(data.get("interaction", {"amplitude": 0.0}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"section 'interaction': {exc}") from exc
    eps = tuple(float(e) for e in data.get("epsilons", ()))
    for e in eps:
        if not 0 < e < 1:
            raise ConfigError(f"field 'epsilons': {e} is outside (0, 1)")
    interval = None
    if "interval" in data:
        iv = data["interval"]
        interval = (float(_need(iv, "center", "interval.")), float(_need(iv, "half_width", "interval.")))
        if not interval[1] > 0:
            raise ConfigError("field 'interval.half_width' must be positive")
    cfg = ExperimentConfig(
        estimator=est,
        seed=seed,
        samples=samples,
        h=h,
        box=box,
        box2=box2,
        kernel=kernel,
        interaction=interaction,
        g=float(data.get("g", 1.0)),
        epsilons=eps,
        energy=float(data["energy"]) if "energy" in data else None,
        interval=interval,
        modulus=dict(data.get("modulus", {})),
        geometry_check=dict(data.get("geometry_check", {})),
        diagnostics=dict(data.get("diagnostics", {})),
        workers=int(data.get("workers", 1)),
        out=data.get("out"),
        raw=data,
    )
    _validate(cfg)
    return cfg


def _check_grid(box: Box, h: float, where: str):
    for j, cube in ((1, box.cube1), (2, box.cube2)):
        n = cube.side / h
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 2:
            raise ConfigError(f"'{where}': side {cube.side} of cube {j} is not a multiple >= 2 of h={h}")


def _check_kernel(cfg: ExperimentConfig, box: Box):
    if cfg.kernel.degenerate:
        return
    try:
        gram_assemble(cfg.kernel, GridSpec(box.shadow(), cfg.h), with_basis=False)
    except KernelError as exc:
        raise ConfigError(f"section 'kernel': {exc}") from exc


def _validate(cfg: ExperimentConfig):
    est = cfg.estimator
    if est == "geometry-check":
        return
    if cfg.box is None:
        raise ConfigError("missing table 'geometry.box'")
    _check_grid(cfg.box, cfg.h, "geometry.box")
    if est in ("one-volume", "two-volume") and not cfg.epsilons:
        raise ConfigError("missing field 'epsilons'")
    if est in ("one-volume", "two-volume") and cfg.samples < 100:
        raise ConfigError("field 'samples' must be at least 100 for Wegner estimators")
    if est == "one-volume" and cfg.energy is None:
        raise ConfigError("missing field 'energy'")
    if est == "two-volume":
        if cfg.box2 is None:
            raise ConfigError("missing table 'geometry.box2'")
        _check_grid(cfg.box2, cfg.h, "geometry.box2")
        if cfg.interval is None:
            raise ConfigError("missing table 'interval'")
        from .geometry import distance_condition

        if not distance_condition(cfg.box, cfg.box2):
            raise ConfigError("boxes violate the distance condition min(|u-u'|, |S(u)-u'|) > 8 max L")
        try:
            GridSpec(cfg.box.shadow().union(cfg.box2.shadow()), cfg.h)
        except KernelError as exc:
            raise ConfigError(f"table 'geometry': {exc}") from exc
        _check_kernel(cfg, cfg.box2)
    _check_kernel(cfg, cfg.box)
    if est in ("field-diagnostics", "modulus") and cfg.kernel.degenerate:
        raise ConfigError("section 'kernel': the field is identically zero")


def load_config(path) -> ExperimentConfig:
    """Read and validate a TOML config file."""
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


# record formatting -------------------------------------------------------------

def _fmt(x: Any) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null" if math.isnan(x) else json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def format_record(rec: dict) -> str:
    """One JSON line; floats printed with 17 significant digits."""
    return _fmt(rec)


def read_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _num(x) -> float:
    if x is None:
        return math.nan
    if isinstance(x, str):
        return float(x)
    return float(x)


# estimators -------------------------------------------------------------------

def lemma_check(trials: int, dims=(1, 2), seed: int = 0) -> list[dict]:
    """Randomized exhaustiveness check of the separation lemma.

    Only pairs satisfying the distance condition count as trials.  Each
    verdict is cross-checked by a direct interval-overlap test.
    """
    out = []
    for d in dims:
        rng = derive_stream(seed, d)
        n = complete = partial = violations = disagree = 0
        while n < trials:
            b1, b2 = random_box_pair(rng, d)
            verdict = classify_separation(b1, b2)
            if not verdict.distance_condition_met:
                continue
            n += 1
            complete += verdict.complete
            partial += bool(verdict.partial_cases)
            violations += not verdict.classified
            if _brute_verdict(b1, b2) != (verdict.complete, verdict.partial_cases):
                disagree += 1
        out.append(
            {
                "estimator": "geometry-check",
                "dim": d,
                "trials": n,
                "classified": n - violations,
                "violations": violations,
                "complete": complete,
                "partial": partial,
                "brute_force_disagreements": disagree,
            }
        )
    return out


def _meets(a, b) -> bool:
    # closed intervals overlap on every axis
    return all(
        max(a.lower[i], b.lower[i]) <= min(a.upper[i], b.upper[i]) for i in range(a.dim)
    )


def _brute_verdict(b1: Box, b2: Box):
    p = [b1.cube1, b1.cube2]
    q = [b2.cube1, b2.cube2]
    complete = not any(_meets(x, y) for x in p for y in q)
    named = {"A": (p[0], [p[1]] + q), "B": (p[1], [p[0]] + q), "C": (q[0], p + [q[1]]), "D": (q[1], p + [q[0]])}
    cases = frozenset(k for k, (c, rest) in named.items() if not any(_meets(c, r) for r in rest))
    return complete, cases


def _field_diagnostics(cfg: ExperimentConfig) -> list[dict]:
    n_coef = int(cfg.diagnostics.get("n_coefficients", 5))
    grid = GridSpec(cfg.box.shadow(), cfg.h)
    space = gram_assemble(cfg.kernel, grid)
    if n_coef > space.basis.shape[1]:
        raise ConfigError(f"field 'diagnostics.n_coefficients' exceeds the basis size {space.basis.shape[1]}")
    B = space.basis[:, :n_coef]
    N = cfg.samples
    coefs = np.empty((N, n_coef))
    sups = np.empty(N)
    for i in range(N):
        v = space.field.sample(derive_stream(cfg.seed, i), stream_id(cfg.seed, i))
        coefs[i] = [coefficient(space, v, B[:, k]) for k in range(n_coef)]
        sups[i] = sup_field(v)
    cov = coefs.T @ coefs / N
    d = grid.dim
    half = N // 2
    m1 = float(np.mean(sups[:half] ** d))
    m2 = float(np.mean(sups[half:] ** d))
    recs = []
    for k in range(n_coef):
        ks = stats.kstest(coefs[:, k], "norm")
        recs.append(
            {
                "estimator": "field-diagnostics",
                "coefficient": k,
                "variance": float(cov[k, k]),
                "max_offdiag": float(np.max(np.abs(np.delete(cov[k], k)))) if n_coef > 1 else 0.0,
                "ks_stat": float(ks.statistic),
                "ks_pvalue": float(ks.pvalue),
            }
        )
    recs.append(
        {
            "estimator": "field-diagnostics",
            "summary": True,
            "samples": N,
            "Z": space.Z,
            "max_cov_deviation": float(np.max(np.abs(cov - np.eye(n_coef)))),
            "sup_moment": float(np.mean(sups**d)),
            "sup_moment_half1": m1,
            "sup_moment_half2": m2,
        }
    )
    return recs


def _modulus(cfg: ExperimentConfig) -> list[dict]:
    bs = [float(b) for b in cfg.modulus.get("b", [0.5, 1.0, 2.0])]
    n_outer = int(cfg.modulus.get("n_outer", 10))
    n_inner = int(cfg.modulus.get("n_inner", 10_000))
    other = cfg.box2.shadow() if cfg.box2 is not None else None
    rng = derive_stream(cfg.seed, AUX_STREAM)
    ests = modulus_empirical(cfg.kernel, cfg.box.shadow(), other, cfg.h, bs, n_outer, n_inner, rng)
    return [
        {
            "estimator": "modulus",
            "b": e.b,
            "nu_hat": e.value,
            "stderr": e.stderr,
            "closed_form": closed_form_modulus(e.b),
            "linear_bound": e.b / math.sqrt(2 * math.pi),
            "n_outer": e.n_outer,
            "n_inner": e.n_inner,
        }
        for e in ests
    ]


def _wegner_records(cfg: ExperimentConfig, workers: int):
    mod = cfg.modulus
    common = dict(
        epsilons=cfg.epsilons,
        kernel=cfg.kernel,
        interaction=cfg.interaction,
        h=cfg.h,
        n_samples=cfg.samples,
        seed=cfg.seed,
        g=cfg.g,
        modulus_mode=mod.get("mode", "closed_form_gaussian"),
        modulus_n_outer=int(mod.get("n_outer", 10)),
        modulus_n_inner=int(mod.get("n_inner", 10_000)),
    )
    if cfg.estimator == "one-volume":
        rep = wegner_one(WegnerOneConfig(box=cfg.box, energy=cfg.energy, **common), workers)
    else:
        c, dlt = cfg.interval
        rep = wegner_two(WegnerTwoConfig(box=cfg.box, box2=cfg.box2, center=c, half_width=dlt, **common), workers)
    return rep.records(), rep.n_failed


# rendering --------------------------------------------------------------------

def _r6(x) -> str:
    x = _num(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def render_report(records: list[dict]) -> str:
    """Human-readable table; a pure function of the machine records."""
    if not records:
        return "(no records)\n"
    est = records[0]["estimator"]
    lines = [f"estimator: {est}"]
    if est == "geometry-check":
        for r in records:
            lines.append(
                f"separation-lemma d={r['dim']}: {r['classified']}/{r['trials']} classified, "
                f"{r['violations']} violations (complete {r['complete']}, partial {r['partial']}, "
                f"brute-force disagreements {r['brute_force_disagreements']})"
            )
    elif est in ("one-volume", "two-volume"):
        f = records[0]
        if est == "one-volume":
            lines.append(f"E = {_r6(f['energy'])}  |box| = {_r6(f['volume'])}  Z = {_r6(f['Z'])}")
            lines.append(f"moment E(E+2+W)^d = {_r6(f['moment'])}")
        else:
            lines.append(
                f"J = [{_r6(f['J_lo'])}, {_r6(f['J_hi'])}]  |box| = {_r6(f['volume'])}  |box'| = {_r6(f['volume2'])}"
                f"  Z = {_r6(f['Z'])}  Z' = {_r6(f['Z2'])}"
            )
            lines.append(f"product moment = {_r6(f['moment'])}  level-count correlation = {_r6(f['count_corr'])}")
        lines.append(f"fitted constant = {_r6(f['constant'])}")
        lines.append(f"{'epsilon':>10} {'hits':>6} {'p_hat':>10} {'ci_lo':>10} {'ci_hi':>10} {'modulus':>10} {'rhs':>10}")
        for r in records:
            lines.append(
                f"{_r6(r['epsilon']):>10} {r['hits']:>6d} {_r6(r['p_hat']):>10} {_r6(r['ci_lo']):>10} "
                f"{_r6(r['ci_hi']):>10} {_r6(r['modulus']):>10} {_r6(r['rhs']):>10}"
            )
        p = [_num(r["p_hat"]) for r in records]
        lines.append(f"p_hat nondecreasing: {all(b >= a for a, b in zip(p, p[1:]))}")
    elif est == "field-diagnostics":
        for r in records:
            if r.get("summary"):
                lines.append(
                    f"samples {r['samples']}  Z = {_r6(r['Z'])}  max |cov - I| = {_r6(r['max_cov_deviation'])}"
                )
                lines.append(
                    f"E[sup|v|^d] = {_r6(r['sup_moment'])} (halves {_r6(r['sup_moment_half1'])}, "
                    f"{_r6(r['sup_moment_half2'])})"
                )
            else:
                lines.append(
                    f"coefficient {r['coefficient']}: var {_r6(r['variance'])}  KS p = {_r6(r['ks_pvalue'])}"
                )
    elif est == "modulus":
        lines.append(f"{'b':>8} {'nu_hat':>10} {'stderr':>10} {'closed':>10} {'b/sqrt(2pi)':>12}")
        for r in records:
            lines.append(
                f"{_r6(r['b']):>8} {_r6(r['nu_hat']):>10} {_r6(r['stderr']):>10} "
                f"{_r6(r['closed_form']):>10} {_r6(r['linear_bound']):>12}"
            )
    return "\n".join(lines) + "\n"


def _data_files(records: list[dict]) -> dict[str, str]:
    est = records[0]["estimator"]
    if est in ("one-volume", "two-volume"):
        return {
            "p_hat.dat": "".join(f"{format(_num(r['epsilon']), '.17g')} {format(_num(r['p_hat']), '.17g')}\n" for r in records),
            "rhs.dat": "".join(f"{format(_num(r['epsilon']), '.17g')} {format(_num(r['rhs']), '.17g')}\n" for r in records),
        }
    if est == "modulus":
        return {
            "modulus.dat": "".join(f"{format(_num(r['b']), '.17g')} {format(_num(r['nu_hat']), '.17g')}\n" for r in records)
        }
    return {}


def run(
    config,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    out: Optional[os.PathLike] = None,
) -> Path:
    """Execute one experiment and write its artifacts; returns the run directory."""
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    workers = cfg.workers if workers is None else int(workers)
    outdir = Path(out or cfg.out or "run")
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    n_failed = 0
    if cfg.estimator == "geometry-check":
        gc = cfg.geometry_check
        records = lemma_check(int(gc.get("trials", 10_000)), tuple(gc.get("dims", (1, 2))), cfg.seed)
    elif cfg.estimator == "field-diagnostics":
        records = _field_diagnostics(cfg)
    elif cfg.estimator == "modulus":
        records = _modulus(cfg)
    else:
        records, n_failed = _wegner_records(cfg, workers)
    elapsed = time.perf_counter() - t0
    with open(outdir / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(format_record(rec) + "\n")
    (outdir / "report.txt").write_text(render_report(records))
    for name, text in _data_files(records).items():
        (outdir / name).write_text(text)
    manifest = {
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
        "estimator": cfg.estimator,
        "seed": cfg.seed,
        "seed_rule": SEED_RULE,
        "workers": workers,
        "elapsed_seconds": elapsed,
        "failed_samples": n_failed,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    log.info("%s finished in %.2fs -> %s", cfg.estimator, elapsed, outdir)
    return outdir


def rerender(run_dir) -> str:
    """Re-render ``report.txt`` from ``records.jsonl``; the manifest must exist."""
    run_dir = Path(run_dir)
    if not (run_dir / "manifest.json").exists():
        raise ConfigError(f"{run_dir}: no manifest.json; not a valid run directory")
    text = render_report(read_records(run_dir / "records.jsonl"))
    (run_dir / "report.txt").write_text(text)
    return text
