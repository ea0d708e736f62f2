"""End-to-end measurement pipeline: generators -> measurements -> report.

One entry point, :func:`run_estimate`, wires ball volumes, exact resistance
solves, Monte-Carlo walk ensembles, and exact heat kernels into an
ExponentReport.  Random families fan out over environment seeds (optionally
across processes); pooling is geometric (mean of logs), matching quenched
exponent semantics, and per-environment fits ride along in the provenance.
All reductions are ordered by seed, so outputs are byte-identical for a
given configuration regardless of worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .errors import EstimationError, ResourceError, ValidationError
from .estimators import (DEFAULT_ANNULUS_RATIO, DEFAULT_ZETA_DELTA,
                         ExponentReport, FitResult, ScaleSeries, estimate_zeta,
                         fit_exponent)
from .generators import GeneratorSpec, generate
from .network import Network
from .walks import (HEAT_VERTEX_CAP, WalkConfig, dyadic_grid,
                    heat_kernel_exact, simulate_walks)

RANDOM_FAMILIES = ("gff_lattice", "bernoulli_percolation_cluster")
HEAT_FLAG_MASS_TOL = 1e-4
ALL_MEASURES = ("volume", "zeta", "walks", "heat")


@dataclass(frozen=True)
class EstimateConfig:
    """Everything needed to reproduce one estimation run."""

    spec: GeneratorSpec
    seeds: tuple[int, ...] = (0,)
    walkers: int = 1024
    steps: int = 200_000
    walk_seed: int = 1
    heat_steps: int | None = None
    measures: tuple[str, ...] = ALL_MEASURES
    zeta_delta: float = DEFAULT_ZETA_DELTA
    zeta_ratio: int = DEFAULT_ANNULUS_RATIO
    windows: dict = field(default_factory=dict)
    workers: int = 1

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "seeds": list(self.seeds),
                "walkers": self.walkers, "steps": self.steps,
                "walk_seed": self.walk_seed, "heat_steps": self.heat_steps,
                "measures": list(self.measures), "zeta_delta": self.zeta_delta,
                "zeta_ratio": self.zeta_ratio,
                "windows": {k: list(v) for k, v in self.windows.items()},
                "workers": self.workers}


def default_workers() -> int:
    env = os.environ.get("EXPONENT_LAB_THREADS", "").strip()
    if env.isdigit() and int(env) > 0:
        return int(env)
    return 1


def _volume_series(net: Network) -> ScaleSeries:
    safe = net.safe_radius()
    grid = dyadic_grid(2, max(2, safe))
    d = net.root_distance
    c = net.vertex_conductance
    vals = [float(c[d <= R].sum()) for R in grid]
    return ScaleSeries("volume", grid, vals)


def _sigma_series(stats) -> ScaleSeries:
    rows = stats.sigma_summary()
    return ScaleSeries("sigma",
                       [r.scale for r in rows],
                       [r.mean for r in rows],
                       stderr=[r.stderr for r in rows],
                       censor_frac=[r.censor_frac for r in rows])


def _maxdisp_series(stats) -> ScaleSeries:
    rows = stats.maxdisp_summary()
    return ScaleSeries("maxdisp",
                       [r.scale for r in rows],
                       [r.mean for r in rows],
                       stderr=[r.stderr for r in rows],
                       censor_frac=[r.censor_frac for r in rows])


def _return_series(net: Network, n_max: int) -> ScaleSeries:
    hk = heat_kernel_exact(net, n_max)
    grid = dyadic_grid(2, n_max)
    idx = grid - 1
    censor = (hk.heat_flag_mass[idx] > HEAT_FLAG_MASS_TOL).astype(float)
    return ScaleSeries("return_prob", grid, hk.return_prob[idx],
                       censor_frac=censor)


def measure_environment(spec: GeneratorSpec, cfg: EstimateConfig) -> dict:
    """All requested raw series for one generated environment."""
    net = generate(spec)
    out: dict[str, ScaleSeries] = {}
    if "volume" in cfg.measures:
        out["volume"] = _volume_series(net)
    if "zeta" in cfg.measures:
        z = estimate_zeta(net, delta=cfg.zeta_delta, ratio=cfg.zeta_ratio)
        out["reff_point"] = z.point_series
        out["reff_increment"] = z.increment_series
        out["reff_annulus"] = z.ratio_series
        if z.delta_series is not None:
            out["reff_annulus_thin"] = z.delta_series
    if "walks" in cfg.measures:
        wc = WalkConfig(n_steps=cfg.steps, n_walkers=cfg.walkers,
                        seed=cfg.walk_seed ^ (spec.seed * 0x9E3779B1 & 0xFFFFFFFF))
        stats = simulate_walks(net, wc)
        out["sigma"] = _sigma_series(stats)
        out["maxdisp"] = _maxdisp_series(stats)
    if "heat" in cfg.measures:
        n_max = cfg.heat_steps
        if n_max is None:
            n_max = 1 << 13
        if net.n <= HEAT_VERTEX_CAP:
            out["return_prob"] = _return_series(net, n_max)
    return {k: s.to_dict() for k, s in out.items()}


def _pool_series(dicts: list[dict], key: str) -> ScaleSeries | None:
    """Geometric pooling (mean of logs) over environments, aligned on the
    intersection of scales; censoring fractions are averaged."""
    present = [d[key] for d in dicts if key in d]
    if not present:
        return None
    common = sorted(set.intersection(*({float(s) for s in p["scale"]} for p in present)))
    if not common:
        return None
    logs, cens = [], []
    for p in present:
        lookup = {float(s): (v, c) for s, v, c in
                  zip(p["scale"], p["value"], p["censor_frac"])}
        logs.append([math.log(max(lookup[s][0], 1e-300)) for s in common])
        cens.append([lookup[s][1] for s in common])
    vals = np.exp(np.mean(logs, axis=0))
    spread = np.std(logs, axis=0, ddof=1) / math.sqrt(len(logs)) \
        if len(logs) > 1 else np.zeros(len(common))
    return ScaleSeries(present[0]["kind"], common, vals,
                       stderr=vals * spread,
                       censor_frac=np.max(cens, axis=0))


_FIT_SOURCES = {
    "d_f": "volume",
    "d_w": "sigma",
    "beta": "maxdisp",
    "d_s": "return_prob",
    "zeta_tilde": "reff_annulus",
    "zeta_0": "reff_increment",
}


def run_estimate(cfg: EstimateConfig) -> ExponentReport:
    """Generate, measure, pool, and fit; returns the exponent report."""
    specs = [replace(cfg.spec, seed=int(s)) for s in cfg.seeds]
    workers = cfg.workers if cfg.workers > 0 else default_workers()
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            raw = list(ex.map(measure_environment, specs,
                              [cfg] * len(specs)))
    else:
        raw = [measure_environment(s, cfg) for s in specs]

    series: dict[str, ScaleSeries] = {}
    for key in ("volume", "sigma", "maxdisp", "return_prob", "reff_point",
                "reff_increment", "reff_annulus", "reff_annulus_thin"):
        pooled = _pool_series(raw, key)
        if pooled is not None:
            series[key] = pooled

    estimates: dict[str, FitResult] = {}
    for name, source in _FIT_SOURCES.items():
        if source in series:
            estimates[name] = fit_exponent(series[source],
                                           cfg.windows.get(name))
    per_env = {}
    if len(raw) > 1:
        for name, source in _FIT_SOURCES.items():
            fits = []
            for d in raw:
                if source in d:
                    try:
                        fits.append(fit_exponent(ScaleSeries(**{
                            k: d[source][k] for k in
                            ("kind", "scale", "value", "stderr", "censor_frac")}),
                            cfg.windows.get(name)).exponent)
                    except EstimationError:
                        pass
            if fits:
                per_env[name] = fits
    report = ExponentReport(
        estimates=estimates, series=series,
        provenance={"artifact_version": __version__,
                    "config": cfg.to_dict(),
                    "per_environment": per_env})
    return report
