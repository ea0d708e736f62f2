"""Command-line front end.

Subcommands wire generators, measurements, and estimators together with
reproducible configs and machine-readable outputs.  Every run embeds a
provenance block (config echo, artifact version, seed) in its output;
outputs are written atomically and are byte-identical for identical
configurations.  Exit codes: 0 success, 2 validation/resource error,
3 numerical error, 4 truncation contamination.
"""

from __future__ import annotations

import json
import math
import os
import sys
import tempfile

import click
import numpy as np

from . import __version__
from .errors import (EstimationError, ExponentLabError, NumericalError,
                     ResourceError, TruncationError, ValidationError)
from .estimators import (ExponentReport, ScaleSeries, estimate_zeta,
                         fit_exponent, verify_einstein)
from .diagnostics import FUNCTIONALS, mtp_diagnostic, reversibility_swap_test
from .generators import GeneratorSpec, generate
from .network import EdgeWeight, Network
from .pipeline import ALL_MEASURES, EstimateConfig, default_workers, run_estimate
from .random_structures import build_multiscale_weight
from .resistance import ball_resistance
from .walks import WalkConfig, simulate_walks


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".exponent-lab-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=True) + "\n"


def _provenance(params: dict) -> dict:
    return {"artifact_version": __version__, "config": params}


def _load_net(path: str) -> Network:
    with open(path) as f:
        return Network.from_json_dict(json.load(f))


class _Fail(SystemExit):
    pass


def _run(f):
    """Map package exceptions onto the documented exit codes."""
    def wrapper(*a, **kw):
        try:
            return f(*a, **kw)
        except (ValidationError, ResourceError, EstimationError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
        except NumericalError as e:
            click.echo(f"numerical error: {e}", err=True)
            sys.exit(3)
        except TruncationError as e:
            click.echo(f"truncation contamination: {e}", err=True)
            sys.exit(4)
        except ExponentLabError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)
    wrapper.__name__ = f.__name__
    wrapper.__doc__ = f.__doc__
    return wrapper


def _maybe_config(ctx_params: dict, config_path: str | None) -> dict:
    """Merge a JSON config file under the explicit flags (flags win only
    when actually provided on the command line)."""
    if not config_path:
        return ctx_params
    with open(config_path) as f:
        file_params = json.load(f)
    merged = dict(file_params)
    ctx = click.get_current_context()
    for k, v in ctx_params.items():
        src = ctx.get_parameter_source(k)
        if src is not None and src.name != "DEFAULT":
            merged[k] = v
        elif k not in merged:
            merged[k] = v
    return merged


@click.group()
@click.version_option(version=__version__, prog_name="exponent-lab")
def main():
    """Scaling-exponent laboratory for rooted conductance networks."""


def _spec_from_options(family, **kw) -> GeneratorSpec:
    fields = {k: v for k, v in kw.items() if v is not None}
    try:
        return GeneratorSpec(family=family, **fields)
    except TypeError as e:
        raise ValidationError(str(e))


_FAMILY_OPTS = [
    click.option("--family", required=True,
                 type=click.Choice(["path", "cycle", "lattice_Zd", "tree_b_ary",
                                    "sierpinski_gasket", "gff_lattice",
                                    "bernoulli_percolation_cluster", "gasket",
                                    "lattice", "tree", "percolation"])),
    click.option("--d", type=int, default=None, help="lattice dimension"),
    click.option("--n", "N", type=int, default=None, help="box/segment half-width"),
    click.option("--level", "L", type=int, default=None, help="gasket level"),
    click.option("--b", type=int, default=None, help="tree branching"),
    click.option("--depth", type=int, default=None, help="tree depth"),
    click.option("--size", type=int, default=None, help="cycle length"),
    click.option("--gamma", type=float, default=None, help="GFF exponent"),
    click.option("--p", type=float, default=None, help="percolation parameter"),
    click.option("--seed", type=int, default=0),
]

_ALIASES = {"gasket": "sierpinski_gasket", "lattice": "lattice_Zd",
            "tree": "tree_b_ary", "percolation": "bernoulli_percolation_cluster"}


def _family_options(f):
    for opt in reversed(_FAMILY_OPTS):
        f = opt(f)
    return f


@main.command()
@_family_options
@click.option("--out", required=True, type=click.Path())
@_run
def generate_cmd(family, out, **kw):
    """Generate a benchmark network."""
    family = _ALIASES.get(family, family)
    spec = _spec_from_options(family, **kw)
    net = generate(spec)
    _atomic_write(out, _dump(net.to_json_dict(provenance=_provenance(spec.to_dict()))))
    click.echo(f"wrote {out}: n={net.n}, edges={net.edge_count}")


main.add_command(generate_cmd, name="generate")


@main.command()
@click.option("--net", "net_path", required=True, type=click.Path(exists=True))
@click.option("--inner", type=int, required=True, help="inner radius r")
@click.option("--outer", type=int, required=True, help="outer radius R")
@click.option("--center", default="root", help="vertex id or 'root'")
@click.option("--tol", type=float, default=1e-10)
@click.option("--json", "as_json", is_flag=True, default=False)
@click.option("--out", type=click.Path(), default=None)
@_run
def resist(net_path, inner, outer, center, tol, as_json, out):
    """Effective resistance and modulus across a ball annulus."""
    from .resistance import annular_modulus
    net = _load_net(net_path)
    x = net.root if center == "root" else int(center)
    value, _ = annular_modulus(net, x, inner, outer, tol)
    reff = math.inf if value == 0 else 1.0 / value
    payload = {"r": inner, "R": outer, "center": x, "reff": reff,
               "modulus": value, "residual": tol,
               "provenance": _provenance({"net": os.path.basename(net_path),
                                          "inner": inner, "outer": outer,
                                          "center": center, "tol": tol})}
    text = _dump(payload)
    if out:
        _atomic_write(out, text)
    click.echo(text, nl=False)


@main.command()
@click.option("--net", "net_path", required=True, type=click.Path(exists=True))
@click.option("--walkers", type=int, default=1024)
@click.option("--steps", default="100000", help="step budget (accepts 1e6 style)")
@click.option("--seed", type=int, default=7)
@click.option("--out", required=True, type=click.Path())
@_run
def walk(net_path, walkers, steps, seed, out):
    """Simulate a walk ensemble; writes per-scale exit/displacement stats."""
    net = _load_net(net_path)
    n_steps = int(float(steps))
    cfg = WalkConfig(n_steps=n_steps, n_walkers=walkers, seed=seed)
    stats = simulate_walks(net, cfg)
    sig = stats.sigma_summary()
    md = stats.maxdisp_summary()
    payload = {
        "sigma": {"scale": [s.scale for s in sig],
                  "mean": [s.mean for s in sig],
                  "stderr": [s.stderr for s in sig],
                  "resolved": [s.n_resolved for s in sig],
                  "censored": [s.n_censored for s in sig],
                  "budget": [s.n_budget for s in sig]},
        "maxdisp_sq": {"scale": [s.scale for s in md],
                       "mean": [s.mean for s in md],
                       "stderr": [s.stderr for s in md],
                       "resolved": [s.n_resolved for s in md],
                       "censored": [s.n_censored for s in md]},
        "provenance": _provenance({"net": os.path.basename(net_path),
                                   "walkers": walkers, "steps": n_steps,
                                   "seed": seed}),
    }
    _atomic_write(out, _dump(payload))
    click.echo(f"wrote {out}")


@main.command()
@click.option("--net", "net_path", required=True, type=click.Path(exists=True))
@click.option("--eps", type=float, required=True)
@click.option("--dstar", type=float, required=True)
@click.option("--kmax", type=int, required=True)
@click.option("--seed", type=int, default=11)
@click.option("--out", required=True, type=click.Path())
@_run
def stretch(net_path, eps, dstar, kmax, seed, out):
    """Build the multiscale stretching weight; mirrors the edge ordering."""
    net = _load_net(net_path)
    w = build_multiscale_weight(net, eps, dstar, kmax, seed)
    payload = {"values": [float(v) for v in w.values],
               "provenance": _provenance({"net": os.path.basename(net_path),
                                          "eps": eps, "dstar": dstar,
                                          "kmax": kmax, "seed": seed})}
    _atomic_write(out, _dump(payload))
    click.echo(f"wrote {out}")


@main.command()
@_family_options
@click.option("--seeds", type=int, default=1, help="number of environment seeds")
@click.option("--walkers", type=int, default=1024)
@click.option("--steps", default="200000")
@click.option("--heat-steps", type=int, default=None)
@click.option("--measures", default=",".join(ALL_MEASURES))
@click.option("--workers", type=int, default=0, help="0 = EXPONENT_LAB_THREADS or 1")
@click.option("--out", required=True, type=click.Path())
@click.option("--series-csv", type=click.Path(), default=None,
              help="also write scale series as CSV")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file mirroring these flags")
@_run
def estimate(family, seeds, walkers, steps, heat_steps, measures, workers,
             out, series_csv, config_path, seed, **kw):
    """Full pipeline: generate, measure, fit all six exponents."""
    params = _maybe_config(dict(family=family, seeds=seeds, walkers=walkers,
                                steps=steps, heat_steps=heat_steps,
                                measures=measures, workers=workers, seed=seed,
                                **kw), config_path)
    family = _ALIASES.get(params["family"], params["family"])
    spec = _spec_from_options(family, **{
        k: params.get(k) for k in ("d", "N", "L", "b", "depth", "size",
                                   "gamma", "p", "seed")})
    cfg = EstimateConfig(
        spec=spec,
        seeds=tuple(int(params["seed"]) + i for i in range(int(params["seeds"]))),
        walkers=int(params["walkers"]),
        steps=int(float(params["steps"])),
        heat_steps=params.get("heat_steps"),
        measures=tuple(m for m in str(params["measures"]).split(",") if m),
        workers=int(params["workers"]) or default_workers(),
    )
    report = run_estimate(cfg)
    _atomic_write(out, _dump(report.to_dict()))
    if series_csv:
        _atomic_write(series_csv, series_to_csv(report))
    shown = {k: round(v.exponent, 4) for k, v in report.estimates.items()}
    click.echo(f"wrote {out}: {shown}")


def series_to_csv(report: ExponentReport) -> str:
    lines = ["series,scale,value,stderr,censor_frac"]
    for name, s in sorted(report.series.items()):
        d = s.to_dict()
        for sc, v, se, cf in zip(d["scale"], d["value"], d["stderr"],
                                 d["censor_frac"]):
            lines.append(f"{name},{sc:.17g},{v:.17g},{se:.17g},{cf:.17g}")
    return "\n".join(lines) + "\n"


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
@click.option("--tol", type=float, default=None,
              help="override the 3-sigma residual tolerance")
@_run
def verify(report_path, tol):
    """Einstein-relation verdict for a report."""
    with open(report_path) as f:
        report = ExponentReport.from_dict(json.load(f))
    verdict = verify_einstein(report, tol)
    click.echo(_dump(verdict.to_dict()), nl=False)


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_run
def series(report_path, out):
    """Export a report's scale series as plot-ready CSV."""
    with open(report_path) as f:
        report = ExponentReport.from_dict(json.load(f))
    _atomic_write(out, series_to_csv(report))
    click.echo(f"wrote {out}")


@main.command(name="mtp-check")
@_family_options
@click.option("--functional", default="neighbor_count",
              type=click.Choice(sorted(FUNCTIONALS) + ["swap"]))
@click.option("--seeds", "n_seeds", type=int, default=200)
@click.option("--out", type=click.Path(), default=None)
@_run
def mtp_check(family, functional, n_seeds, out, seed, **kw):
    """Mass-transport / reversibility diagnostic over many environments."""
    family = _ALIASES.get(family, family)
    spec = _spec_from_options(family, **kw, seed=seed)
    if functional == "swap":
        res = reversibility_swap_test(spec, n_seeds, base_seed=seed)
    else:
        res = mtp_diagnostic(spec, functional, n_seeds, base_seed=seed)
    payload = res.to_dict()
    payload["provenance"] = _provenance({"family": family, "seeds": n_seeds,
                                         "functional": functional})
    text = _dump(payload)
    if out:
        _atomic_write(out, text)
    click.echo(text, nl=False)


if __name__ == "__main__":
    main()
