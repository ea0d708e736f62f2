"""Unimodularity diagnostics: mass-transport identities and reversibility.

For a reversible random rooted network the conductance-biased
mass-transport identity equates the expected mass the root sends with the
mass it receives.  Both sides are estimated over independently generated
environments and compared through a paired z-score.  The built-in
functionals are scale-invariant, so they remain valid for conductance
models defined only up to a global factor (the exponentiated-field
lattices re-pinned at the root).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TruncationError, ValidationError
from .generators import GeneratorSpec, generate
from .network import Network
from .random_structures import exp_clock_partition

DEFAULT_CLOCK_DELTA = 8.0


@dataclass
class MtpResult:
    functional: str
    n_seeds: int
    lhs_mean: float
    rhs_mean: float
    diff_stderr: float

    @property
    def z_score(self) -> float:
        if self.diff_stderr == 0:
            return 0.0
        return (self.lhs_mean - self.rhs_mean) / self.diff_stderr

    def to_dict(self):
        return {"functional": self.functional, "n_seeds": self.n_seeds,
                "lhs": self.lhs_mean, "rhs": self.rhs_mean,
                "stderr": self.diff_stderr, "z": self.z_score}


def _neighbor_sides(net: Network) -> tuple[float, float]:
    """Transport c_x 1{d(x, y) = 1}: the root sends its neighbor count and
    receives the conductance-degree ratio of its neighbors."""
    rho = net.root
    d = net.distances_from(rho)
    nbrs = np.flatnonzero(d == 1)
    c = net.vertex_conductance
    return float(nbrs.size), float(c[nbrs].sum() / c[rho])


def _rerooting_sides(net: Network, seed: int, delta: float) -> tuple[float, float]:
    """Cluster re-rooting transport over an exponential-clock partition.

    Sends pi_K mass to the cluster's conductance argmax: the identity says
    the stationary mass of the argmax equals the probability that the root
    itself is the argmax of its cluster.  Scale-invariant, and exactly the
    transport that proves resampling the root from pi_K preserves the law.
    """
    part = exp_clock_partition(net, delta, seed=seed)
    members = part.cluster_members(net.root)
    c = net.vertex_conductance[members]
    arg = members[int(np.argmax(c))]
    total = float(c.sum())
    lhs = float(c[np.argmax(c)] / total)          # pi_K(argmax)
    rhs = 1.0 if arg == net.root else 0.0          # root is its cluster argmax
    return lhs, rhs


class TransportFunctional:
    """Named two-sided transport with a declared support radius."""

    def __init__(self, name, support_radius, sides):
        self.name = name
        self.support_radius = support_radius
        self._sides = sides

    def sides(self, net: Network, seed: int) -> tuple[float, float]:
        return self._sides(net, seed)


F_NEIGHBOR = TransportFunctional(
    "neighbor_count", 1, lambda net, seed: _neighbor_sides(net))
F_REROOT = TransportFunctional(
    "cluster_reroot", int(DEFAULT_CLOCK_DELTA),
    lambda net, seed: _rerooting_sides(net, seed, DEFAULT_CLOCK_DELTA))

FUNCTIONALS = {f.name: f for f in (F_NEIGHBOR, F_REROOT)}


def mtp_diagnostic(spec: GeneratorSpec, functional, n_seeds: int,
                   base_seed: int = 0) -> MtpResult:
    """Paired two-sided estimate of the biased mass-transport identity.

    Environments are generated from consecutive seeds; each must be large
    enough that the functional's support radius stays inside the safe
    region, otherwise the comparison would be truncation-biased.
    """
    if isinstance(functional, str):
        functional = FUNCTIONALS[functional]
    if n_seeds < 2:
        raise ValidationError("mtp_diagnostic needs at least 2 seeds")
    diffs, lhs_all, rhs_all = [], [], []
    for i in range(n_seeds):
        net = generate(GeneratorSpec(**{**spec.to_dict(), "seed": base_seed + i}))
        if net.safe_radius() < functional.support_radius:
            raise TruncationError(
                f"functional {functional.name} needs support radius "
                f"{functional.support_radius}, network only offers "
                f"{net.safe_radius()}")
        lhs, rhs = functional.sides(net, base_seed + i)
        lhs_all.append(lhs)
        rhs_all.append(rhs)
        diffs.append(lhs - rhs)
    diffs = np.asarray(diffs)
    se = float(diffs.std(ddof=1) / math.sqrt(n_seeds))
    return MtpResult(functional=functional.name, n_seeds=n_seeds,
                     lhs_mean=float(np.mean(lhs_all)),
                     rhs_mean=float(np.mean(rhs_all)), diff_stderr=se)


def reversibility_swap_test(spec: GeneratorSpec, n_seeds: int,
                            base_seed: int = 0) -> MtpResult:
    """(c_X0, c_X1) vs (c_X1, c_X0) through the scale-invariant statistic
    log(c_X1 / c_X0): its mean vanishes for reversible random networks."""
    if n_seeds < 2:
        raise ValidationError("swap test needs at least 2 seeds")
    vals = []
    for i in range(n_seeds):
        net = generate(GeneratorSpec(**{**spec.to_dict(), "seed": base_seed + i}))
        rho = net.root
        C = net.conductance_csr
        row = C[rho]
        nbrs, conds = row.indices, row.data
        rng = np.random.default_rng((base_seed + i) ^ 0xA5A5A5)
        x1 = nbrs[rng.choice(nbrs.size, p=conds / conds.sum())]
        vals.append(math.log(net.vertex_conductance[x1])
                    - math.log(net.vertex_conductance[rho]))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / math.sqrt(n_seeds))
    return MtpResult(functional="swap_log_degree", n_seeds=n_seeds,
                     lhs_mean=float(vals.mean()), rhs_mean=0.0,
                     diff_stderr=se)
