"""Randomized constructions over rooted networks.

Four pieces fit together here:

* approximate nets: independent edge marks with probability proportional
  to conductance over a local volume maximum, giving well-spread center
  sets whose hitting statistics obey explicit one-sided bounds;
* controlled-geometry classification of (network, vertex) pairs at a
  scale, combining annular modulus with volume-ratio tests;
* stretching weights: per-scale sums of extremal annular weights around
  sampled centers (plus an indicator fallback far from all centers), and
  their square-combined multiscale aggregate, which lengthens distances
  from the root by a controlled power;
* exponential-clock partitions: low-diameter random clustering where each
  vertex is labeled by the clock minimizer in a random-radius ball.

Membership and gating decisions near the truncation boundary are
tri-state: scales whose working balls leave the safe region evaluate to
"unknown" and gated constructions treat unknown as failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import TruncationError, ValidationError
from .network import EdgeWeight, Network, graph_ball
from .resistance import DEFAULT_TOL, annular_modulus


def _iball(r: float) -> int:
    """Integer ball radius realizing a real-valued one (path metric is integer)."""
    return int(math.floor(r + 1e-9))


def _max_dilation(net: Network, values: np.ndarray, rounds: int) -> np.ndarray:
    """rounds-fold neighborhood maximum: out[v] = max over B(v, rounds)."""
    A = net.metric_csr
    indptr, indices = A.indptr, A.indices
    deg = np.diff(indptr)
    cur = values.astype(np.float64).copy()
    for _ in range(rounds):
        if indices.size == 0:
            break
        gathered = cur[indices]
        starts = np.minimum(indptr[:-1], max(gathered.size - 1, 0))
        rowmax = np.maximum.reduceat(gathered, starts) if gathered.size else \
            np.full(net.n, -np.inf)
        rowmax[deg == 0] = -np.inf
        cur = np.maximum(cur, rowmax)
    return cur


def _min_dilation(net: Network, values: np.ndarray, rounds: int) -> np.ndarray:
    A = net.metric_csr
    indptr, indices = A.indptr, A.indices
    deg = np.diff(indptr)
    cur = values.astype(np.float64).copy()
    for _ in range(rounds):
        if indices.size == 0:
            break
        gathered = cur[indices]
        starts = np.minimum(indptr[:-1], max(gathered.size - 1, 0))
        rowmin = np.minimum.reduceat(gathered, starts) if gathered.size else \
            np.full(net.n, np.inf)
        rowmin[deg == 0] = np.inf
        cur = np.minimum(cur, rowmin)
    return cur


def all_ball_volumes(net: Network, R: int) -> np.ndarray:
    """vol(y, R) for every vertex, via an incremental reachability mask.

    Cached per (network, R): geometry classification evaluates this for
    many centers of the same network.
    """
    import scipy.sparse as sp

    def build():
        c = net.vertex_conductance
        if R == 0:
            return c.copy()
        A = net.metric_csr.astype(bool)
        M = sp.identity(net.n, dtype=bool, format="csr")
        for _ in range(R):
            M = (M + A @ M).astype(bool)
        return np.asarray(M @ c).ravel()
    return net._cached(("all_ball_volumes", int(R)), build)


# -- approximate nets --------------------------------------------------------

@dataclass
class NetSample:
    """Random center set: independent edge marks u_e with probability
    min(1, lambda c(e) / gamma(e)); selected vertices are mark endpoints."""

    R: int
    R_prime: float
    lam: float
    eps: float
    seed: int
    edge_prob: np.ndarray
    marks: np.ndarray
    selected: np.ndarray


def net_sample_probabilities(net: Network, R: int, eps: float, lam: float) -> np.ndarray:
    """Per-edge mark probabilities min(1, lam c(e) / gamma_{R, R'}(e)) with
    gamma(e) = max{vol(y, R) : d(e, y) <= 2 R'} and R' = 5 R^(1+eps).

    The volume maxima are deterministic per (network, R, eps) and cached;
    repeated seeds only redraw the Bernoulli marks.
    """
    if R < 2:
        raise ValidationError("net sampling requires R >= 2")
    if lam < 0:
        raise ValidationError("lambda must be >= 0")
    r_prime = 5.0 * R ** (1.0 + eps)

    def build():
        volR = all_ball_volumes(net, R)
        reach = _max_dilation(net, volR, _iball(2 * r_prime))
        return np.maximum(reach[net.edge_u], reach[net.edge_v])
    gamma = net._cached(("net_sample_gamma", int(R), float(eps)), build)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(gamma > 0, lam * net.cond / gamma, 0.0)
    return np.minimum(p, 1.0)


def sample_net(net: Network, R: int, eps: float, lam: float, seed: int,
               audit=None) -> NetSample:
    """Draw the Bernoulli edge marks and the selected vertex set.

    ``audit`` lists vertices whose sampling bounds a caller intends to
    test; each must have B(x, 3 R') inside the safe region, otherwise the
    bounds would silently compare against truncation-biased volumes.
    """
    r_prime = 5.0 * R ** (1.0 + eps)
    if audit:
        for x in audit:
            d = net.distances_from(int(x))
            rad = _iball(3 * r_prime)
            if np.any((d <= rad) & net.boundary):
                raise TruncationError(
                    f"sample_net audit vertex {x}: ball of radius {rad} "
                    f"touches the truncation boundary")
    p = net_sample_probabilities(net, R, eps, lam)
    rng = np.random.default_rng(seed)
    marks = rng.random(p.shape[0]) < p
    sel = np.unique(np.concatenate([net.edge_u[marks], net.edge_v[marks]])) \
        if marks.any() else np.zeros(0, dtype=np.int64)
    return NetSample(R=int(R), R_prime=r_prime, lam=float(lam), eps=float(eps),
                     seed=int(seed), edge_prob=p, marks=marks, selected=sel)


# -- controlled geometry -----------------------------------------------------

@dataclass
class GeometryClass:
    """Tri-state membership record for one (network, vertex, scale) query."""

    eps: float
    R: int
    d_star: float
    in_S: bool | None
    in_S_prime: bool | None


def _ball_volume_profile(net: Network, x: int, radii) -> dict[int, float]:
    d = net.distances_from(int(x))
    c = net.vertex_conductance
    return {r: float(c[d <= r].sum()) for r in radii}


def _annulus_or_inf(net, x, r, R, tol):
    """Annular modulus value with the degenerate-annulus convention:
    overlapping electrodes admit no unit-separating weight, so the modulus
    is +inf and any controlled-geometry inequality using it fails."""
    if r >= R:
        return math.inf
    value, _ = annular_modulus(net, x, r, R, tol)
    return value


def classify_geometry(net: Network, x, eps: float, R: int, d_star: float,
                      tol: float = DEFAULT_TOL) -> GeometryClass:
    """Evaluate both controlled-geometry memberships at scale R.

    S-membership (for the rooted pair at x):
        (1 + vol(x, 5R^(1+eps))) / vol(x, R)^2 * M(x, 2R, R^(1+eps))
            <= R^(-d_star + 2 eps)
        and vol(x, R-1) / vol(x, 15 R^(1+eps)) >= d_star R^(-2 eps) log R.

    S'-membership (for centers of stretching annuli):
        (1 + vol(x, 4R^(1+eps))) / (max vol(y, R) over B(x, R))^2
            * M(x, R, 2R^(1+eps)) <= R^(-d_star + 2 eps).

    Raises TruncationError when the working balls leave the safe region.
    """
    x = int(x)
    if R < 2:
        raise ValidationError("geometry classification needs R >= 2")
    if not (0 < eps < 1):
        raise ValidationError("eps must lie in (0, 1)")
    ra = R ** (1.0 + eps)
    need = _iball(15 * ra)
    d = net.distances_from(x)
    if np.any((d <= need) & net.boundary):
        bad = int(np.flatnonzero((d <= need) & net.boundary)[0])
        raise TruncationError(
            f"classify_geometry at x={x}, R={R}: ball radius {need} reaches "
            f"flagged vertex {bad}")
    c = net.vertex_conductance
    vols = {r: float(c[d <= r].sum()) for r in
            (R - 1, R, _iball(4 * ra), _iball(5 * ra), _iball(15 * ra))}

    m_S = _annulus_or_inf(net, x, 2 * R, _iball(ra), tol)
    lhs_S = (1.0 + vols[_iball(5 * ra)]) / vols[R] ** 2 * m_S
    bound = R ** (-d_star + 2 * eps)
    cond1 = lhs_S <= bound
    cond2 = vols[R - 1] / vols[_iball(15 * ra)] >= d_star * R ** (-2 * eps) * math.log(R)
    in_S = bool(cond1 and cond2)

    ball_R = np.flatnonzero(d <= R)
    volR_all = all_ball_volumes(net, R)
    max_near = float(volR_all[ball_R].max())
    m_Sp = _annulus_or_inf(net, x, R, _iball(2 * ra), tol)
    lhs_Sp = (1.0 + vols[_iball(4 * ra)]) / max_near ** 2 * m_Sp
    in_S_prime = bool(lhs_Sp <= bound)
    return GeometryClass(eps=eps, R=int(R), d_star=float(d_star),
                         in_S=in_S, in_S_prime=in_S_prime)


def classify_or_unknown(net: Network, x, eps: float, R: int, d_star: float,
                        tol: float = DEFAULT_TOL,
                        cache: dict | None = None) -> GeometryClass:
    """Like classify_geometry but contamination yields tri-state None."""
    key = (int(x), R)
    if cache is not None and key in cache:
        return cache[key]
    try:
        out = classify_geometry(net, x, eps, R, d_star, tol)
    except TruncationError:
        out = GeometryClass(eps=eps, R=int(R), d_star=float(d_star),
                            in_S=None, in_S_prime=None)
    if cache is not None:
        cache[key] = out
    return out


# -- stretching weights ------------------------------------------------------

@dataclass
class ScaleWeightBuild:
    """One scale of the stretching construction, with diagnostics."""

    R: int
    eps: float
    d_star: float
    lam: float
    sample: NetSample
    weight: EdgeWeight
    annulus_part: np.ndarray     # sum of extremal annular weights
    indicator_part: np.ndarray   # unit weights far from the selected set
    active_centers: np.ndarray   # selected z that passed the S' gate
    geometry: dict               # per-vertex tri-state cache


def build_scale_weight_detailed(net: Network, R: int, eps: float, d_star: float,
                                lam: float | None = None, seed: int = 0,
                                tol: float = DEFAULT_TOL) -> ScaleWeightBuild:
    """Construct the scale-R stretching weight.

    The weight is hat + tilde where hat sums, over sampled centers z that
    pass the S' gate, the extremal weight of the annulus (z, R, 2R^(1+eps)),
    and tilde places unit weight on edges not contained in B(selected, R)
    whenever an endpoint passes the S gate.  With the default lam = R^(2eps)
    the selected set is dense enough that tilde rarely fires.
    """
    if lam is None:
        lam = R ** (2.0 * eps)
    sample = sample_net(net, R, eps, lam, seed, audit=())
    ra = R ** (1.0 + eps)
    outer = _iball(2 * ra)
    cache: dict = {}
    hat = np.zeros(net.edge_count)
    active = []
    for z in sample.selected:
        gc = classify_or_unknown(net, int(z), eps, R, d_star, tol, cache)
        if gc.in_S_prime:
            _, wz = annular_modulus(net, int(z), R, outer, tol)
            hat += wz.values
            active.append(int(z))
    tilde = np.zeros(net.edge_count)
    if sample.selected.size:
        dU = net.distances_from(sample.selected)
    else:
        dU = np.full(net.n, np.inf)
    far = ~((dU[net.edge_u] <= R) & (dU[net.edge_v] <= R))
    s_member = {}

    def s_gate(v):
        if v not in s_member:
            gc = classify_or_unknown(net, v, eps, R, d_star, tol, cache)
            s_member[v] = bool(gc.in_S)
        return s_member[v]

    for e in np.flatnonzero(far):
        u, v = int(net.edge_u[e]), int(net.edge_v[e])
        if s_gate(u) or s_gate(v):
            tilde[e] = 1.0
    weight = EdgeWeight(hat + tilde)
    return ScaleWeightBuild(R=int(R), eps=eps, d_star=d_star, lam=float(lam),
                            sample=sample, weight=weight, annulus_part=hat,
                            indicator_part=tilde,
                            active_centers=np.asarray(active, dtype=np.int64),
                            geometry=cache)


def build_scale_weight(net: Network, R: int, eps: float, d_star: float,
                       lam: float | None = None, seed: int = 0,
                       tol: float = DEFAULT_TOL) -> EdgeWeight:
    return build_scale_weight_detailed(net, R, eps, d_star, lam, seed, tol).weight


def separation_gate(net: Network, R: int, eps: float, d_star: float,
                    tol: float = DEFAULT_TOL) -> bool | None:
    """Tri-state S(eps, R) membership of the root."""
    gc = classify_or_unknown(net, net.root, eps, R, d_star, tol)
    return gc.in_S


def separation_holds(net: Network, weight: EdgeWeight, R: int, eps: float,
                     slack: float = 1e-6) -> bool:
    """Check dist_w(root, x) >= 1 for every x with d(root, x) >= 3 R^(1+eps).

    This is the guaranteed post-condition of the scale weight whenever the
    root passes the S gate; callers consult :func:`separation_gate` first.
    """
    import scipy.sparse as sp
    weight.check_owner(net)
    far = net.root_distance >= math.ceil(3 * R ** (1.0 + eps) - 1e-9)
    if not far.any():
        return True
    keep = net.edge_u != net.edge_v
    u, v, w = net.edge_u[keep], net.edge_v[keep], weight.values[keep]
    g = sp.coo_matrix((np.concatenate([w, w]),
                       (np.concatenate([u, v]), np.concatenate([v, u]))),
                      shape=(net.n, net.n)).tocsr()
    dw = dijkstra(g, directed=False, indices=net.root)
    return bool(np.all(dw[far] >= 1.0 - slack))


def build_multiscale_weight(net: Network, eps: float, d_star: float,
                            k_max: int, seed: int = 0,
                            tol: float = DEFAULT_TOL) -> EdgeWeight:
    """Square-combine the dyadic scale weights:

        w = ( sum_{k=1..k_max} 2^(k (d_star - 4 eps)) / k^2 * w_{2^k}^2 )^(1/2)

    Requires the top guarantee zone 3 * 2^(k_max (1+eps)) to stay inside
    the safe radius so that per-scale gates are decidable at the root.
    """
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    need = math.ceil(3 * (2 ** (k_max * (1.0 + eps))))
    if need > net.safe_radius():
        raise TruncationError(
            f"multiscale weight needs safe radius {need}, network provides "
            f"{net.safe_radius()}; lower k_max or enlarge the truncation")
    acc = np.zeros(net.edge_count)
    for k in range(1, k_max + 1):
        sk = int(np.random.SeedSequence((seed, k)).generate_state(1, np.uint64)[0])
        wk = build_scale_weight(net, 2 ** k, eps, d_star, None, sk, tol)
        acc += (2.0 ** (k * (d_star - 4 * eps)) / k ** 2) * wk.values ** 2
    return EdgeWeight(np.sqrt(acc))


# -- exponential-clock partitions ---------------------------------------------

@dataclass
class Partition:
    """Low-diameter random partition from exponential clocks.

    labels[x] is the clock minimizer within B(x, radius); clusters are the
    connected components of the same-label subgraph.  Every cluster has
    unweighted diameter <= delta by construction (labels sit within radius
    < delta/2 of their members).
    """

    delta: float
    radius: float
    beta: np.ndarray
    labels: np.ndarray
    cluster_of: np.ndarray

    def cluster_members(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == self.cluster_of[int(v)])


def exp_clock_partition(net: Network, delta: float, mu=None,
                        seed: int = 0) -> Partition:
    """Label each vertex by the minimal exponential clock in a random ball.

    Clocks are independent Exp(mu(x)); the ball radius is uniform on
    [delta/4, delta/2).  Vertices with mu(x) = 0 get the standard rate-1
    patch.  Edges keep only same-label endpoints; the root's cluster then
    has diameter <= delta and captures B(root, r) except with probability
    O((r/delta) log of a volume ratio).
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if mu is None:
        mu = net.vertex_conductance.copy()
    mu = np.asarray(mu, dtype=np.float64).copy()
    if mu.shape[0] != net.n or np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValidationError("mu must be a finite nonnegative vertex vector")
    mu[mu == 0] = 1.0
    rng = np.random.default_rng(seed)
    radius = rng.uniform(delta / 4.0, delta / 2.0)
    beta = rng.exponential(1.0 / mu)
    rounds = _iball(radius)
    best = _min_dilation(net, beta, rounds)
    order = np.argsort(beta)
    pos = np.searchsorted(beta[order], best)
    labels = order[pos]
    if not np.array_equal(beta[labels], best):  # ties have probability zero
        raise ValidationError("exponential clocks produced a tie; reseed")
    import scipy.sparse as sp
    same = labels[net.edge_u] == labels[net.edge_v]
    keep = same & (net.edge_u != net.edge_v)
    adj = sp.coo_matrix((np.ones(int(keep.sum())),
                         (net.edge_u[keep], net.edge_v[keep])),
                        shape=(net.n, net.n))
    _, comp = connected_components(adj, directed=False)
    return Partition(delta=float(delta), radius=float(radius), beta=beta,
                     labels=labels, cluster_of=comp)


def cluster_edge_conductance(net: Network, members) -> float:
    """c(E(S)) in the endpoint-multiplicity convention: the total vertex
    conductance of S (each incident edge counted per endpoint in S)."""
    return float(net.vertex_conductance[np.asarray(members, dtype=np.int64)].sum())
