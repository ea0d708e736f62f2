"""Random-walk simulation and exact small-scale walk analysis.

Monte-Carlo ensembles track exit times over a dyadic radius grid and
running displacement maxima over a dyadic step grid, with a strict
censoring discipline: no statistic at a given scale uses a trajectory that
touched the truncation boundary before resolving that scale.  Exact heat
kernels evolve the full distribution vector, which bounds usable network
sizes but gives return probabilities to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import _kernels
from .errors import ResourceError, ValidationError
from .network import EdgeWeight, Network

HEAT_VERTEX_CAP = 200_000
MAXDISP_STEP_CAP = 1 << 16


def _walk_tables(net: Network):
    """CSR step structure + alias tables over the positive subgraph
    (self-loops included as holding mass)."""
    def build():
        C = net.conductance_csr  # symmetric, loops on the diagonal
        indptr = C.indptr.astype(np.int64)
        nbr = C.indices.astype(np.int64)
        prob, alias = _kernels.build_alias_tables(indptr, C.data)
        return indptr, nbr, prob, alias
    return net._cached("walk_tables", build)


def _int_root_distance(net: Network):
    def build():
        d = net.root_distance
        out = np.where(np.isfinite(d), d, -1).astype(np.int64)
        out.setflags(write=False)
        return out
    return net._cached("root_distance_int", build)


def dyadic_grid(lo: int, hi: int) -> np.ndarray:
    """Powers of two in [lo, hi]."""
    if hi < lo:
        return np.zeros(0, dtype=np.int64)
    ks = np.arange(int(math.floor(math.log2(lo))), int(math.log2(hi)) + 1)
    vals = (2 ** ks).astype(np.int64)
    return vals[(vals >= lo) & (vals <= hi)]


@dataclass(frozen=True)
class WalkConfig:
    """Ensemble parameters; ``start`` is either "root" or
    "stationary_restricted" (the latter only for restricted walks)."""

    n_steps: int
    n_walkers: int
    seed: int = 0
    start: str = "root"

    def __post_init__(self):
        if self.n_steps < 1 or self.n_walkers < 1:
            raise ValidationError("n_steps and n_walkers must be >= 1")
        if self.start not in ("root", "stationary_restricted"):
            raise ValidationError(f"unknown start mode {self.start!r}")


@dataclass
class ScaleSummary:
    scale: int
    mean: float
    stderr: float
    n_resolved: int
    n_censored: int
    n_budget: int

    @property
    def censor_frac(self) -> float:
        total = self.n_resolved + self.n_censored + self.n_budget
        return (self.n_censored + self.n_budget) / total if total else 1.0


@dataclass
class WalkStats:
    """Ensemble summaries: exit times sigma_R, running maxima M_n, and
    (from the exact mode) return probabilities and partial Green sums."""

    r_grid: np.ndarray | None = None
    sigma_steps: np.ndarray | None = None      # (walkers, len(r_grid)), -1 unresolved
    n_grid: np.ndarray | None = None
    max_disp: np.ndarray | None = None         # (walkers, len(n_grid)), -1 censored
    boundary_step: np.ndarray | None = None    # -1 when never touched
    return_n: np.ndarray | None = None         # n values for p_2n
    return_prob: np.ndarray | None = None      # exact p_2n(root, root)
    green_partial: np.ndarray | None = None    # Gr_n(root, root) at the same n
    heat_flag_mass: np.ndarray | None = None   # max flagged-vertex mass up to 2n

    def sigma_summary(self) -> list[ScaleSummary]:
        out = []
        censored = self.boundary_step >= 0
        for j, r in enumerate(self.r_grid):
            col = self.sigma_steps[:, j]
            ok = col >= 0
            vals = col[ok].astype(float)
            n_cens = int((~ok & censored).sum())
            n_budget = int((~ok & ~censored).sum())
            mean = float(vals.mean()) if vals.size else math.nan
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
            out.append(ScaleSummary(int(r), mean, se, int(ok.sum()), n_cens, n_budget))
        return out

    def maxdisp_summary(self) -> list[ScaleSummary]:
        """Per checkpoint: mean of M_n^2 (annealed displacement moment)."""
        out = []
        for k, n in enumerate(self.n_grid):
            col = self.max_disp[:, k]
            ok = col >= 0
            vals = col[ok].astype(float) ** 2
            mean = float(vals.mean()) if vals.size else math.nan
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
            out.append(ScaleSummary(int(n), mean, se, int(ok.sum()),
                                    int((~ok).sum()), 0))
        return out


def simulate_walks(net: Network, cfg: WalkConfig,
                   r_grid=None, n_grid=None) -> WalkStats:
    """Monte-Carlo ensemble of root-started walks.

    sigma_R is the first step with displacement exceeding R, collected over
    a dyadic R grid; M_n running maxima are checkpointed on a dyadic step
    grid.  Walkers stop at their first touch of a flagged vertex and every
    unresolved scale of that walker is reported censored, never silently
    mixed into the estimates.
    """
    if cfg.start != "root":
        raise ValidationError("simulate_walks starts at the root")
    dist = _int_root_distance(net)
    if r_grid is None:
        finite = dist[dist >= 0]
        r_grid = dyadic_grid(2, max(2, int(finite.max()) // 2))
    r_grid = np.asarray(r_grid, dtype=np.int64)
    if n_grid is None:
        n_grid = dyadic_grid(4, min(cfg.n_steps, MAXDISP_STEP_CAP))
    n_grid = np.asarray(n_grid, dtype=np.int64)
    if r_grid.size and np.any(np.diff(r_grid) <= 0):
        raise ValidationError("r_grid must be strictly increasing")
    if n_grid.size and (np.any(np.diff(n_grid) <= 0) or n_grid[-1] > cfg.n_steps):
        raise ValidationError("n_grid must be increasing and within n_steps")
    indptr, nbr, prob, alias = _walk_tables(net)
    seeds = _kernels.walker_seeds(cfg.seed, cfg.n_walkers)
    sigma, maxd, bstep, _ = _kernels.walk_stats(
        indptr, nbr, prob, alias, dist, net.boundary, net.root,
        r_grid, n_grid, cfg.n_steps, seeds)
    return WalkStats(r_grid=r_grid, sigma_steps=sigma, n_grid=n_grid,
                     max_disp=maxd, boundary_step=bstep)


def heat_kernel_exact(net: Network, n_max: int,
                      vertex_cap: int = HEAT_VERTEX_CAP) -> WalkStats:
    """Deterministic return probabilities p_2n and Green sums Gr_n at the root.

    Evolves the point mass at the root through 2 * n_max applications of
    the transition operator.  Conservation (total mass 1 up to 1e-12) and
    monotonicity of the even return probabilities are asserted on every
    step.  heat_flag_mass tracks the largest mass seen on flagged vertices
    up to each horizon so estimators can drop truncation-polluted scales.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    if net.n > vertex_cap:
        raise ResourceError(
            f"exact heat kernel needs {net.n} dense entries, cap is "
            f"{vertex_cap}; use the Monte-Carlo walk ensemble instead")
    c = net.vertex_conductance
    C = net.conductance_csr
    inv = np.where(c > 0, 1.0 / np.where(c > 0, c, 1.0), 0.0)
    M = C @ sp.diags(inv)
    p = np.zeros(net.n)
    p[net.root] = 1.0
    T = 2 * n_max
    ret = np.empty(T + 1)
    flag = np.empty(T + 1)
    ret[0] = 1.0
    flag[0] = float(p[net.boundary].sum())
    for t in range(1, T + 1):
        p = M @ p
        total = p.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(
                f"transition operator lost probability mass at step {t}: {total!r}")
        ret[t] = p[net.root]
        flag[t] = float(p[net.boundary].sum())
    ns = np.arange(1, n_max + 1)
    p2n = ret[2 * ns]
    if np.any(np.diff(p2n) > 1e-13):
        raise ValidationError("even return probabilities failed monotonicity")
    green = np.cumsum(ret)[ns]
    flag_running = np.maximum.accumulate(flag)
    return WalkStats(return_n=ns, return_prob=p2n, green_partial=green,
                     heat_flag_mass=flag_running[2 * ns])


@dataclass
class RestrictedWalk:
    """Trajectory ensemble of the walk restricted to S."""

    S: np.ndarray
    trajectories: np.ndarray   # (walkers, n_steps + 1) global vertex ids
    pi: np.ndarray             # stationary law on S (indexed like S)


def restricted_pi(net: Network, S) -> np.ndarray:
    """Stationary law of the restricted walk: pi(x) proportional to c_x on S."""
    S = np.unique(np.asarray(S, dtype=np.int64))
    c = net.vertex_conductance[S]
    total = c.sum()
    if total <= 0:
        raise ValidationError("restricted walk needs positive conductance on S")
    return c / total


def restricted_walk(net: Network, S, cfg: WalkConfig) -> RestrictedWalk:
    """Walk on S with holding probability c(E(x, V - S)) / c_x.

    Realized by proposing unrestricted steps and holding on proposals that
    leave S; with a shared stream this couples the restricted and free
    walks until the free walk first exits S.  Start is the root (which must
    lie in S) or a stationary pi_S sample per walker.
    """
    S = np.unique(np.asarray(S, dtype=np.int64))
    if S.size == 0 or S.min() < 0 or S.max() >= net.n:
        raise ValidationError("S must be a nonempty vertex set")
    pi = restricted_pi(net, S)
    in_S = np.zeros(net.n, dtype=bool)
    in_S[S] = True
    if cfg.start == "stationary_restricted":
        rng = np.random.default_rng(cfg.seed ^ 0x5DEECE66D)
        starts = S[rng.choice(S.size, size=cfg.n_walkers, p=pi)]
    else:
        if not in_S[net.root]:
            raise ValidationError("root-started restricted walk needs root in S")
        starts = np.full(cfg.n_walkers, net.root, dtype=np.int64)
    if net.vertex_conductance[starts].min() <= 0:
        raise ValidationError("restricted walk started at a zero-conductance vertex")
    indptr, nbr, prob, alias = _walk_tables(net)
    seeds = _kernels.walker_seeds(cfg.seed, cfg.n_walkers)
    traj = _kernels.restricted_traj(indptr, nbr, prob, alias, in_S,
                                    starts, cfg.n_steps, seeds)
    return RestrictedWalk(S=S, trajectories=traj, pi=pi)


def restricted_metric(net: Network, S, weight: EdgeWeight) -> np.ndarray:
    """All-pairs weighted shortest-path matrix within the induced subgraph
    on S (parallel edges reduced by minimum)."""
    weight.check_owner(net)
    S = np.unique(np.asarray(S, dtype=np.int64))
    loc = np.full(net.n, -1, dtype=np.int64)
    loc[S] = np.arange(S.size)
    keep = (loc[net.edge_u] >= 0) & (loc[net.edge_v] >= 0) & (net.edge_u != net.edge_v)
    u = loc[net.edge_u[keep]]
    v = loc[net.edge_v[keep]]
    w = weight.values[keep]
    order = np.lexsort((v, u))
    u, v, w = u[order], v[order], w[order]
    g = sp.csr_matrix((np.concatenate([w, w]),
                       (np.concatenate([u, v]), np.concatenate([v, u]))),
                      shape=(S.size, S.size))
    # csr summed duplicates: rebuild with minima when parallels exist
    if np.unique(np.column_stack([u, v]), axis=0).shape[0] != u.shape[0]:
        dmat = np.full((S.size, S.size), np.inf)
        np.minimum.at(dmat, (u, v), w)
        np.minimum.at(dmat, (v, u), w)
        dmat[dmat == np.inf] = 0
        g = sp.csr_matrix(dmat)
    return dijkstra(g, directed=False)


def markov_type_ratio(net: Network, S, weight: EdgeWeight, n: int,
                      n_walkers: int = 512, seed: int = 0):
    """Empirical maximal-Markov-type ratio of the stationary restricted walk:

        E[ max_{t<=n} dist_w(Z_0, Z_t)^2 ]  /  ( n * E[ dist_w(Z_0, Z_1)^2 ] )

    computed on the induced metric of S.  Returns (ratio, stderr); both
    moments come from the same trajectories, so n = 1 gives exactly 1.
    """
    weight.check_owner(net)
    if n < 1:
        raise ValidationError("markov_type_ratio needs n >= 1")
    if not np.any(weight.values > 0):
        raise ValidationError("degenerate metric: all edge weights are zero")
    S = np.unique(np.asarray(S, dtype=np.int64))
    D = restricted_metric(net, S, weight)
    loc = np.full(net.n, -1, dtype=np.int64)
    loc[S] = np.arange(S.size)
    cfg = WalkConfig(n_steps=n, n_walkers=n_walkers, seed=seed,
                     start="stationary_restricted")
    rw = restricted_walk(net, S, cfg)
    t0 = loc[rw.trajectories[:, 0]]
    rows = D[t0]
    along = np.take_along_axis(rows, loc[rw.trajectories], axis=1)
    num = np.max(along[:, 1:], axis=1) ** 2
    den = along[:, 1] ** 2
    mean_den = float(den.mean())
    if mean_den <= 0:
        raise ValidationError("E[dist(Z0, Z1)^2] vanished on this S")
    mean_num = float(num.mean())
    ratio = mean_num / (n * mean_den)
    W = n_walkers
    var_num = float(num.var(ddof=1)) / W
    var_den = float(den.var(ddof=1)) / W
    cov = float(np.cov(num, den, ddof=1)[0, 1]) / W
    rel = var_num / mean_num ** 2 + var_den / mean_den ** 2 \
        - 2 * cov / (mean_num * mean_den)
    stderr = abs(ratio) * math.sqrt(max(rel, 0.0))
    return ratio, stderr
