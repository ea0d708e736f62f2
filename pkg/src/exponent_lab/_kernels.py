"""Hot inner loops for random-walk simulation.

Two interchangeable backends live here: numba @njit kernels and pure-numpy
fallbacks vectorized over walkers.  Both consume the same per-walker
splitmix64 streams and produce bit-identical outputs, so results never
depend on the backend or on scheduling.  Selection order:

* ``EXPONENT_LAB_NO_NUMBA=1`` in the environment forces the numpy path;
* otherwise numba is used when importable, numpy when not.

``USING_NUMBA`` reports the active backend; the ``*_numpy`` / ``*_numba``
names stay importable for the equivalence tests and the benchmark.
"""

from __future__ import annotations

import os

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53

_DISABLED = os.environ.get("EXPONENT_LAB_NO_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on")

try:
    import numba
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not _DISABLED


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"


def walker_seeds(master_seed: int, n_walkers: int) -> np.ndarray:
    """Independent splitmix64 initial states, one per walker.

    Depends only on (master_seed, walker index), so ensembles are
    reproducible regardless of scheduling or backend.
    """
    w = np.arange(1, n_walkers + 1, dtype=np.uint64)
    z = (np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF) ^ (w * _GOLDEN))
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def build_alias_tables(indptr, weights):
    """Vose alias tables per CSR row; O(1) draws afterwards.

    Built once per network by a single deterministic routine so that both
    backends sample identical trajectories.  Rows with zero total weight
    get empty tables (the walk never stands there).
    """
    n = indptr.shape[0] - 1
    nnz = weights.shape[0]
    prob = np.zeros(nnz, dtype=np.float64)
    alias = np.zeros(nnz, dtype=np.int32)
    for v in range(n):
        lo, hi = int(indptr[v]), int(indptr[v + 1])
        deg = hi - lo
        if deg == 0:
            continue
        w = weights[lo:hi]
        total = w.sum()
        if total <= 0:
            continue
        scaled = (w / total) * deg
        small = [i for i in range(deg) if scaled[i] < 1.0]
        large = [i for i in range(deg) if scaled[i] >= 1.0]
        p = scaled.copy()
        while small and large:
            s = small.pop()
            l = large.pop()
            prob[lo + s] = p[s]
            alias[lo + s] = l
            p[l] = (p[l] + p[s]) - 1.0
            (small if p[l] < 1.0 else large).append(l)
        for i in large:
            prob[lo + i] = 1.0
            alias[lo + i] = i
        for i in small:  # numerical leftovers
            prob[lo + i] = 1.0
            alias[lo + i] = i
    return prob, alias


# -- numpy backend ----------------------------------------------------------

def _mix_np(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def walk_stats_numpy(indptr, nbr, prob, alias, dist, bflag, root,
                     r_grid, n_grid, n_steps, seeds):
    """Exit times and running displacement maxima for a walker ensemble.

    Returns (sigma, maxdisp, boundary_step, end_step): sigma[w, j] is the
    first step with displacement > r_grid[j] (-1 if unresolved), maxdisp
    [w, k] the running maximum at step n_grid[k] (-1 if the walker was
    censored first), boundary_step[w] the first touch of a flagged vertex
    (-1 if never).  A walker stops at its boundary touch: nothing after it
    is usable under the censoring discipline.
    """
    W = seeds.shape[0]
    nR, nC = r_grid.shape[0], n_grid.shape[0]
    sigma = np.full((W, nR), -1, dtype=np.int64)
    maxd = np.full((W, nC), -1, dtype=np.int64)
    bstep = np.full(W, -1, dtype=np.int64)
    endstep = np.zeros(W, dtype=np.int64)
    state = seeds.copy()
    cur = np.full(W, root, dtype=np.int64)
    M = np.zeros(W, dtype=np.int64)
    sp = np.zeros(W, dtype=np.int64)
    active = np.ones(W, dtype=bool)
    last_cp = int(n_grid[-1]) if nC else 0
    gcp = 0
    t = 0
    while t < n_steps:
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        t += 1
        v = cur[act]
        lo = indptr[v]
        deg = indptr[v + 1] - lo
        st = state[act] + _GOLDEN
        u1 = _mix_np(st)
        st = st + _GOLDEN
        u2 = _mix_np(st)
        state[act] = st
        k = (((u1 >> np.uint64(11)) * _INV53) * deg).astype(np.int64)
        slot = lo + k
        take_alias = ((u2 >> np.uint64(11)) * _INV53) >= prob[slot]
        nxt = np.where(take_alias, nbr[lo + alias[slot]], nbr[slot])
        cur[act] = nxt
        endstep[act] = t
        d = dist[nxt]
        M[act] = np.maximum(M[act], d)
        crossed = np.zeros(act.size, dtype=bool)
        open_ = sp[act] < nR
        crossed[open_] = M[act[open_]] > r_grid[sp[act[open_]]]
        cw = act[crossed]
        sigma[cw, sp[cw]] = t
        sp[cw] += 1
        if gcp < nC and t == n_grid[gcp]:
            maxd[act, gcp] = M[act]
            gcp += 1
        hit = bflag[nxt] & (bstep[act] < 0)
        hw = act[hit]
        bstep[hw] = t
        active[hw] = False
        done = (sp[act] >= nR) & (t >= last_cp)
        active[act[done]] = False
    return sigma, maxd, bstep, endstep


def restricted_traj_numpy(indptr, nbr, prob, alias, in_S, starts, n_steps, seeds):
    """Trajectories of the walk restricted to S under shared randomness.

    Each proposed step is drawn from the unrestricted kernel; proposals
    leaving S become holds.  Driving this with the same streams as the free
    walk realizes the standard coupling: both walks agree until the free
    walk first leaves S.
    """
    W = seeds.shape[0]
    traj = np.empty((W, n_steps + 1), dtype=np.int64)
    traj[:, 0] = starts
    state = seeds.copy()
    cur = starts.astype(np.int64).copy()
    for t in range(1, n_steps + 1):
        lo = indptr[cur]
        deg = indptr[cur + 1] - lo
        state = state + _GOLDEN
        u1 = _mix_np(state)
        state = state + _GOLDEN
        u2 = _mix_np(state)
        k = (((u1 >> np.uint64(11)) * _INV53) * deg).astype(np.int64)
        slot = lo + k
        take_alias = ((u2 >> np.uint64(11)) * _INV53) >= prob[slot]
        proposal = np.where(take_alias, nbr[lo + alias[slot]], nbr[slot])
        cur = np.where(in_S[proposal], proposal, cur)
        traj[:, t] = cur
    return traj


# -- numba backend ----------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _mix_nb(z):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    @njit(cache=True)
    def _walk_stats_nb(indptr, nbr, prob, alias, dist, bflag, root,
                       r_grid, n_grid, n_steps, seeds):
        W = seeds.shape[0]
        nR = r_grid.shape[0]
        nC = n_grid.shape[0]
        sigma = np.full((W, nR), -1, dtype=np.int64)
        maxd = np.full((W, nC), -1, dtype=np.int64)
        bstep = np.full(W, -1, dtype=np.int64)
        endstep = np.zeros(W, dtype=np.int64)
        last_cp = n_grid[nC - 1] if nC > 0 else 0
        for w in range(W):
            state = seeds[w]
            v = root
            M = np.int64(0)
            sp = 0
            cp = 0
            for t in range(1, n_steps + 1):
                lo = indptr[v]
                deg = indptr[v + 1] - lo
                state = state + _GOLDEN
                u1 = _mix_nb(state)
                state = state + _GOLDEN
                u2 = _mix_nb(state)
                k = np.int64(((u1 >> np.uint64(11)) * _INV53) * deg)
                slot = lo + k
                if ((u2 >> np.uint64(11)) * _INV53) >= prob[slot]:
                    v = nbr[lo + alias[slot]]
                else:
                    v = nbr[slot]
                endstep[w] = t
                d = dist[v]
                if d > M:
                    M = d
                    if sp < nR and M > r_grid[sp]:
                        sigma[w, sp] = t
                        sp += 1
                if cp < nC and t == n_grid[cp]:
                    maxd[w, cp] = M
                    cp += 1
                if bflag[v]:
                    bstep[w] = t
                    break
                if sp >= nR and t >= last_cp:
                    break
        return sigma, maxd, bstep, endstep

    @njit(cache=True)
    def _restricted_traj_nb(indptr, nbr, prob, alias, in_S, starts, n_steps, seeds):
        W = seeds.shape[0]
        traj = np.empty((W, n_steps + 1), dtype=np.int64)
        for w in range(W):
            state = seeds[w]
            v = starts[w]
            traj[w, 0] = v
            for t in range(1, n_steps + 1):
                lo = indptr[v]
                deg = indptr[v + 1] - lo
                state = state + _GOLDEN
                u1 = _mix_nb(state)
                state = state + _GOLDEN
                u2 = _mix_nb(state)
                k = np.int64(((u1 >> np.uint64(11)) * _INV53) * deg)
                slot = lo + k
                if ((u2 >> np.uint64(11)) * _INV53) >= prob[slot]:
                    p = nbr[lo + alias[slot]]
                else:
                    p = nbr[slot]
                if in_S[p]:
                    v = p
                traj[w, t] = v
        return traj

    def walk_stats_numba(indptr, nbr, prob, alias, dist, bflag, root,
                         r_grid, n_grid, n_steps, seeds):
        return _walk_stats_nb(indptr, nbr, prob, alias, dist, bflag,
                              np.int64(root), r_grid, n_grid,
                              np.int64(n_steps), seeds)

    def restricted_traj_numba(indptr, nbr, prob, alias, in_S, starts, n_steps, seeds):
        return _restricted_traj_nb(indptr, nbr, prob, alias, in_S,
                                   starts.astype(np.int64), np.int64(n_steps),
                                   seeds)
else:  # pragma: no cover
    walk_stats_numba = None
    restricted_traj_numba = None


walk_stats = walk_stats_numba if USING_NUMBA else walk_stats_numpy
restricted_traj = restricted_traj_numba if USING_NUMBA else restricted_traj_numpy
