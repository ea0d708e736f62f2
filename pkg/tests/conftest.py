"""Shared fixtures and independent oracles.

Oracles here are deliberately written from scratch (dense linear algebra,
dictionary BFS, direct enumeration) so they share no code path with the
package implementations they check.
"""

import numpy as np
import pytest

from exponent_lab.network import Network


def dict_bfs(n, edge_pairs, source):
    """Plain dictionary BFS oracle; returns distance dict."""
    adj = {}
    for u, v in edge_pairs:
        if u != v:
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
    dist = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for x in frontier:
            for y in adj.get(x, ()):
                if y not in dist:
                    dist[y] = dist[x] + 1
                    nxt.append(y)
        frontier = nxt
    return dist


def dense_effective_resistance(net: Network, S, T):
    """Dense Gaussian-elimination oracle for R_eff(S <-> T).

    Builds the full merged Laplacian, pins S at 0 and T at 1, solves the
    interior with numpy.linalg.solve, and inverts the Dirichlet energy.
    """
    n = net.n
    L = np.zeros((n, n))
    for u, v, c in zip(net.edge_u, net.edge_v, net.cond):
        if u == v or c == 0:
            continue
        L[u, u] += c
        L[v, v] += c
        L[u, v] -= c
        L[v, u] -= c
    S = np.asarray(S, dtype=int)
    T = np.asarray(T, dtype=int)
    g = np.zeros(n)
    g[T] = 1.0
    fixed = np.zeros(n, dtype=bool)
    fixed[S] = fixed[T] = True
    free = ~fixed
    if free.any():
        A = L[np.ix_(free, free)]
        b = -L[np.ix_(free, fixed)] @ g[fixed]
        # drop all-zero rows (vertices with no positive-conductance edge)
        live = np.abs(A).sum(axis=1) + np.abs(b) > 0
        if live.any():
            sol = np.zeros(live.size)
            sol[live] = np.linalg.solve(A[np.ix_(live, live)], b[live])
            g[free] = sol
    energy = 0.0
    for u, v, c in zip(net.edge_u, net.edge_v, net.cond):
        energy += c * (g[u] - g[v]) ** 2
    return np.inf if energy == 0 else 1.0 / energy, g


def random_connected_network(rng, n_max=50, parallel=False, zero_edges=False):
    """Random connected network: spanning tree plus extra edges, positive
    random conductances (optionally with parallels and zero-weight edges)."""
    n = int(rng.integers(4, n_max + 1))
    edges = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.append((u, v, float(rng.uniform(0.2, 3.0))))
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges.append((int(u), int(v), float(rng.uniform(0.2, 3.0))))
    if parallel and n >= 3:
        edges.append((0, 1, float(rng.uniform(0.2, 3.0))))
        edges.append((0, 1, float(rng.uniform(0.2, 3.0))))
    if zero_edges:
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        if u != v:
            edges.append((u, v, 0.0))
    return Network(n, edges, root=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
