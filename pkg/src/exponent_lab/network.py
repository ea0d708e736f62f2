"""Finite rooted conductance networks and their metric/volume geometry.

A network is a finite weighted multigraph with a distinguished root and
per-vertex truncation-boundary flags.  Distances are always measured in the
unweighted path metric over *all* edges (conductance-0 edges included),
while electrical and walk behaviour lives on the positive-conductance
subgraph.  All objects are immutable after construction; every operation
here is a pure function, safe for concurrent read-only sharing.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import ValidationError

INF = math.inf


class Network:
    """Finite rooted multigraph with nonnegative edge conductances.

    Parameters
    ----------
    vertex_count : int
        Number of vertices; ids are dense integers 0..n-1.
    edges : sequence of (u, v, conductance)
        Multi-edges and self-loops are permitted.  Conductances must be
        finite and >= 0; parallel conductances add for electrical purposes
        but the edge list is kept lossless.
    root : int
        Distinguished root vertex; must have positive conductance degree.
    boundary : iterable of vertex ids, optional
        Vertices flagged as truncation boundary (the outermost shell of a
        ball-truncated network).
    """

    __slots__ = (
        "n", "edge_u", "edge_v", "cond", "root", "boundary",
        "_cache", "_lock",
    )

    def __init__(self, vertex_count, edges, root, boundary=()):
        n = int(vertex_count)
        if n <= 0:
            raise ValidationError("vertex_count must be positive")
        if isinstance(edges, np.ndarray) and edges.ndim == 2 and edges.shape[1] == 3:
            eu = edges[:, 0].astype(np.int64)
            ev = edges[:, 1].astype(np.int64)
            ec = edges[:, 2].astype(np.float64)
            m = edges.shape[0]
        else:
            edges = list(edges)
            m = len(edges)
            if m:
                eu = np.asarray([e[0] for e in edges], dtype=np.int64)
                ev = np.asarray([e[1] for e in edges], dtype=np.int64)
                ec = np.asarray([e[2] for e in edges], dtype=np.float64)
            else:
                eu = np.zeros(0, dtype=np.int64)
                ev = np.zeros(0, dtype=np.int64)
                ec = np.zeros(0, dtype=np.float64)
        if m and (eu.min() < 0 or eu.max() >= n or ev.min() < 0 or ev.max() >= n):
            raise ValidationError("edge endpoint out of range 0..n-1")
        if not np.all(np.isfinite(ec)) or (m and ec.min() < 0):
            raise ValidationError("conductances must be finite and >= 0")
        root = int(root)
        if not (0 <= root < n):
            raise ValidationError(f"root {root} is not a valid vertex id")

        bflag = np.zeros(n, dtype=bool)
        bidx = np.asarray(sorted(set(int(b) for b in boundary)), dtype=np.int64)
        if bidx.size and (bidx.min() < 0 or bidx.max() >= n):
            raise ValidationError("boundary flag out of range")
        bflag[bidx] = True

        self.n = n
        self.edge_u = eu
        self.edge_v = ev
        self.cond = ec
        self.root = root
        self.boundary = bflag
        for a in (self.edge_u, self.edge_v, self.cond, self.boundary):
            a.setflags(write=False)
        self._cache = {}
        # reentrant: cache builders may consult other cached properties
        self._lock = threading.RLock()
        self._validate()

    # -- invariants ------------------------------------------------------

    def _validate(self):
        if self.vertex_conductance[self.root] <= 0:
            raise ValidationError(
                f"root {self.root} has zero conductance degree (c_rho > 0 required)")
        # connectivity over vertices carrying at least one edge
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edge_u, 1)
        np.add.at(deg, self.edge_v, 1)
        touched = np.flatnonzero(deg > 0)
        if touched.size:
            ncomp, labels = connected_components(self.metric_csr, directed=False)
            if np.unique(labels[touched]).size > 1:
                raise ValidationError(
                    "network is disconnected over vertices with incident edges")

    # -- cached derived structure ---------------------------------------

    def _cached(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    @property
    def edge_count(self):
        return self.cond.shape[0]

    @property
    def metric_csr(self):
        """Unweighted symmetric adjacency over *all* edges (self-loops dropped)."""
        def build():
            keep = self.edge_u != self.edge_v
            u, v = self.edge_u[keep], self.edge_v[keep]
            data = np.ones(u.size, dtype=np.int8)
            a = sp.coo_matrix(
                (np.concatenate([data, data]),
                 (np.concatenate([u, v]), np.concatenate([v, u]))),
                shape=(self.n, self.n)).tocsr()
            a.data[:] = 1  # duplicates summed; collapse back to simple adjacency
            return a
        return self._cached("metric_csr", build)

    @property
    def conductance_csr(self):
        """Symmetric conductance matrix, parallel edges summed, loops on the
        diagonal (counted once).  Zero-conductance entries are dropped."""
        def build():
            keep = self.cond > 0
            u, v, c = self.edge_u[keep], self.edge_v[keep], self.cond[keep]
            loops = u == v
            ru = np.concatenate([u[~loops], v[~loops], u[loops]])
            rv = np.concatenate([v[~loops], u[~loops], v[loops]])
            rc = np.concatenate([c[~loops], c[~loops], c[loops]])
            return sp.coo_matrix((rc, (ru, rv)), shape=(self.n, self.n)).tocsr()
        return self._cached("conductance_csr", build)

    @property
    def vertex_conductance(self):
        """c_u = sum of conductances of edges incident to u (loops once)."""
        def build():
            c = np.zeros(self.n, dtype=np.float64)
            loops = self.edge_u == self.edge_v
            np.add.at(c, self.edge_u[~loops], self.cond[~loops])
            np.add.at(c, self.edge_v[~loops], self.cond[~loops])
            np.add.at(c, self.edge_u[loops], self.cond[loops])
            c.setflags(write=False)
            return c
        return self._cached("vertex_conductance", build)

    def distances_from(self, sources):
        """BFS distance (path metric over all edges) from a vertex or set.

        Returns a float array with ``inf`` for unreachable vertices.
        """
        src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if src.size == 0:
            raise ValidationError("distance source set is empty")
        if src.size == 1:
            if int(src[0]) == self.root:   # only the root is queried repeatedly
                def build():
                    d = dijkstra(self.metric_csr, directed=False, unweighted=True,
                                 indices=self.root)
                    d.setflags(write=False)
                    return d
                return self._cached("root_distance", build)
            return dijkstra(self.metric_csr, directed=False, unweighted=True,
                            indices=int(src[0]))
        return dijkstra(self.metric_csr, directed=False, unweighted=True,
                        indices=src, min_only=True)

    @property
    def root_distance(self):
        return self.distances_from(self.root)

    def safe_radius(self):
        """Largest R with B(root, R) free of boundary-flagged vertices.

        When nothing is flagged this is the root's eccentricity (the whole
        network is taken as exact rather than a truncation).
        """
        d = self.root_distance
        if self.boundary.any():
            return int(d[self.boundary].min()) - 1
        finite = d[np.isfinite(d)]
        return int(finite.max())

    # -- serialization ---------------------------------------------------

    def to_json_dict(self, provenance=None):
        obj = {
            "n": int(self.n),
            "root": int(self.root),
            "edges": [[int(u), int(v), float(c)] for u, v, c in
                      zip(self.edge_u, self.edge_v, self.cond)],
            "boundary": [int(i) for i in np.flatnonzero(self.boundary)],
        }
        if provenance is not None:
            obj["provenance"] = provenance
        return obj

    def to_json(self, provenance=None):
        return json.dumps(self.to_json_dict(provenance), sort_keys=True,
                          separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, obj):
        try:
            return cls(obj["n"], obj["edges"], obj["root"],
                       obj.get("boundary", ()))
        except KeyError as e:
            raise ValidationError(f"network JSON missing field {e}") from e

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))

    def __repr__(self):
        return (f"Network(n={self.n}, edges={self.edge_count}, root={self.root}, "
                f"flagged={int(self.boundary.sum())})")


@dataclass(frozen=True)
class EdgeWeight:
    """Nonnegative function on the edges of an owning Network.

    Serves both as resistor lengths in modulus problems and as a metric
    deformation; index space matches the owner's edge list.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)) or (v.size and v.min() < 0):
            raise ValidationError("edge weights must be finite and >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, net, value=1.0):
        return cls(np.full(net.edge_count, float(value)))

    def check_owner(self, net):
        if self.values.shape[0] != net.edge_count:
            raise ValidationError(
                f"edge weight has {self.values.shape[0]} entries, "
                f"network has {net.edge_count} edges")


@dataclass(frozen=True)
class Annulus:
    """Ball/annulus descriptor: the ball is the degenerate inner == outer case."""

    center: int
    inner: int
    outer: int

    def __post_init__(self):
        if not (0 <= self.inner <= self.outer):
            raise ValidationError(
                f"annulus radii must satisfy 0 <= r <= R, got ({self.inner}, {self.outer})")


# -- operations ----------------------------------------------------------

def graph_ball(net: Network, center, R) -> np.ndarray:
    """Vertex ids within path distance R of center (all edges count)."""
    center = int(center)
    if not (0 <= center < net.n):
        raise ValidationError(f"invalid vertex id {center}")
    if R < 0:
        raise ValidationError("ball radius must be >= 0")
    d = net.distances_from(center)
    return np.flatnonzero(d <= R)


def volume(net: Network, center, R) -> float:
    """vol(center, R): total vertex conductance over the graph ball."""
    ball = graph_ball(net, center, R)
    return float(net.vertex_conductance[ball].sum())


def weighted_distance(net: Network, weight: EdgeWeight, S, T) -> float:
    """Shortest-path pseudometric dist_w between vertex sets S and T.

    Returns 0 when the sets intersect and +inf when no path exists.  Zero
    weights are legitimate (pseudometric degeneracy).
    """
    weight.check_owner(net)
    S = np.atleast_1d(np.asarray(S, dtype=np.int64))
    T = np.atleast_1d(np.asarray(T, dtype=np.int64))
    if S.size == 0 or T.size == 0:
        raise ValidationError("weighted_distance requires nonempty sets")
    if np.intersect1d(S, T).size:
        return 0.0
    keep = net.edge_u != net.edge_v
    u, v = net.edge_u[keep], net.edge_v[keep]
    w = weight.values[keep]
    # scipy csr constructors sum duplicates; parallel edges must take the min
    g = sp.coo_matrix(
        (np.concatenate([w, w]),
         (np.concatenate([u, v]), np.concatenate([v, u]))),
        shape=(net.n, net.n)).tocsr()
    dup = sp.coo_matrix(
        (np.ones(2 * u.size),
         (np.concatenate([u, v]), np.concatenate([v, u]))),
        shape=(net.n, net.n)).tocsr()
    multi = dup.data > 1
    if multi.any():
        # rebuild with per-pair minima
        order = np.lexsort((np.concatenate([v, u]), np.concatenate([u, v])))
        ru = np.concatenate([u, v])[order]
        rv = np.concatenate([v, u])[order]
        rw = np.concatenate([w, w])[order]
        new_pair = np.empty(ru.size, dtype=bool)
        new_pair[0] = True
        new_pair[1:] = (ru[1:] != ru[:-1]) | (rv[1:] != rv[:-1])
        group = np.cumsum(new_pair) - 1
        mins = np.full(group[-1] + 1, np.inf)
        np.minimum.at(mins, group, rw)
        g = sp.csr_matrix((mins, (ru[new_pair], rv[new_pair])), shape=(net.n, net.n))
    d = dijkstra(g, directed=False, indices=S, min_only=True)
    out = d[T].min()
    return float(out) if np.isfinite(out) else INF


def truncate_to_ball(net: Network, R):
    """Induced subnetwork on B(root, R) with the distance-R shell flagged.

    Returns ``(subnet, old_to_new)`` where ``old_to_new`` maps original
    vertex ids to ids in the truncation (-1 for dropped vertices), keeping
    reports reproducible across pipelines.
    """
    R = int(R)
    if R < 1:
        raise ValidationError("truncation radius must be >= 1")
    d = net.root_distance
    keep = np.flatnonzero(d <= R)
    old_to_new = np.full(net.n, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(keep.size)
    emask = (old_to_new[net.edge_u] >= 0) & (old_to_new[net.edge_v] >= 0)
    edges = np.column_stack([
        old_to_new[net.edge_u[emask]].astype(np.float64),
        old_to_new[net.edge_v[emask]].astype(np.float64),
        net.cond[emask],
    ])
    # flag the outermost shell when something was actually cut off, and
    # keep any surviving flags from the original net
    new_flags = set()
    if (d > R).any():
        new_flags.update(int(old_to_new[i]) for i in np.flatnonzero(d == R))
    for i in np.flatnonzero(net.boundary):
        if old_to_new[i] >= 0:
            new_flags.add(int(old_to_new[i]))
    sub = Network(keep.size, [(int(a), int(b), float(c)) for a, b, c in edges],
                  int(old_to_new[net.root]), sorted(new_flags))
    if sub.vertex_conductance[sub.root] <= 0:
        raise ValidationError("root isolated after truncation")
    return sub, old_to_new
