"""Constructors for benchmark networks with known or model-given exponents.

Every generator is a pure function of its parameters and seed: identical
inputs produce byte-identical serialized networks.  Random families use
numpy's seeded PCG64 streams; independent seeds may run in parallel.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError, ResourceError, ValidationError
from .network import Network

VERTEX_CAP_DEFAULT = 5_000_000
GFF_CRITICAL_GAMMA = float(np.sqrt(np.pi / 2.0))

FAMILIES = ("path", "cycle", "lattice_Zd", "tree_b_ary", "sierpinski_gasket",
            "gff_lattice", "bernoulli_percolation_cluster")


@dataclass(frozen=True)
class GeneratorSpec:
    """Reproducible description of a benchmark network."""

    family: str
    d: int | None = None          # lattice dimension
    N: int | None = None          # half-width of a box / segment
    L: int | None = None          # gasket level
    b: int | None = None          # tree branching
    depth: int | None = None      # tree depth
    size: int | None = None       # cycle length
    gamma: float | None = None    # GFF conductance exponent
    p: float | None = None        # percolation edge-retention probability
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}")
        if self.family == "gff_lattice" and (self.gamma is None or self.gamma <= 0):
            raise ValidationError("gamma must be > 0 for gff_lattice")
        if self.family == "bernoulli_percolation_cluster" and not (
                self.p is not None and 0 < self.p <= 1):
            raise ValidationError("p must be in (0, 1] for percolation")

    def to_dict(self):
        out = {"family": self.family, "seed": int(self.seed)}
        for k in ("d", "N", "L", "b", "depth", "size", "gamma", "p"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)


def generate(spec: GeneratorSpec) -> Network:
    """Build the network described by ``spec``."""
    f = spec.family
    if f == "path":
        return gen_path(spec.N)
    if f == "cycle":
        return gen_cycle(spec.size)
    if f == "lattice_Zd":
        return gen_lattice(spec.d, spec.N)
    if f == "tree_b_ary":
        return gen_tree(spec.b, spec.depth)
    if f == "sierpinski_gasket":
        return gen_gasket(spec.L)
    if f == "gff_lattice":
        return gen_gff_lattice(spec.N, spec.gamma, spec.seed)
    if f == "bernoulli_percolation_cluster":
        return gen_percolation_cluster(spec.N, spec.p, spec.seed)
    raise ValidationError(f"unknown family {f!r}")


# -- deterministic families -----------------------------------------------

def _box_vertices(d, N):
    side = 2 * N + 1
    if side ** d > VERTEX_CAP_DEFAULT:
        raise ResourceError(
            f"lattice box with {side}^{d} vertices exceeds cap {VERTEX_CAP_DEFAULT}")
    coords = np.array(list(product(range(-N, N + 1), repeat=d)), dtype=np.int64)
    strides = side ** np.arange(d - 1, -1, -1)
    ids = (coords + N) @ strides
    order = np.argsort(ids)
    return coords[order], side


@lru_cache(maxsize=32)
def gen_lattice(d: int, N: int) -> Network:
    """Box [-N, N]^d with nearest-neighbor unit conductances, rooted at the
    origin; box faces are flagged as truncation boundary."""
    if d not in (1, 2, 3):
        raise ValidationError("lattice dimension d must be 1, 2, or 3")
    if N < 1:
        raise ValidationError("lattice half-width N must be >= 1")
    coords, side = _box_vertices(d, N)
    strides = side ** np.arange(d - 1, -1, -1)
    idx = (coords + N) @ strides
    edges = []
    for axis in range(d):
        ok = coords[:, axis] < N
        nbr = coords[ok].copy()
        nbr[:, axis] += 1
        edges.append(np.column_stack([idx[ok], (nbr + N) @ strides]))
    e = np.concatenate(edges)
    e.sort(axis=1)
    e = e[np.lexsort((e[:, 1], e[:, 0]))]
    root = int((np.zeros(d, dtype=np.int64) + N) @ strides)
    faces = np.flatnonzero((np.abs(coords) == N).any(axis=1))
    return Network(side ** d, [(int(a), int(b), 1.0) for a, b in e], root, faces)


@lru_cache(maxsize=32)
def gen_path(N: int) -> Network:
    """Segment [-N, N] of the integer line, rooted at 0, endpoints flagged."""
    if N < 1:
        raise ValidationError("path half-width N must be >= 1")
    n = 2 * N + 1
    edges = [(i, i + 1, 1.0) for i in range(n - 1)]
    return Network(n, edges, root=N, boundary=(0, n - 1))


@lru_cache(maxsize=32)
def gen_cycle(size: int) -> Network:
    if size < 3:
        raise ValidationError("cycle length must be >= 3")
    edges = [(i, (i + 1) % size, 1.0) for i in range(size)]
    return Network(size, edges, root=0)


@lru_cache(maxsize=32)
def gen_tree(b: int, depth: int) -> Network:
    """Rooted b-ary tree; vertices in breadth-first order, deepest level flagged."""
    if b < 2 or depth < 1:
        raise ValidationError("tree requires branching >= 2 and depth >= 1")
    n = (b ** (depth + 1) - 1) // (b - 1)
    if n > VERTEX_CAP_DEFAULT:
        raise ResourceError(f"tree with {n} vertices exceeds cap")
    edges = []
    level_start, level_size = 0, 1
    nxt = 1
    for _ in range(depth):
        for i in range(level_start, level_start + level_size):
            for _ in range(b):
                edges.append((i, nxt, 1.0))
                nxt += 1
        level_start += level_size
        level_size *= b
    return Network(n, edges, root=0, boundary=range(level_start, n))


@lru_cache(maxsize=32)
def gen_gasket(L: int) -> Network:
    """Level-L Sierpinski gasket graph with unit conductances.

    Rooted at a fixed corner; the other two corners are flagged (they are
    the gluing points of the infinite corner-rooted gasket, so any query
    confined to radius < 2^L is exact for the infinite graph).
    """
    if not (0 <= L <= 10):
        raise ValidationError("gasket level must be in 0..10")
    span = 2 ** L
    edge_set = set()

    def subdivide(a, b, c, depth):
        if depth == 0:
            for p, q in ((a, b), (b, c), (a, c)):
                edge_set.add((min(p, q), max(p, q)))
            return
        ab = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
        bc = ((b[0] + c[0]) // 2, (b[1] + c[1]) // 2)
        ca = ((c[0] + a[0]) // 2, (c[1] + a[1]) // 2)
        subdivide(a, ab, ca, depth - 1)
        subdivide(ab, b, bc, depth - 1)
        subdivide(ca, bc, c, depth - 1)

    corners = ((0, 0), (span, 0), (0, span))
    subdivide(*corners, L)
    verts = sorted({p for e in edge_set for p in e})
    vid = {p: i for i, p in enumerate(verts)}
    edges = sorted((vid[p], vid[q]) for p, q in edge_set)
    return Network(len(verts), [(u, v, 1.0) for u, v in edges],
                   root=vid[(0, 0)],
                   boundary=(vid[(span, 0)], vid[(0, span)]))


# -- Gaussian free field conductances --------------------------------------

_DGFF_SOLVERS: dict[int, object] = {}
_DGFF_LOCK = threading.Lock()
_SPLU_LIMIT = 300_000


def _dgff_operator(N):
    """Cached solver for the interior Dirichlet Laplacian of [-N, N]^2."""
    with _DGFF_LOCK:
        if N in _DGFF_SOLVERS:
            return _DGFF_SOLVERS[N]
        side = 2 * N + 1
        inner = 2 * N - 1
        n_int = inner * inner

        def int_id(x, y):  # interior coords in [-(N-1), N-1]
            return (x + N - 1) * inner + (y + N - 1)

        rows, cols, vals = [], [], []
        # signed incidence over all box edges with an interior endpoint
        edge_rows = []
        for x in range(-(N - 1), N):
            for y in range(-(N - 1), N):
                i = int_id(x, y)
                rows.append(i), cols.append(i), vals.append(4.0)
                for dx, dy in ((1, 0), (0, 1)):
                    nx, ny = x + dx, y + dy
                    if abs(nx) <= N - 1 and abs(ny) <= N - 1:
                        j = int_id(nx, ny)
                        rows += [i, j]
                        cols += [j, i]
                        vals += [-1.0, -1.0]
        lap = sp.csr_matrix((vals, (rows, cols)), shape=(n_int, n_int))
        if n_int <= _SPLU_LIMIT:
            try:
                lu = spla.splu(lap.tocsc())
            except RuntimeError as e:
                raise NumericalError(f"Dirichlet Laplacian factorization failed: {e}")
            solver = ("splu", lu, lap)
        else:
            import pyamg
            ml = pyamg.ruge_stuben_solver(lap)
            solver = ("amg", ml, lap)
        _DGFF_SOLVERS[N] = solver
        return solver


def sample_dgff(N: int, seed, pin_origin: bool = True) -> np.ndarray:
    """Sample the discrete Gaussian free field on the box [-N, N]^2.

    Zero (Dirichlet) boundary values on the outermost ring.  Returns a
    (2N+1) x (2N+1) array indexed as eta[x + N, y + N].  With
    ``pin_origin`` the whole field is shifted so eta[origin] == 0.

    The sample is exact in distribution: white noise on the edges is pushed
    through the signed incidence operator and solved against the Dirichlet
    Laplacian, then scaled by sqrt(c) = 2 so that Cov(eta) equals the
    visit-count Green kernel g(u, v) = c_v [L^-1]_{uv} of the killed
    unit-conductance walk (the normalization under which the critical
    exponent gamma_c = sqrt(pi/2) applies).
    """
    if N < 2:
        raise ValidationError("GFF box half-width must be >= 2")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    kind, solver, lap = _dgff_operator(N)
    inner = 2 * N - 1
    n_int = inner * inner
    # horizontal and vertical edges of the full box that touch the interior
    side = 2 * N + 1
    xs = np.arange(-N, N + 1)
    w = np.zeros(n_int)

    def int_index(cx, cy):
        return (cx + N - 1) * inner + (cy + N - 1)

    # edges (x,y)-(x+1,y) and (x,y)-(x,y+1); accumulate signed white noise
    for axis in (0, 1):
        if axis == 0:
            ax, ay = np.meshgrid(np.arange(-N, N), xs, indexing="ij")
            bx, by = ax + 1, ay
        else:
            ax, ay = np.meshgrid(xs, np.arange(-N, N), indexing="ij")
            bx, by = ax, ay + 1
        ax, ay, bx, by = (a.ravel() for a in (ax, ay, bx, by))
        a_int = (np.abs(ax) <= N - 1) & (np.abs(ay) <= N - 1)
        b_int = (np.abs(bx) <= N - 1) & (np.abs(by) <= N - 1)
        touch = a_int | b_int
        xi = rng.standard_normal(int(touch.sum()))
        ia = int_index(ax[touch], ay[touch])
        ib = int_index(bx[touch], by[touch])
        np.add.at(w, ia[a_int[touch]], xi[a_int[touch]])
        np.subtract.at(w, ib[b_int[touch]], xi[b_int[touch]])

    if kind == "splu":
        eta_int = solver.solve(w)
    else:
        eta_int = solver.solve(w, tol=1e-12, accel="cg")
        res = np.linalg.norm(lap @ eta_int - w) / max(np.linalg.norm(w), 1e-300)
        if res > 1e-8:
            raise NumericalError("GFF solve did not converge", residual=res)
    eta = np.zeros((side, side))
    eta[1:-1, 1:-1] = 2.0 * eta_int.reshape(inner, inner)
    if pin_origin:
        eta -= eta[N, N]
    return eta


def gen_gff_lattice(N: int, gamma: float, seed) -> Network:
    """Box [-N, N]^2 with conductances exp(gamma * (eta_u + eta_v)).

    eta is a discrete Gaussian free field sampled with zero boundary values
    on the box and re-centered so eta(origin) = 0; the root sits at the
    origin.  Conductance degrees then grow like the multifractal volume of
    the exponentiated field, giving the gamma-dependent fractal dimension.
    """
    if N < 2:
        raise ValidationError("GFF box half-width must be >= 2")
    if gamma is None or gamma <= 0:
        raise ValidationError("gamma must be > 0")
    eta = sample_dgff(N, seed, pin_origin=True)
    base = gen_lattice(2, N)
    # lattice vertex id i corresponds to coords (i // side - N, i % side - N)
    side = 2 * N + 1
    ux, uy = np.divmod(base.edge_u, side)
    vx, vy = np.divmod(base.edge_v, side)
    cond = np.exp(gamma * (eta[ux, uy] + eta[vx, vy]))
    edges = [(int(u), int(v), float(c)) for u, v, c in
             zip(base.edge_u, base.edge_v, cond)]
    faces = np.flatnonzero(base.boundary)
    return Network(base.n, edges, base.root, faces)


# -- percolation ------------------------------------------------------------

def gen_percolation_cluster(N: int, p: float, seed, d: int = 2,
                            max_retries: int = 64) -> Network:
    """Open cluster of the root under Bernoulli(p) bond percolation on the
    box [-N, N]^d, relabeled to dense ids.

    Resamples until the root's cluster has >= 2 vertices (the root must
    carry positive conductance); gives up after ``max_retries`` attempts.
    Cluster vertices on the box faces are flagged as truncation boundary.
    """
    if not (0 < p <= 1):
        raise ValidationError("percolation parameter p must be in (0, 1]")
    box = gen_lattice(d, N)
    rng = np.random.default_rng(seed)
    m = box.edge_count
    for _ in range(max_retries):
        keep = rng.random(m) < p
        adj = sp.coo_matrix(
            (np.ones(int(keep.sum())),
             (box.edge_u[keep], box.edge_v[keep])),
            shape=(box.n, box.n))
        _, labels = connected_components(adj, directed=False)
        cluster = np.flatnonzero(labels == labels[box.root])
        if cluster.size >= 2:
            old_to_new = np.full(box.n, -1, dtype=np.int64)
            old_to_new[cluster] = np.arange(cluster.size)
            emask = keep & (old_to_new[box.edge_u] >= 0) & (old_to_new[box.edge_v] >= 0)
            edges = [(int(old_to_new[u]), int(old_to_new[v]), 1.0)
                     for u, v in zip(box.edge_u[emask], box.edge_v[emask])]
            flags = [int(old_to_new[i]) for i in np.flatnonzero(box.boundary)
                     if old_to_new[i] >= 0]
            return Network(cluster.size, edges, int(old_to_new[box.root]), flags)
    raise ResourceError(
        f"percolation resampling exceeded {max_retries} retries (p={p})")
