"""Electrical-network engine.

Harmonic potentials, effective resistance, discrete modulus with extremal
weights, Green kernels, and hitting probabilities, all backed by a
preconditioned conjugate-gradient solve of the reduced graph Laplacian.

Conventions
-----------
* Zero-conductance edges are excluded from every linear system but retain
  their metric role (they can carry paths, so extremal weights assign them
  unit length at zero mass).
* Parallel edges are summed into a canonical simple-graph view before the
  Laplacian is assembled; extremal weights map back to the lossless edge
  list (parallel edges share the same potential drop).
* Ball-centered queries (annular modulus, hitting probabilities) are
  solved on the induced subgraph B(x, R+1); this is exact by locality.
  Any such query whose working ball touches a truncation-flagged vertex
  raises :class:`TruncationError` instead of returning a biased value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError, TruncationError, ValidationError
from .network import EdgeWeight, Network, graph_ball, weighted_distance

INF = math.inf

DEFAULT_TOL = 1e-10
AMG_THRESHOLD = 3_000


# -- linear algebra --------------------------------------------------------

def _pcg(A, b, tol, maxiter, precond=None, x0=None):
    """Preconditioned conjugate gradient for SPD sparse A.

    Stops when ||b - A x|| <= tol * ||b||; returns (x, relative residual,
    iterations).  The caller decides whether a non-converged result is an
    error.
    """
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return x, 0.0, 0
    z = r if precond is None else precond(r)
    p = z.copy()
    rz = float(r @ z)
    res = np.linalg.norm(r) / norm_b
    it = 0
    while res > tol and it < maxiter:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            break  # loss of positive definiteness: bail out with current x
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / norm_b
        z = r if precond is None else precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, res, it


def _solve_spd(A, b, tol):
    """Solve SPD system with Jacobi- or AMG-preconditioned CG."""
    n = A.shape[0]
    if n == 0:
        return b.copy(), 0.0
    cap = max(200, 20 * n)
    if n >= AMG_THRESHOLD:
        import pyamg
        ml = pyamg.ruge_stuben_solver(sp.csr_matrix(A))
        M = ml.aspreconditioner(cycle="V")
        precond = lambda r: M @ r
    else:
        d = A.diagonal()
        inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
        precond = lambda r: inv * r
    x, res, _ = _pcg(A, b, tol, cap, precond)
    if res > tol:
        raise NumericalError(
            f"conjugate gradient stalled at relative residual {res:.3e} "
            f"(tol {tol:.1e}, n={n})", residual=res)
    return x, res


# -- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """Harmonic extension with boundary values 0 on S and 1 on T."""

    values: np.ndarray
    zero_set: np.ndarray
    one_set: np.ndarray
    energy: float
    residual: float

    def recompute_energy(self, net: Network) -> float:
        return dirichlet_energy(net, self.values)


@dataclass(frozen=True)
class GreenKernel:
    """Expected visit counts g_S(x, .) before first exit from S."""

    source: int
    killed_off: np.ndarray
    values: np.ndarray
    residual: float


def dirichlet_energy(net: Network, g: np.ndarray) -> float:
    """Sum of c(e) |g(u) - g(v)|^2 over the edge list (loops drop out)."""
    du = g[net.edge_u] - g[net.edge_v]
    return float(np.sum(net.cond * du * du))


# -- internal assembly -------------------------------------------------------

def _positive_components(net: Network):
    def build():
        off = net.conductance_csr.copy()
        off.setdiag(0)
        off.eliminate_zeros()
        ncomp, labels = connected_components(off, directed=False)
        return labels
    return net._cached("pos_components", build)


def _laplacian(net: Network):
    """Laplacian of the positive-conductance subgraph (loops cancel)."""
    def build():
        A = net.conductance_csr.copy()
        A.setdiag(0)
        A.eliminate_zeros()
        deg = np.asarray(A.sum(axis=1)).ravel()
        L = sp.diags(deg) - A
        return L.tocsr(), A.tocsr(), deg
    return net._cached("laplacian", build)


def _check_sets(net, S, T):
    S = np.unique(np.atleast_1d(np.asarray(S, dtype=np.int64)))
    T = np.unique(np.atleast_1d(np.asarray(T, dtype=np.int64)))
    if S.size == 0 or T.size == 0:
        raise ValidationError("electrode sets must be nonempty")
    if S.min() < 0 or S.max() >= net.n or T.min() < 0 or T.max() >= net.n:
        raise ValidationError("electrode vertex id out of range")
    if np.intersect1d(S, T).size:
        raise ValidationError("electrode sets S and T must be disjoint")
    return S, T


def solve_potential(net: Network, S, T, tol: float = DEFAULT_TOL) -> Potential:
    """Unique harmonic extension with g|_S = 0, g|_T = 1.

    Vertices with zero conductance degree are excluded from the linear
    system; components of the positive subgraph meeting neither S nor T
    are left at value 0.
    """
    S, T = _check_sets(net, S, T)
    L, A, deg = _laplacian(net)
    labels = _positive_components(net)
    carrier = np.zeros(net.n, dtype=bool)
    live = deg > 0
    carrier[live] = np.isin(labels[live], np.unique(
        np.concatenate([labels[S[live[S]]], labels[T[live[T]]]])))

    g = np.zeros(net.n)
    g[T] = 1.0
    fixed = np.zeros(net.n, dtype=bool)
    fixed[S] = True
    fixed[T] = True
    unknown = np.flatnonzero(carrier & ~fixed)
    residual = 0.0
    if unknown.size:
        Luu = L[unknown][:, unknown]
        b = -(L[unknown][:, np.flatnonzero(fixed)] @ g[np.flatnonzero(fixed)])
        x, residual = _solve_spd(Luu.tocsr(), b, tol)
        g[unknown] = x
    energy = dirichlet_energy(net, g)
    g.setflags(write=False)
    return Potential(values=g, zero_set=S, one_set=T, energy=energy,
                     residual=residual)


def effective_resistance(net: Network, S, T, tol: float = DEFAULT_TOL) -> float:
    """R_eff(S <-> T) = 1 / (minimal Dirichlet energy with 0/1 data).

    Returns +inf when S and T are disconnected in the positive subgraph.
    """
    S, T = _check_sets(net, S, T)
    labels = _positive_components(net)
    _, _, deg = _laplacian(net)
    ls = set(labels[S[deg[S] > 0]].tolist())
    lt = set(labels[T[deg[T] > 0]].tolist())
    if not (ls & lt):
        return INF
    pot = solve_potential(net, S, T, tol)
    if pot.energy <= 0:
        return INF
    return 1.0 / pot.energy


def modulus(net: Network, S, T, tol: float = DEFAULT_TOL):
    """Discrete extremal length dual: minimal ell^2(c) mass of an edge
    length making every S-T path at least unit length.

    Returns ``(value, extremal)`` where value = 1/R_eff(S <-> T) and the
    extremal weight is the absolute potential gradient (unit length on
    zero-conductance edges, which cost nothing and block metric shortcuts).
    Both the duality identity and the unit-distance normalization of the
    extremal weight are verified before returning.
    """
    S, T = _check_sets(net, S, T)
    pot = solve_potential(net, S, T, tol)
    w = np.abs(pot.values[net.edge_u] - pot.values[net.edge_v])
    w[net.cond == 0] = 1.0
    extremal = EdgeWeight(w)
    value = pot.energy
    if value > 0:
        dist = weighted_distance(net, extremal, S, T)
        if not dist >= 1.0 - 1e-6:
            raise NumericalError(
                f"extremal weight admissibility failed: dist = {dist:.12f}")
        mass = float(np.sum(net.cond * w * w))
        if abs(mass - value) > 1e-6 * max(value, 1e-300):
            raise NumericalError(
                f"extremal mass {mass:.15e} != modulus {value:.15e}")
    return value, extremal


def _guard_ball(net: Network, x: int, radius: int, what: str):
    d = net.distances_from(int(x))
    inside = d <= radius
    if np.any(inside & net.boundary):
        bad = int(np.flatnonzero(inside & net.boundary)[0])
        raise TruncationError(
            f"{what}: working ball B({x}, {radius}) touches truncation "
            f"boundary at vertex {bad}; enlarge the network")
    return d


def _annulus_subproblem(net: Network, x: int, r: int, R: int):
    """Induced subnetwork on B(x, R+1) with inner/outer electrode ids."""
    d = _guard_ball(net, x, R + 1, f"annulus query at scale R={R}")
    if not (d > R).any():
        raise ValidationError(
            f"outer radius R={R} leaves an empty complement ball at center {x}")
    keep = np.flatnonzero(d <= R + 1)
    old_to_new = np.full(net.n, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(keep.size)
    emask = (old_to_new[net.edge_u] >= 0) & (old_to_new[net.edge_v] >= 0)
    eids = np.flatnonzero(emask)
    sub = Network(keep.size,
                  np.column_stack([old_to_new[net.edge_u[eids]],
                                   old_to_new[net.edge_v[eids]],
                                   net.cond[eids]]),
                  int(old_to_new[x]))
    inner = old_to_new[np.flatnonzero(d <= r)]
    outer = old_to_new[np.flatnonzero(d == R + 1)]
    return sub, inner, outer, eids


def annular_modulus(net: Network, x, r: int, R: int, tol: float = DEFAULT_TOL):
    """Modulus between B(x, r) and the complement of B(x, R).

    Computed on the induced subgraph B(x, R+1) (exact by locality, with the
    distance-(R+1) shell standing in for the shorted complement).  Returns
    ``(value, extremal)`` with the extremal weight mapped back to the full
    edge list (zero outside the working ball).
    """
    x = int(x)
    r, R = int(r), int(R)
    if not (0 <= r < R):
        raise ValidationError(f"annulus radii must satisfy 0 <= r < R, got ({r}, {R})")
    sub, inner, outer, eids = _annulus_subproblem(net, x, r, R)
    value, sub_w = modulus(sub, inner, outer, tol)
    w = np.zeros(net.edge_count)
    w[eids] = sub_w.values
    return value, EdgeWeight(w)


def ball_resistance(net: Network, x, r: int, R: int, tol: float = DEFAULT_TOL) -> float:
    """R_eff(B(x,r) <-> complement of B(x,R)); r = 0 gives the point-to-
    complement resistance."""
    x = int(x)
    r, R = int(r), int(R)
    if not (0 <= r < R):
        raise ValidationError(f"radii must satisfy 0 <= r < R, got ({r}, {R})")
    sub, inner, outer, _ = _annulus_subproblem(net, x, r, R)
    return effective_resistance(sub, inner, outer, tol)


def green_kernel(net: Network, x, S, tol: float = DEFAULT_TOL) -> GreenKernel:
    """Expected visit counts before exiting S, for the walk started at x.

    Solves the killed Laplacian (full conductance degree on the diagonal,
    within-S couplings off it); the identity g_S(x,x) = c_x R_eff(x <->
    complement of S) is asserted before returning.
    """
    x = int(x)
    S = np.unique(np.atleast_1d(np.asarray(S, dtype=np.int64)))
    if S.size == 0 or S.min() < 0 or S.max() >= net.n:
        raise ValidationError("killing domain S must be a nonempty vertex set")
    if x not in set(S.tolist()):
        raise ValidationError(f"source {x} must lie inside S")
    if S.size == net.n:
        raise ValidationError("complement of S is empty: no killing boundary")
    c = net.vertex_conductance
    if c[x] <= 0:
        raise ValidationError(f"source {x} has zero conductance degree")
    in_S = np.zeros(net.n, dtype=bool)
    in_S[S] = True
    # the walk must be able to leave S from x's component
    labels = _positive_components(net)
    comp_x = labels == labels[x]
    if not np.any(comp_x & ~in_S):
        raise ValidationError(
            f"component of {x} never leaves S: Green kernel diverges")
    dom = np.flatnonzero(in_S & (c > 0) & comp_x)
    idx = np.full(net.n, -1, dtype=np.int64)
    idx[dom] = np.arange(dom.size)
    A = net.conductance_csr[dom][:, dom]
    Lk = sp.diags(c[dom]) - A
    b = np.zeros(dom.size)
    b[idx[x]] = 1.0
    v, residual = _solve_spd(Lk.tocsr(), b, tol)
    vals = np.zeros(net.n)
    vals[dom] = v * c[dom]
    # eq. g_S(x,x) = c_x * R_eff(x <-> V \ S)
    reff = effective_resistance(net, [x], np.flatnonzero(~in_S), tol)
    expect = c[x] * reff
    if np.isfinite(expect) and abs(vals[x] - expect) > 1e-6 * max(expect, 1.0):
        raise NumericalError(
            f"Green kernel identity violated: g(x,x)={vals[x]:.12e} vs "
            f"c_x * R_eff = {expect:.12e}")
    vals.setflags(write=False)
    return GreenKernel(source=x, killed_off=S, values=vals, residual=residual)


def hitting_probability(net: Network, rho, R: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Q(y) = P[walk from y hits rho before leaving B(rho, R)].

    Harmonic off {rho} inside the ball, 1 at rho, 0 outside.  Verified
    against the killed Green kernel through the ratio identity
    Q(y) = (c_rho / c_y) g(rho, y) / g(rho, rho) and against the energy
    identity E(Q) = 1 / R_eff(rho <-> complement).
    """
    rho = int(rho)
    R = int(R)
    if R < 1:
        raise ValidationError("hitting probability needs R >= 1")
    sub, inner, outer, eids = _annulus_subproblem(net, rho, 0, R)
    pot = solve_potential(sub, outer, inner, tol)  # 1 at rho, 0 on shell
    ball = graph_ball(net, rho, R + 1)
    Q = np.zeros(net.n)
    Q[ball] = pot.values
    # cross-check against an independent Green kernel solve
    d = sub.root_distance
    Sball = np.flatnonzero(d <= R)
    gk = green_kernel(sub, sub.root, Sball, tol)
    c = sub.vertex_conductance
    live = (c > 0) & (d <= R)
    ratio = np.zeros(sub.n)
    ratio[live] = (c[sub.root] / c[live]) * gk.values[live] / gk.values[sub.root]
    if not np.allclose(ratio[live], pot.values[live], atol=1e-6):
        worst = float(np.max(np.abs(ratio[live] - pot.values[live])))
        raise NumericalError(
            f"hitting probability / Green kernel identity off by {worst:.3e}")
    energy = pot.energy
    reff = effective_resistance(sub, [sub.root], outer, tol)
    if abs(energy * reff - 1.0) > 1e-6:
        raise NumericalError("energy identity for hitting probability failed")
    Q.setflags(write=False)
    return Q
