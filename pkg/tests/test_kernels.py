"""Backend equivalence: the numba kernels and the pure-numpy fallbacks
consume identical per-walker streams and must produce bit-identical output."""

import numpy as np
import pytest

from exponent_lab import _kernels as K
from exponent_lab.generators import gen_gasket, gen_lattice, gen_path
from exponent_lab.walks import _int_root_distance, _walk_tables

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA,
                                reason="numba unavailable; only one backend")


@pytest.mark.parametrize("make_net", [lambda: gen_path(40),
                                      lambda: gen_gasket(4),
                                      lambda: gen_lattice(2, 8)])
def test_walk_stats_backends_identical(make_net):
    net = make_net()
    indptr, nbr, prob, alias = _walk_tables(net)
    dist = _int_root_distance(net)
    seeds = K.walker_seeds(902, 300)
    rg = np.array([2, 4, 8], dtype=np.int64)
    ng = np.array([4, 16, 64, 256], dtype=np.int64)
    a = K.walk_stats_numba(indptr, nbr, prob, alias, dist, net.boundary,
                           net.root, rg, ng, 3000, seeds)
    b = K.walk_stats_numpy(indptr, nbr, prob, alias, dist, net.boundary,
                           net.root, rg, ng, 3000, seeds)
    for x, y, name in zip(a, b, ("sigma", "maxdisp", "boundary", "endstep")):
        assert np.array_equal(x, y), name


def test_restricted_backends_identical():
    net = gen_lattice(2, 6)
    indptr, nbr, prob, alias = _walk_tables(net)
    seeds = K.walker_seeds(77, 128)
    in_S = np.zeros(net.n, dtype=bool)
    in_S[list(range(30))] = True
    in_S[net.root] = True
    starts = np.full(128, net.root, dtype=np.int64)
    a = K.restricted_traj_numba(indptr, nbr, prob, alias, in_S, starts, 400, seeds)
    b = K.restricted_traj_numpy(indptr, nbr, prob, alias, in_S, starts, 400, seeds)
    assert np.array_equal(a, b)


def test_walker_seeds_are_schedule_independent():
    s1 = K.walker_seeds(5, 10)
    s2 = K.walker_seeds(5, 4)
    assert np.array_equal(s1[:4], s2)
    assert np.unique(s1).size == 10


def test_alias_tables_sample_correct_marginals():
    # alias draws must reproduce the conductance-weighted kernel
    net = gen_lattice(2, 3)
    indptr, nbr, prob, alias = _walk_tables(net)
    in_S = np.ones(net.n, dtype=bool)
    starts = np.full(200_000, net.root, dtype=np.int64)
    traj = K.restricted_traj(indptr, nbr, prob, alias, in_S, starts, 1,
                             K.walker_seeds(3, 200_000))
    first = traj[:, 1]
    C = net.conductance_csr
    row = C[net.root]
    expect = row.data / row.data.sum()
    for v, p in zip(row.indices, expect):
        emp = float(np.mean(first == v))
        se = np.sqrt(p * (1 - p) / first.size)
        assert abs(emp - p) < 4 * se
