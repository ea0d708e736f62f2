import math

import numpy as np
import pytest

from exponent_lab.errors import ResourceError, ValidationError
from exponent_lab.generators import gen_gasket, gen_lattice, gen_path
from exponent_lab.network import EdgeWeight, Network
from exponent_lab.walks import (WalkConfig, heat_kernel_exact,
                                markov_type_ratio, restricted_pi,
                                restricted_walk, simulate_walks)
from exponent_lab import _kernels


class TestSimulateWalks:
    def test_gamblers_ruin_exit_time(self):
        net = gen_path(32)
        st = simulate_walks(net, WalkConfig(n_steps=2000, n_walkers=100_000, seed=2),
                            r_grid=[1])
        s = st.sigma_summary()[0]
        assert s.n_resolved == 100_000
        assert abs(s.mean - 4.0) < 3 * s.stderr

    def test_elem1_per_trajectory(self):
        # M_n >= R * 1{sigma_R <= n} for every trajectory and grid pair
        net = gen_gasket(5)
        st = simulate_walks(net, WalkConfig(n_steps=4096, n_walkers=500, seed=9),
                            r_grid=[2, 4, 8], n_grid=[16, 64, 256, 1024, 4096])
        for w in range(500):
            for j, R in enumerate(st.r_grid):
                sig = st.sigma_steps[w, j]
                for k, n in enumerate(st.n_grid):
                    M = st.max_disp[w, k]
                    if M < 0 or sig < 0:
                        continue
                    if sig <= n:
                        assert M >= R

    def test_one_step_displacement(self):
        net = gen_lattice(2, 4)
        st = simulate_walks(net, WalkConfig(n_steps=4, n_walkers=500, seed=1),
                            r_grid=[2], n_grid=[4])
        # after any single step from the root the displacement is exactly 1;
        # checkpoint at n=4 must therefore be >= 1
        assert np.all(st.max_disp[:, 0] >= 1)

    def test_censoring_discipline(self):
        # tiny truncation: many walkers touch the flagged endpoints
        net = gen_path(4)
        st = simulate_walks(net, WalkConfig(n_steps=10_000, n_walkers=2000, seed=3),
                            r_grid=[1, 2, 3, 4])
        s4 = st.sigma_summary()[3]   # R=4 can never resolve: flags sit at d=4
        assert s4.n_resolved == 0
        assert s4.n_censored == 2000
        # and a censored walker's boundary step bounds its resolved sigmas
        for w in range(2000):
            b = st.boundary_step[w]
            assert b >= 0
            for j in range(4):
                sig = st.sigma_steps[w, j]
                if sig >= 0:
                    assert sig <= b

    def test_budget_vs_censored_accounting(self):
        net = gen_path(64)
        st = simulate_walks(net, WalkConfig(n_steps=50, n_walkers=300, seed=4),
                            r_grid=[16])
        s = st.sigma_summary()[0]
        assert s.n_resolved + s.n_censored + s.n_budget == 300
        assert s.n_budget > 0  # 50 steps cannot resolve R=16 usually

    def test_walk_avoids_zero_conductance(self):
        net = Network(4, [(0, 1, 1.0), (1, 2, 0.0), (1, 3, 1.0)], 0)
        st = simulate_walks(net, WalkConfig(n_steps=200, n_walkers=50, seed=6),
                            r_grid=[1], n_grid=[4])
        # vertex 2 is only reachable through a zero-conductance edge
        in_S = np.zeros(net.n, dtype=bool)
        in_S[:] = True
        from exponent_lab.walks import _walk_tables
        indptr, nbr, prob, alias = _walk_tables(net)
        seeds = _kernels.walker_seeds(6, 50)
        traj = _kernels.restricted_traj(indptr, nbr, prob, alias, in_S,
                                        np.zeros(50, dtype=np.int64), 200, seeds)
        assert not np.any(traj == 2)

    def test_transition_rows_sum_to_one(self):
        net = gen_gasket(3)
        C = net.conductance_csr
        c = net.vertex_conductance
        for u in range(net.n):
            row = C[u]
            assert row.data.sum() == pytest.approx(c[u])


class TestHeatKernel:
    def test_z_p2_and_binomial(self):
        net = gen_path(200)
        hk = heat_kernel_exact(net, 64)
        assert hk.return_prob[0] == pytest.approx(0.5)
        for n in (2, 5, 10):
            expect = math.comb(2 * n, n) * 0.25 ** n
            assert hk.return_prob[n - 1] == pytest.approx(expect, rel=1e-12)

    def test_averaging_bound(self):
        # p_2n <= Gr_2n / n for every computed n
        for net in (gen_gasket(4), gen_path(64)):
            hk = heat_kernel_exact(net, 64)
            for n in range(1, 33):
                p2n = hk.return_prob[n - 1]
                gr2n = hk.green_partial[2 * n - 1]
                assert p2n <= gr2n / n + 1e-15

    def test_monotone_even_returns(self):
        for net in (gen_path(64), gen_gasket(4), gen_lattice(2, 8)):
            hk = heat_kernel_exact(net, 128)
            assert np.all(np.diff(hk.return_prob) <= 1e-13)

    def test_vertex_cap(self):
        net = gen_lattice(2, 12)
        with pytest.raises(ResourceError):
            heat_kernel_exact(net, 4, vertex_cap=100)

    def test_flag_mass_tracked(self):
        net = gen_path(8)
        hk = heat_kernel_exact(net, 64)
        assert hk.heat_flag_mass[-1] > 0.1  # mass certainly reached the ends
        assert np.all(np.diff(hk.heat_flag_mass) >= 0)


class TestRestrictedWalk:
    def test_single_vertex_holds_forever(self):
        net = gen_path(5)
        rw = restricted_walk(net, [net.root],
                             WalkConfig(n_steps=50, n_walkers=8, seed=1))
        assert np.all(rw.trajectories == net.root)

    def test_stationarity_tv(self):
        # empirical occupation over 1e6 steps matches pi_S in TV <= 0.01
        net = gen_lattice(2, 3)
        S = list(range(10))
        cfg = WalkConfig(n_steps=1_000_000, n_walkers=1, seed=17,
                         start="stationary_restricted")
        rw = restricted_walk(net, S, cfg)
        traj = rw.trajectories[0]
        counts = np.bincount(traj, minlength=net.n)[rw.S].astype(float)
        emp = counts / counts.sum()
        tv = 0.5 * np.abs(emp - rw.pi).sum()
        assert tv <= 0.01

    def test_empirical_reversibility_flow(self):
        net = gen_lattice(2, 3)
        S = list(range(12))
        cfg = WalkConfig(n_steps=400_000, n_walkers=1, seed=5,
                         start="stationary_restricted")
        rw = restricted_walk(net, S, cfg)
        traj = rw.trajectories[0]
        loc = {int(v): i for i, v in enumerate(rw.S)}
        F = np.zeros((len(S), len(S)))
        for a, b in zip(traj[:-1], traj[1:]):
            F[loc[int(a)], loc[int(b)]] += 1
        F /= F.sum()
        asym = np.abs(F - F.T)
        scale = F + F.T + 1e-12
        # detailed balance within statistical error on visited pairs
        assert np.all(asym[scale > 1e-4] / scale[scale > 1e-4] < 0.15)

    def test_coupling_shared_stream(self):
        # restricted and free walks driven by the same stream agree until
        # the free walk first proposes leaving S
        net = gen_path(20)
        from exponent_lab.walks import _walk_tables
        indptr, nbr, prob, alias = _walk_tables(net)
        seeds = _kernels.walker_seeds(33, 64)
        S_mask = np.zeros(net.n, dtype=bool)
        S = np.arange(net.root - 2, net.root + 3)
        S_mask[S] = True
        starts = np.full(64, net.root, dtype=np.int64)
        free = _kernels.restricted_traj(indptr, nbr, prob, alias,
                                        np.ones(net.n, dtype=bool), starts, 200, seeds)
        rest = _kernels.restricted_traj(indptr, nbr, prob, alias,
                                        S_mask, starts, 200, seeds)
        for w in range(64):
            exits = np.flatnonzero(~S_mask[free[w]])
            tau = exits[0] if exits.size else 201
            assert np.array_equal(free[w, :tau], rest[w, :tau])

    def test_pi_formula(self):
        net = gen_lattice(2, 2)
        S = [0, 1, 2, net.root]
        pi = restricted_pi(net, S)
        c = net.vertex_conductance[np.unique(S)]
        assert np.allclose(pi, c / c.sum())


class TestMarkovTypeRatio:
    def test_n_one_is_exactly_one(self):
        net = gen_path(10)
        S = np.arange(net.n)
        ratio, se = markov_type_ratio(net, S, EdgeWeight.constant(net), 1,
                                      n_walkers=128, seed=2)
        assert ratio == pytest.approx(1.0)

    def test_diffusive_segment_near_one(self):
        net = gen_path(40)
        S = np.arange(net.n)
        ratio, se = markov_type_ratio(net, S, EdgeWeight.constant(net), 64,
                                      n_walkers=1024, seed=3)
        # SRW maximal displacement oracle: E max^2 ~ c n with c near 1
        assert 0.5 < ratio < 2.5

    def test_gasket_ratio_bounded(self):
        net = gen_gasket(4)
        S = np.arange(net.n)
        ratios = []
        for n in (8, 32, 128):
            r, _ = markov_type_ratio(net, S, EdgeWeight.constant(net), n,
                                     n_walkers=512, seed=4)
            ratios.append(r)
        assert max(ratios) < 4.0  # bounded across n, no blow-up

    def test_degenerate_metric_rejected(self):
        net = gen_path(6)
        with pytest.raises(ValidationError):
            markov_type_ratio(net, np.arange(net.n),
                              EdgeWeight(np.zeros(net.edge_count)), 4)
