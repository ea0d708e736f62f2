import math

import numpy as np
import pytest

from exponent_lab.errors import TruncationError, ValidationError
from exponent_lab.generators import gen_gasket, gen_lattice, gen_path
from exponent_lab.network import EdgeWeight, Network, weighted_distance
from exponent_lab.resistance import (annular_modulus, ball_resistance,
                                     dirichlet_energy, effective_resistance,
                                     green_kernel, hitting_probability,
                                     modulus, solve_potential)

from conftest import dense_effective_resistance, random_connected_network


def c4():
    return Network(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)], 0)


class TestPotential:
    def test_unit_path_interpolates(self):
        net = Network(3, [(0, 1, 1.0), (1, 2, 1.0)], 0)
        pot = solve_potential(net, [0], [2])
        assert np.allclose(pot.values, [0.0, 0.5, 1.0])
        assert pot.energy == pytest.approx(0.5)

    def test_c4_symmetry(self):
        pot = solve_potential(c4(), [0], [2])
        assert np.allclose(pot.values, [0.0, 0.5, 1.0, 0.5])
        assert pot.energy == pytest.approx(1.0)

    def test_harmonicity_and_energy_recompute(self, rng):
        for _ in range(5):
            net = random_connected_network(rng, 12)
            pot = solve_potential(net, [0], [net.n - 1])
            assert pot.recompute_energy(net) == pytest.approx(pot.energy, rel=1e-12)
            C = net.conductance_csr
            for u in range(net.n):
                if u in (0, net.n - 1):
                    continue
                row = C[u]
                flux = sum(c * (pot.values[v] - pot.values[u])
                           for v, c in zip(row.indices, row.data) if v != u)
                assert abs(flux) < 1e-7

    def test_random_nets_match_dense_oracle(self, rng):
        for _ in range(20):
            net = random_connected_network(rng, 6)
            S, T = [0], [net.n - 1]
            oracle, g_oracle = dense_effective_resistance(net, S, T)
            pot = solve_potential(net, S, T, tol=1e-12)
            assert np.allclose(pot.values, g_oracle, atol=1e-8)
            assert effective_resistance(net, S, T) == pytest.approx(oracle, rel=1e-8)


class TestEffectiveResistance:
    def test_series_law_on_path(self):
        for n in (2, 5, 9):
            net = Network(n + 1, [(i, i + 1, 1.0) for i in range(n)], 0)
            assert effective_resistance(net, [0], [n]) == pytest.approx(n)

    def test_c4_parallel(self):
        assert effective_resistance(c4(), [0], [2]) == pytest.approx(1.0)

    def test_grid_corner_to_corner(self):
        net = gen_lattice(2, 1)
        assert effective_resistance(net, [0], [8]) == pytest.approx(1.5, rel=1e-9)

    def test_disconnected_inf(self):
        net = Network(4, [(0, 1, 1.0), (2, 3, 1.0), (1, 2, 0.0)], 0)
        assert effective_resistance(net, [0], [3]) == math.inf

    def test_monotone_under_conductance_increase(self, rng):
        for _ in range(8):
            net = random_connected_network(rng, 12)
            base = effective_resistance(net, [0], [net.n - 1])
            k = int(rng.integers(0, net.edge_count))
            cond = net.cond.copy()
            cond[k] *= 1.0 + rng.uniform(0.5, 2.0)
            bumped = Network(net.n, np.column_stack([net.edge_u, net.edge_v, cond]),
                             net.root)
            assert effective_resistance(bumped, [0], [net.n - 1]) <= base + 1e-10

    def test_monotone_under_added_edge(self, rng):
        net = random_connected_network(rng, 12)
        base = effective_resistance(net, [0], [net.n - 1])
        edges = list(zip(net.edge_u, net.edge_v, net.cond)) + [(0, net.n // 2, 1.0)]
        denser = Network(net.n, edges, net.root)
        assert effective_resistance(denser, [0], [net.n - 1]) <= base + 1e-10


class TestModulus:
    def test_uniform_gradient_on_path(self):
        n = 6
        net = Network(n + 1, [(i, i + 1, 1.0) for i in range(n)], 0)
        value, w = modulus(net, [0], [n])
        assert value == pytest.approx(1.0 / n)
        assert np.allclose(w.values, 1.0 / n)

    def test_c4(self):
        value, w = modulus(c4(), [0], [2])
        assert value == pytest.approx(1.0)
        assert np.allclose(w.values, 0.5)

    def test_duality_admissibility_mass(self, rng):
        for _ in range(30):
            net = random_connected_network(rng, 18, parallel=True, zero_edges=True)
            T = [int(rng.integers(1, net.n))]
            if T[0] == 0:
                continue
            value, w = modulus(net, [0], T)
            reff = effective_resistance(net, [0], T)
            assert value * reff == pytest.approx(1.0, abs=1e-7)
            assert weighted_distance(net, w, [0], T) >= 1 - 1e-6
            mass = float(np.sum(net.cond * w.values ** 2))
            assert mass == pytest.approx(value, rel=1e-6)

    def test_projected_gradient_cannot_beat_modulus(self, rng):
        # brute-force oracle on 5-edge graphs: feasible-direction descent
        # over admissible weights never drops below value - 1e-3
        net = Network(4, [(0, 1, 1.3), (1, 2, 0.7), (0, 2, 0.9),
                          (2, 3, 1.1), (1, 3, 0.6)], 0)
        S, T = [0], [3]
        value, _ = modulus(net, S, T)
        w = np.ones(net.edge_count)
        cond = net.cond
        for it in range(4000):
            d = weighted_distance(net, EdgeWeight(w), S, T)
            w = w / d  # rescale onto the admissible boundary
            mass_grad = 2 * cond * w
            w = np.maximum(w - 0.01 / (1 + it / 200) * mass_grad, 0.0)
        d = weighted_distance(net, EdgeWeight(w), S, T)
        oracle = float(np.sum(cond * (w / d) ** 2))
        assert oracle >= value - 1e-3

    def test_zero_conductance_shortcut_blocked(self):
        # a zero-conductance chord would shortcut the metric if left at 0
        net = Network(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 0.0)], 0)
        value, w = modulus(net, [0], [3])
        assert value == pytest.approx(1.0 / 3.0)
        assert weighted_distance(net, w, [0], [3]) >= 1 - 1e-6


class TestAnnulus:
    def test_segment_parallel_paths(self):
        net = gen_path(10)
        # electrodes {-1,0,1} and {|x| > 2}: two 2-resistor chains in parallel
        value, _ = annular_modulus(net, net.root, 1, 2)
        assert value == pytest.approx(1.0)
        value, _ = annular_modulus(net, net.root, 1, 3)
        assert value == pytest.approx(2.0 / 3.0)

    def test_r_zero_reduces_to_point(self):
        net = gen_path(8)
        v0, _ = annular_modulus(net, net.root, 0, 3)
        assert 1.0 / v0 == pytest.approx(ball_resistance(net, net.root, 0, 3))
        assert 1.0 / v0 == pytest.approx((3 + 1) / 2)

    def test_truncation_contamination_raises(self):
        net = gen_path(5)
        with pytest.raises(TruncationError):
            annular_modulus(net, net.root, 1, 5)

    def test_gasket_annulus_slope(self):
        net = gen_gasket(7)
        vals = [annular_modulus(net, net.root, R, 2 * R)[0] for R in (2, 4, 8, 16, 32)]
        target = -math.log(5 / 3) / math.log(2)
        # regression oracle: slope heads to -log(5/3)/log 2 from above, and
        # the dyadic increments of the dual resistances are exactly geometric
        slopes = np.diff(np.log(vals)) / math.log(2)
        assert np.all(np.abs(slopes - target) < 0.2)
        assert np.all(np.diff(np.abs(slopes - target)) < 0)  # approaching
        res = 1.0 / np.asarray(vals)
        ratios = np.diff(res)[1:] / np.diff(res)[:-1]
        assert np.allclose(ratios, 5.0 / 3.0, atol=1e-5)

    def test_extremal_weight_support_inside_ball(self):
        net = gen_lattice(2, 10)
        _, w = annular_modulus(net, net.root, 1, 3)
        d = net.root_distance
        outside = (d[net.edge_u] > 4) & (d[net.edge_v] > 4)
        assert np.all(w.values[outside] == 0)

    def test_series_law_nested_annuli(self):
        # disjoint nested annuli (outer electrode of the first strictly
        # inside the inner electrode of the second) sum to at most the union
        for net in (gen_gasket(5), gen_lattice(2, 20)):
            r1 = ball_resistance(net, net.root, 2, 4)
            r2 = ball_resistance(net, net.root, 5, 8)
            whole = ball_resistance(net, net.root, 2, 8)
            assert r1 + r2 <= whole + 1e-9


class TestGreenKernel:
    def test_segment_visits(self):
        net = gen_path(10)
        S = [net.root - 1, net.root, net.root + 1]
        gk = green_kernel(net, net.root, S)
        assert gk.values[net.root] == pytest.approx(2.0, rel=1e-9)

    def test_monte_carlo_visit_oracle(self):
        # SRW on Z from 0 killed at |x| = 2: expected visits to 0
        rng = np.random.default_rng(11)
        n_walks = 200_000
        visits = np.zeros(n_walks)
        for batch in range(2):
            pos = np.zeros(n_walks // 2, dtype=np.int64)
            vis = np.ones(n_walks // 2)
            alive = np.ones(n_walks // 2, dtype=bool)
            while alive.any():
                step = rng.choice([-1, 1], size=int(alive.sum()))
                pos[alive] += step
                vis[alive] += pos[alive] == 0
                alive[alive] = np.abs(pos[alive]) < 2
            visits[batch * (n_walks // 2):(batch + 1) * (n_walks // 2)] = vis
        net = gen_path(10)
        gk = green_kernel(net, net.root, [net.root - 1, net.root, net.root + 1])
        se = visits.std(ddof=1) / math.sqrt(n_walks)
        assert abs(visits.mean() - gk.values[net.root]) < 4 * se

    def test_single_vertex_domain(self):
        net = gen_path(6)
        gk = green_kernel(net, net.root, [net.root])
        c = net.vertex_conductance[net.root]
        reff = effective_resistance(net, [net.root],
                                    [net.root - 1, net.root + 1])
        assert gk.values[net.root] == pytest.approx(c * reff, rel=1e-9)

    def test_reversibility_symmetry(self, rng):
        for _ in range(5):
            net = random_connected_network(rng, 10)
            S = list(range(net.n - 1))
            c = net.vertex_conductance
            x, y = 0, min(3, net.n - 2)
            gx = green_kernel(net, x, S)
            gy = green_kernel(net, y, S)
            if c[y] > 0 and c[x] > 0:
                assert gx.values[y] / c[y] == pytest.approx(
                    gy.values[x] / c[x], rel=1e-6, abs=1e-12)

    def test_source_outside_domain_rejected(self):
        net = gen_path(5)
        with pytest.raises(ValidationError):
            green_kernel(net, net.root, [0, 1])

    def test_whole_graph_rejected(self):
        net = gen_path(5)
        with pytest.raises(ValidationError):
            green_kernel(net, net.root, list(range(net.n)))


class TestHittingProbability:
    def test_segment_gamblers_ruin(self):
        net = gen_path(10)
        Q = hitting_probability(net, net.root, 1)
        assert Q[net.root - 1] == pytest.approx(0.5)
        assert Q[net.root + 1] == pytest.approx(0.5)
        Q2 = hitting_probability(net, net.root, 2)
        assert Q2[net.root + 1] == pytest.approx(2.0 / 3.0)

    def test_boundary_values(self):
        net = gen_lattice(2, 6)
        Q = hitting_probability(net, net.root, 2)
        assert Q[net.root] == 1.0
        d = net.root_distance
        assert np.all(Q[d > 2] <= 1e-12)
        assert np.all((Q >= -1e-12) & (Q <= 1 + 1e-12))

    def test_monte_carlo_hitting_frequencies(self):
        # small-grid oracle: empirical hit-root-before-exit frequencies
        net = gen_lattice(2, 4)
        R = 2
        Q = hitting_probability(net, net.root, R)
        rng = np.random.default_rng(5)
        C = net.conductance_csr
        d = net.root_distance
        start = int(np.flatnonzero(d == 1)[0])
        n_walks = 100_000
        hits = 0
        nbrs = {u: (C[u].indices, C[u].data / C[u].data.sum())
                for u in range(net.n) if C[u].data.size}
        for _ in range(n_walks):
            x = start
            while True:
                ix, px = nbrs[x]
                x = int(rng.choice(ix, p=px))
                if x == net.root:
                    hits += 1
                    break
                if d[x] > R:
                    break
        p = hits / n_walks
        se = math.sqrt(Q[start] * (1 - Q[start]) / n_walks)
        assert abs(p - Q[start]) < 3.5 * se
