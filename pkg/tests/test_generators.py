import math

import numpy as np
import pytest

from exponent_lab.errors import ResourceError, ValidationError
from exponent_lab.generators import (GFF_CRITICAL_GAMMA, GeneratorSpec,
                                     gen_cycle, gen_gasket, gen_gff_lattice,
                                     gen_lattice, gen_path,
                                     gen_percolation_cluster, gen_tree,
                                     generate, sample_dgff)
from exponent_lab.resistance import effective_resistance


class TestLattice:
    def test_d1_is_path(self):
        net = gen_lattice(1, 2)
        assert net.n == 5
        assert net.root_distance.max() == 2  # rooted at the middle

    def test_3x3_edge_count(self):
        assert gen_lattice(2, 1).edge_count == 12

    def test_big_box_vertex_count(self):
        assert gen_lattice(2, 64).n == 129 ** 2

    def test_faces_flagged(self):
        net = gen_lattice(2, 2)
        assert net.boundary.sum() == 16
        assert not net.boundary[net.root]

    def test_d3(self):
        net = gen_lattice(3, 1)
        assert net.n == 27
        assert net.edge_count == 3 * 2 * 9

    def test_bad_dimension(self):
        with pytest.raises(ValidationError):
            gen_lattice(4, 2)


class TestSimpleFamilies:
    def test_path_counts(self):
        net = gen_path(3)
        assert net.n == 7
        assert net.root_distance[net.root] == 0
        assert set(np.flatnonzero(net.boundary)) == {0, 6}

    def test_tree_counts(self):
        assert gen_tree(2, 3).n == 15
        net = gen_tree(3, 2)
        assert net.n == 13
        assert net.boundary.sum() == 9  # deepest level flagged

    def test_cycle(self):
        net = gen_cycle(8)
        assert net.n == 8 and net.edge_count == 8
        assert not net.boundary.any()


class TestGasket:
    def test_level0(self):
        net = gen_gasket(0)
        assert (net.n, net.edge_count) == (3, 3)

    def test_level1(self):
        net = gen_gasket(1)
        assert (net.n, net.edge_count) == (6, 9)

    @pytest.mark.parametrize("L", [2, 3, 4])
    def test_vertex_formula_vs_construction(self, L):
        assert gen_gasket(L).n == (3 ** (L + 1) + 3) // 2

    def test_corner_to_corner_renormalization(self):
        # exact solve oracle: resistance multiplies by 5/3 per level
        base = 2.0 / 3.0
        for L in range(0, 5):
            net = gen_gasket(L)
            corners = [net.root] + list(np.flatnonzero(net.boundary))
            r = effective_resistance(net, [corners[0]], [corners[1]], tol=1e-12)
            assert abs(r - (5.0 / 3.0) ** L * base) < 1e-9

    def test_corner_distance(self):
        net = gen_gasket(4)
        far = np.flatnonzero(net.boundary)
        assert all(net.root_distance[f] == 16 for f in far)


class TestDGFF:
    def test_origin_pinned(self):
        eta = sample_dgff(5, 7)
        assert eta[5, 5] == 0.0

    def test_boundary_prior_to_pinning_is_zero(self):
        eta = sample_dgff(5, 7, pin_origin=False)
        assert np.all(eta[0, :] == 0) and np.all(eta[:, -1] == 0)

    def test_mean_zero_at_4_sigma(self):
        # unpinned field has mean zero entrywise
        N, reps = 4, 400
        acc = np.zeros((2 * N + 1, 2 * N + 1))
        acc2 = np.zeros_like(acc)
        for s in range(reps):
            e = sample_dgff(N, 1000 + s, pin_origin=False)
            acc += e
            acc2 += e * e
        mean = acc / reps
        sd = np.sqrt(np.maximum(acc2 / reps - mean ** 2, 1e-12) / reps)
        interior = (slice(1, -1), slice(1, -1))
        assert np.all(np.abs(mean[interior]) < 4.0 * sd[interior])

    def test_covariance_matches_green_kernel_oracle(self):
        # 9x9 box: direct dense inverse of the Dirichlet Laplacian, scaled
        # by the conductance degree (visit-count normalization)
        N = 4
        inner = 2 * N - 1
        n = inner * inner

        def idx(x, y):
            return (x + N - 1) * inner + (y + N - 1)

        L = np.zeros((n, n))
        for x in range(-(N - 1), N):
            for y in range(-(N - 1), N):
                i = idx(x, y)
                L[i, i] = 4.0
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    if abs(x + dx) <= N - 1 and abs(y + dy) <= N - 1:
                        L[i, idx(x + dx, y + dy)] -= 1.0
        green = 4.0 * np.linalg.inv(L)

        reps = 10_000
        samples = np.empty((reps, n))
        for s in range(reps):
            samples[s] = sample_dgff(N, 50_000 + s, pin_origin=False)[1:-1, 1:-1].ravel()
        emp = samples.T @ samples / reps
        # entrywise Monte-Carlo error ~ sqrt((g_ii g_jj + g_ij^2)/reps)
        sd = np.sqrt((np.outer(np.diag(green), np.diag(green)) + green ** 2) / reps)
        assert np.all(np.abs(emp - green) < 5.0 * sd)

    def test_gamma_to_zero_limit(self):
        net = gen_gff_lattice(4, 1e-12, seed=3)
        assert np.allclose(net.cond, 1.0, atol=1e-10)

    def test_conductance_symmetric_single_value(self):
        net = gen_gff_lattice(4, 0.8, seed=3)
        # one stored value per undirected edge, strictly positive
        assert net.cond.shape[0] == net.edge_count
        assert np.all(net.cond > 0)

    def test_determinism_byte_identical(self):
        a = gen_gff_lattice(5, 1.1, seed=42).to_json()
        b = gen_gff_lattice(5, 1.1, seed=42).to_json()
        assert a == b

    def test_gamma_validation(self):
        with pytest.raises(ValidationError):
            gen_gff_lattice(4, 0.0, seed=1)


class TestPercolation:
    def test_p_one_full_box(self):
        net = gen_percolation_cluster(5, 1.0, seed=9)
        assert net.n == 11 ** 2

    def test_cluster_is_connected_with_positive_root_degree(self):
        for s in range(6):
            net = gen_percolation_cluster(8, 0.55, seed=s)
            assert net.vertex_conductance[net.root] > 0
            assert np.isfinite(net.root_distance[np.isfinite(net.root_distance)]).all()

    def test_determinism(self):
        a = gen_percolation_cluster(6, 0.6, seed=4).to_json()
        b = gen_percolation_cluster(6, 0.6, seed=4).to_json()
        assert a == b

    def test_retry_cap(self):
        with pytest.raises(ResourceError):
            gen_percolation_cluster(4, 1e-9, seed=1, max_retries=3)

    def test_p_validation(self):
        with pytest.raises(ValidationError):
            gen_percolation_cluster(4, 0.0, seed=1)


class TestSpecRoundtrip:
    def test_generate_dispatch_and_spec_roundtrip(self):
        spec = GeneratorSpec(family="sierpinski_gasket", L=2, seed=5)
        net = generate(spec)
        assert net.n == 15
        assert GeneratorSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_family(self):
        with pytest.raises(ValidationError):
            GeneratorSpec(family="hypercube")

    def test_critical_gamma_value(self):
        assert GFF_CRITICAL_GAMMA == pytest.approx(math.sqrt(math.pi / 2.0))
