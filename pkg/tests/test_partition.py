import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from speclab.errors import EmptySet, RankDeficient, TooLargeForExact, ZeroSpectralGap, ZeroVector
from speclab.generators import gen_random
from speclab.graph import graph_from_arrays, normalized_matrices
from speclab.partition import (
    all_subset_conductances,
    approximate_in_span,
    bayes_alpha,
    class_indicator_vector,
    conductance,
    delta_mismatch,
    phi_class,
    phi_hat,
    projection_residual,
    projection_residuals,
    rayleigh_quotient,
    rayleigh_quotient_of_function,
    set_partitions,
    sparsest_m_partition,
    sparsest_m_partition_bruteforce,
    sparsest_m_partition_local_search,
    sparsest_partition_profile,
)
from speclab.spectral import eckart_young_minimizer, eigendecompose


def stirling2(n, m):
    table = [[0] * (m + 1) for _ in range(n + 1)]
    table[0][0] = 1
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            table[i][j] = j * table[i - 1][j] + table[i - 1][j - 1]
    return table[n][m]


def mixed_vertex_graph():
    # vertex x3 carries mass 0.1 with class split 0.07 / 0.03; the rest is pure
    K = np.array([[0.86, 0.0, 0.14], [0.0, 0.94, 0.06]])
    return graph_from_arrays([0.5, 0.5], [0, 1], K)


class TestConductance:
    def test_two_block(self, g0):
        assert conductance(g0, [0, 1]) == 0.0
        assert conductance(g0, [0]) == pytest.approx(0.5)
        assert conductance(g0, [0], exclude_self_loops=True) == pytest.approx(1.0)

    def test_boolean_mask_and_full_set(self, g0):
        assert conductance(g0, np.array([True, False, False, False])) == pytest.approx(0.5)
        assert conductance(g0, range(4)) == 0.0

    def test_empty(self, g0):
        with pytest.raises(EmptySet):
            conductance(g0, [])

    def test_subset_table_matches_direct(self, small_random):
        g = small_random
        table = all_subset_conductances(g)
        rng = np.random.default_rng(0)
        for mask in rng.integers(1, 1 << g.N, size=40):
            members = [j for j in range(g.N) if (mask >> j) & 1]
            assert table[mask] == pytest.approx(conductance(g, members), abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_singletons_are_one_without_self_loops(self, seed):
        g = gen_random(4, 8, 2, seed)
        for x in range(g.N):
            if g.vertex_weights[x] > g.pair_weights[x, x]:
                assert conductance(g, [x], True) == pytest.approx(1.0, abs=1e-12)


class TestSetPartitions:
    @pytest.mark.parametrize("n,m", [(1, 1), (4, 2), (5, 3), (6, 6), (7, 3)])
    def test_counts(self, n, m):
        assert sum(1 for _ in set_partitions(n, m)) == stirling2(n, m)

    def test_restricted_growth(self):
        for a in set_partitions(6):
            assert a[0] == 0
            assert all(a[i] <= 1 + max(a[:i]) for i in range(1, 6))


class TestSparsestPartition:
    def test_two_block_values(self, g0):
        prof = sparsest_partition_profile(g0)
        assert prof[2].rho == 0.0
        assert sorted(map(sorted, prof[2].best_partition)) == [[0, 1], [2, 3]]
        assert prof[3].rho == pytest.approx(0.5)
        assert sorted(map(sorted, prof[3].best_partition))[-1] in ([2, 3], [0, 1])
        assert sparsest_m_partition(g0, 4, exclude_self_loops=True).rho == pytest.approx(1.0)

    @given(st.integers(0, 10_000), st.integers(2, 5), st.booleans())
    def test_matches_bruteforce(self, seed, m, exclude):
        g = gen_random(4, 7, 2, seed)
        m = min(m, g.N)
        fast = sparsest_m_partition(g, m, exclude)
        slow = sparsest_m_partition_bruteforce(g, m, exclude)
        assert fast.rho == pytest.approx(slow.rho, abs=1e-12)
        parts = fast.best_partition
        assert sorted(x for p in parts for x in p) == list(range(g.N))
        assert len(parts) == m and all(parts)
        assert fast.rho == pytest.approx(max(conductance(g, p, exclude) for p in parts), abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_monotone_in_m(self, seed):
        g = gen_random(5, 9, 2, seed)
        for exclude in (False, True):
            prof = sparsest_partition_profile(g, exclude_self_loops=exclude)
            rho = [prof[m].rho for m in sorted(prof)]
            assert all(a <= b + 1e-12 for a, b in zip(rho, rho[1:]))
        assert sparsest_partition_profile(g, exclude_self_loops=True)[g.N].rho == pytest.approx(1.0)

    def test_cap(self):
        g = gen_random(6, 16, 2, 0)
        with pytest.raises(TooLargeForExact):
            sparsest_m_partition(g, 2)
        res = sparsest_m_partition(g, 3, allow_heuristic=True)
        assert not res.exact and len(res.best_partition) == 3

    def test_local_search_upper_bounds_exact(self):
        for seed in range(5):
            g = gen_random(5, 10, 2, seed)
            exact = sparsest_m_partition(g, 3)
            heur = sparsest_m_partition_local_search(g, 3, seed=seed)
            assert heur.rho >= exact.rho - 1e-12

    def test_bad_m(self, g0):
        with pytest.raises(ValueError):
            sparsest_m_partition(g0, 1)


class TestLabelings:
    def test_two_block(self, g0):
        alpha, lab = bayes_alpha(g0)
        assert alpha == 0.0 and lab.tolist() == [0, 0, 1, 1]
        assert phi_hat(g0, lab) == 0.0
        assert delta_mismatch(g0, lab) == 0.0

    def test_flipped_vertex(self, g0):
        assert phi_hat(g0, [1, 0, 1, 1]) == pytest.approx(0.25)

    def test_mixed_vertex_alpha(self):
        g = mixed_vertex_graph()
        alpha, _ = bayes_alpha(g)
        assert alpha == pytest.approx(0.03, abs=1e-12)

    def test_uniformly_wrong(self, g0):
        assert delta_mismatch(g0, [1, 1, 1, 1]) == pytest.approx(0.5)

    @given(st.integers(0, 10_000))
    def test_bayes_pair(self, seed):
        g = gen_random(6, 10, 3, seed)
        alpha, lab = bayes_alpha(g)
        assert delta_mismatch(g, lab) == pytest.approx(alpha, abs=1e-12)
        assert phi_hat(g, lab) <= 2 * alpha + 1e-10
        assert delta_mismatch(g, lab) <= alpha + 1e-10


class TestRayleigh:
    def test_constant_direction(self, small_random):
        m = normalized_matrices(small_random)
        assert rayleigh_quotient(m, np.sqrt(small_random.vertex_weights)) == pytest.approx(0, abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_indicator_identity(self, seed):
        g = gen_random(5, 10, 3, seed)
        m = normalized_matrices(g)
        _, lab = bayes_alpha(g)
        for i in set(lab.tolist()):
            u = class_indicator_vector(g, lab, i)
            assert abs(rayleigh_quotient(m, u) - 0.5 * phi_class(g, lab, i)) <= 1e-10

    @given(st.integers(0, 10_000))
    def test_two_forms_agree(self, seed):
        g = gen_random(5, 10, 2, seed)
        f = np.random.default_rng(seed).normal(size=g.N)
        u = np.sqrt(g.vertex_weights) * f
        assert abs(rayleigh_quotient(normalized_matrices(g), u)
                   - rayleigh_quotient_of_function(g, f)) <= 1e-10

    def test_zero_vector(self, g0):
        with pytest.raises(ZeroVector):
            rayleigh_quotient(normalized_matrices(g0), np.zeros(4))


class TestSpanLemmas:
    def test_two_block_indicator(self, g0):
        dec = eigendecompose(normalized_matrices(g0), 2)
        u = class_indicator_vector(g0, [0, 0, 1, 1], 0)
        b, resid = approximate_in_span(dec, u, 2)
        assert resid == pytest.approx(0.0, abs=1e-20)
        assert np.linalg.norm(b) == pytest.approx(np.linalg.norm(u))

    def test_eigenvector_input(self, small_random):
        dec = eigendecompose(normalized_matrices(small_random), 3)
        _, resid = approximate_in_span(dec, dec.eigenvectors[:, 1], 3)
        assert resid == pytest.approx(0.0, abs=1e-20)

    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_residual_bound(self, seed, k):
        g = gen_random(5, 10, 2, seed)
        dec = eigendecompose(normalized_matrices(g), k)
        assume(dec.lambdas[k] > 1e-12)
        u = np.random.default_rng(seed).normal(size=g.N)
        approximate_in_span(dec, u, k)

    def test_zero_gap(self, g0):
        dec = eigendecompose(normalized_matrices(g0), 1)
        with pytest.raises(ZeroSpectralGap):
            approximate_in_span(dec, np.ones(4), 1)

    def test_projection_of_exact_minimizer(self, small_random):
        dec = eigendecompose(normalized_matrices(small_random), 3)
        F = eckart_young_minimizer(dec, 3)
        assert np.all(projection_residuals(F, dec) <= 1e-20)
        assert projection_residual(F, dec, 2) <= 1e-20

    def test_rank_deficient(self, small_random):
        dec = eigendecompose(normalized_matrices(small_random), 3)
        F = eckart_young_minimizer(dec, 3).copy()
        F[:, 1] = 0.0
        with pytest.raises(RankDeficient):
            projection_residual(F, dec, 0)
