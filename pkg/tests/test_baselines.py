import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cabandit import CLUB, DynUCB, LinUCBMultiple, LinUCBSingle, RandomPolicy
from cabandit.exceptions import ConfigError

from .conftest import unit_ball


def _trace(policy, rounds):
    out = []
    for t, (user, X, y) in enumerate(rounds, start=1):
        k = policy.select(user, X, t)
        policy.observe(user, X, k, float(y[k]))
        out.append(k)
    return out


def _rounds(seed, n, d=3, c=4, T=60):
    rng = np.random.default_rng(seed)
    return [(int(rng.integers(n)), unit_ball(rng, c, d), rng.uniform(-1, 1, c)) for _ in range(T)]


class TestLinUCB:
    def test_multiple_with_one_user_equals_single(self):
        rounds = _rounds(0, n=1)
        assert _trace(LinUCBMultiple(alpha=0.3).reset(1, 3), rounds) == _trace(LinUCBSingle(alpha=0.3).reset(1, 3), rounds)

    def test_single_ignores_user_index(self, rng):
        pol = LinUCBSingle(alpha=0.3).reset(4, 3)
        _trace(pol, _rounds(1, n=4))
        X = unit_ball(rng, 6, 3)
        picks = {pol.select(u, X, 61) for u in range(4) if pol.discard_pending() is None}
        assert len(picks) == 1


class TestCLUB:
    def test_infinite_alpha2_never_deletes(self):
        pol = CLUB(alpha=0.3, alpha2=np.inf, graph_init="complete").reset(5, 3)
        edges = pol.n_edges_
        _trace(pol, _rounds(2, n=5))
        assert pol.n_edges_ == edges == 10
        assert len(set(pol.components_)) == 1

    def test_complete_graph_without_deletion_pools_everyone(self):
        rounds = _rounds(3, n=5)
        club = CLUB(alpha=0.3, alpha2=np.inf, graph_init="complete").reset(5, 3)
        assert _trace(club, rounds) == _trace(LinUCBSingle(alpha=0.3).reset(5, 3), rounds)

    def test_zero_alpha2_cuts_served_user_after_first_update(self):
        pol = CLUB(alpha=0.3, alpha2=0.0, graph_init="complete").reset(4, 2)
        X = np.array([[0.5, 0.5]])
        pol.observe(2, X, pol.select(2, X), 1.0)
        assert pol.adjacency_[2] == set()
        assert pol.n_edges_ == 3

    def test_erdos_renyi_reproducible(self):
        n = 200
        counts = [CLUB(random_state=11).reset(n, 2).n_edges_ for _ in range(2)]
        assert counts[0] == counts[1]
        p = 3 * math.log(n) / n
        mean = p * n * (n - 1) / 2
        sd = math.sqrt(mean * (1 - p))
        assert abs(counts[0] - mean) <= 4 * sd

    def test_bad_graph_init(self):
        with pytest.raises(ConfigError):
            CLUB(graph_init="ring").reset(3, 2)

    @given(st.integers(0, 2**16), st.floats(0.0, 1.0))
    @settings(max_examples=25)
    def test_components_only_refine(self, seed, alpha2):
        pol = CLUB(alpha=0.2, alpha2=alpha2, graph_init="complete").reset(5, 2)
        prev = pol.components_.copy()
        for t, (user, X, y) in enumerate(_rounds(seed, n=5, d=2, T=25), start=1):
            k = pol.select(user, X, t)
            pol.observe(user, X, k, float(y[k]))
            cur = pol.components_
            # each new component lies inside one old component
            for label in np.unique(cur):
                assert len(np.unique(prev[cur == label])) == 1
            prev = cur.copy()


class TestDynUCB:
    def test_one_cluster_pools_everyone(self):
        rounds = _rounds(4, n=4)
        assert _trace(DynUCB(n_clusters=1, alpha=0.3).reset(4, 3), rounds) == _trace(
            LinUCBSingle(alpha=0.3).reset(4, 3), rounds
        )

    def test_singleton_clusters_match_multiple(self):
        rounds = _rounds(5, n=4, T=120)
        dyn = DynUCB(n_clusters=4, alpha=0.3).reset(4, 3)
        assert _trace(dyn, rounds) == _trace(LinUCBMultiple(alpha=0.3).reset(4, 3), rounds)
        np.testing.assert_array_equal(dyn.assignment_, np.arange(4))

    def test_too_many_clusters(self):
        with pytest.raises(ConfigError):
            DynUCB(n_clusters=5).reset(4, 2)

    def test_random_init_is_a_partition(self):
        pol = DynUCB(n_clusters=3, init="random", random_state=0).reset(7, 2)
        assert pol.cluster_sizes_.sum() == 7
        assert set(pol.assignment_) == {0, 1, 2}

    def test_aggregates_match_recomputation(self):
        n, d, K = 6, 3, 3
        pol = DynUCB(n_clusters=K, alpha=0.2).reset(n, d)
        rng = np.random.default_rng(6)
        for t in range(1, 10_001):
            user = int(rng.integers(n))
            X = unit_ball(rng, 3, d)
            k = pol.select(user, X, t)
            pol.observe(user, X, k, float(rng.uniform(-1, 1)))
            if t % 2500 == 0:
                assert pol.cluster_sizes_.sum() == n
        for c in range(K):
            members = pol.assignment_ == c
            excess = (pol.bank_.M[members] - np.eye(d)).sum(axis=0)
            assert np.max(np.abs(pol.cluster_excess_[c] - excess)) <= 1e-8
            assert np.max(np.abs(pol.cluster_b_[c] - pol.bank_.b[members].sum(axis=0))) <= 1e-8


class TestRandom:
    def test_uniform_over_fifteen(self):
        pol = RandomPolicy(random_state=0).reset(1, 2)
        X = np.zeros((15, 2))
        N = 100_000
        counts = np.bincount([pol.select(0, X) for _ in range(N)], minlength=15)
        p = 1 / 15
        assert np.all(np.abs(counts - N * p) <= 3 * math.sqrt(N * p * (1 - p)) + 1)
