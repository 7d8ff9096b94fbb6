import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cabandit.env import PROJECTION_TOL, EnvConfig, generate_env
from cabandit.exceptions import ConfigError, GenerationError


def _env(**kw):
    base = dict(n_users=6, d=5, m_prototypes=3, gamma=0.2, c=4, seed=1)
    base.update(kw)
    return generate_env(EnvConfig(**base))


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(gamma=0.0), dict(m_prototypes=7), dict(sigma=-0.1), dict(structure="ring"),
         dict(noise_kind="cauchy"), dict(context_sampler="grid"), dict(n_blocks=1, structure="block"),
         dict(block_prob=1.5), dict(prototype_layout="hex"), dict(c=0)],
    )
    def test_invalid(self, kw):
        base = dict(n_users=6, d=5, m_prototypes=3)
        base.update(kw)
        with pytest.raises(ConfigError):
            EnvConfig(**base)

    def test_dict_round_trip(self):
        cfg = EnvConfig(n_users=8, structure="block", gamma=0.3, seed=4)
        assert EnvConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            EnvConfig.from_dict({"n_users": 3, "colour": "red"})


class TestGeneration:
    @pytest.mark.parametrize("layout", ["simplex", "random"])
    def test_unit_prototypes_round_robin(self, layout):
        env = _env(prototype_layout=layout)
        np.testing.assert_allclose(np.linalg.norm(env.model.vectors, axis=1), 1.0, atol=1e-12)
        assert env.model.prototype_of.tolist() == [0, 1, 2, 0, 1, 2]
        np.testing.assert_array_equal(env.model.vectors[0], env.model.vectors[3])
        assert len({p.tobytes() for p in env.model.prototypes}) == 3

    def test_single_prototype(self, rng):
        env = _env(m_prototypes=1)
        for x in env.sample_contexts(rng, 20):
            assert env.true_neighborhood(2, x) == frozenset(range(6))
            assert env.m_of(x) == 1

    def test_singleton_clusters(self, rng):
        env = _env(m_prototypes=6, gamma=0.01, d=8)
        for x in env.sample_contexts(rng, 20):
            assert all(env.true_neighborhood(i, x) == {i} for i in range(6))
            assert env.m_of(x) == 6

    def test_block_shared_subvector_merges_pair(self, rng):
        env = _env(n_users=4, m_prototypes=2, d=4, structure="block", n_blocks=2, gamma=0.05)
        P = env.model.prototypes
        np.testing.assert_array_equal(P[0, :2], P[1, :2])
        x = np.array([0.6, -0.3, 0.0, 0.0])
        assert env.m_of(x) == 1
        assert env.true_neighborhood(0, x) == frozenset(range(4))

    def test_infeasible_gap(self):
        # unit prototypes project at most 2 apart inside the unit ball
        with pytest.raises(GenerationError):
            _env(gamma=3.0, max_rejections=50)

    def test_one_hot_gap_check(self):
        with pytest.raises(GenerationError):
            _env(context_sampler="one_hot", d=100, gamma=0.5)


class TestSampling:
    def test_one_hot_candidates(self, rng):
        env = _env(context_sampler="one_hot", d=4, gamma=0.5)
        X = env.sample_contexts(rng, 50)
        assert np.all(X.sum(axis=1) == 1.0) and np.all((X == 0) | (X == 1))

    def test_unit_ball(self, rng):
        X = _env().sample_contexts(rng, 500)
        assert np.all(np.linalg.norm(X, axis=1) <= 1.0 + 1e-12)

    def test_user_frequency_uniform(self, rng):
        env = _env(m_prototypes=1, c=1)
        N, n = 100_000, 6
        counts = np.bincount([env.sample_round(rng, t).user for t in range(N)], minlength=n)
        p = 1 / n
        assert np.all(np.abs(counts - N * p) <= 3 * math.sqrt(N * p * (1 - p)))

    @pytest.mark.parametrize("kw", [{}, dict(structure="block", n_blocks=2, gamma=0.1),
                                    dict(prototype_layout="random", gamma=0.1)])
    def test_gap_invariant(self, rng, kw):
        env = _env(**kw)
        P = env.sample_contexts(rng, 2000) @ env.model.prototypes.T
        diff = np.abs(P[:, :, None] - P[:, None, :])
        ok = (diff <= PROJECTION_TOL) | (diff >= env.cfg.gamma - PROJECTION_TOL)
        assert ok.all()

    def test_factorised_sampler_matches_plain_screening(self):
        # compare against screened raw draws with two-sample KS tests
        from scipy.stats import ks_2samp

        env = _env(d=6, gamma=0.3)
        a = env.sample_contexts(np.random.default_rng(0), 4000)
        raw = env._raw_contexts(np.random.default_rng(1), 400_000)
        b = raw[env.gap_ok(raw)][:4000]
        for f in (lambda X: X[:, 0], lambda X: np.linalg.norm(X, axis=1), lambda X: X @ env.model.prototypes[0]):
            assert ks_2samp(f(a), f(b)).pvalue > 1e-3


class TestPayoff:
    def test_noiseless(self, rng):
        env = _env(sigma=0.0)
        x = env.sample_contexts(rng, 1)[0]
        assert env.payoff(4, x, rng) == env.expected_payoff(4, x)

    @pytest.mark.parametrize("kind", ["truncated_gaussian", "uniform_bounded"])
    def test_zero_context_noise_mean(self, kind):
        env = _env(sigma=0.3, noise_kind=kind)
        rng = np.random.default_rng(0)
        y = np.array([env.payoff(0, np.zeros(5), rng) for _ in range(100_000)])
        assert abs(y.mean()) <= 3 * 0.3 / math.sqrt(100_000)

    def test_one_hot_payoff_is_coordinate(self):
        env = _env(context_sampler="one_hot", d=4, gamma=0.5, sigma=0.0)
        for j in range(4):
            assert env.expected_payoff(1, np.eye(4)[j]) == env.model.vectors[1, j]

    @given(st.integers(0, 2**16), st.floats(0.0, 2.0), st.sampled_from(["truncated_gaussian", "uniform_bounded"]))
    @settings(max_examples=30)
    def test_payoffs_bounded(self, seed, sigma, kind):
        env = _env(sigma=sigma, noise_kind=kind)
        rng = np.random.default_rng(seed)
        X = env.sample_contexts(rng, 10)
        ys = [env.payoff(int(u), x, rng) for u, x in zip(rng.integers(6, size=10), X)]
        assert all(-1.0 <= y <= 1.0 for y in ys)


@pytest.mark.parametrize("kw", [{}, dict(structure="block", n_blocks=2, gamma=0.1)])
def test_partition_identity(rng, kw):
    env = _env(**kw)
    for x in env.sample_contexts(rng, 200):
        total = env.inverse_neighborhood_sum(x)
        assert isinstance(total, Fraction)
        assert total == env.m_of(x)
        blocks = env.partition(x)
        assert sorted(i for b in blocks for i in b) == list(range(6))


def test_expected_clusters_global():
    assert _env().expected_clusters() == 3.0
