import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cabandit.linalg import REFRESH_EVERY, CorrelationState, NumericInputError, StateBank, quad_forms

from .conftest import unit_ball


def _updates(draw_d=st.integers(1, 8), max_len=40):
    """Strategy for (d, list of (x, y)) with ||x|| <= 1 and y in [-1, 1]."""

    @st.composite
    def build(draw):
        d = draw(draw_d)
        k = draw(st.integers(0, max_len))
        raw = draw(arrays(np.float64, (k, d), elements=st.floats(-1, 1)))
        norms = np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1.0)
        ys = draw(arrays(np.float64, (k,), elements=st.floats(-1, 1)))
        return d, raw / norms, ys

    return build()


class TestNewIdentity:
    def test_identity_and_zero_b(self):
        s = CorrelationState.new_identity(3)
        np.testing.assert_array_equal(s.M, np.eye(3))
        np.testing.assert_array_equal(s.M_inv, np.eye(3))
        np.testing.assert_array_equal(s.b, np.zeros(3))
        assert s.n_updates == 0

    def test_scalar_quad_form(self):
        assert CorrelationState.new_identity(1).quad_form([1.0]) == 1.0

    def test_fresh_proxy_is_zero(self):
        np.testing.assert_array_equal(CorrelationState.new_identity(3).proxy(), np.zeros(3))

    @pytest.mark.parametrize("d", [0, -1, 2.5])
    def test_invalid_dimension(self, d):
        with pytest.raises(ValueError):
            CorrelationState.new_identity(d)


class TestRankOneUpdate:
    def test_scalar_closed_form(self):
        s = CorrelationState.new_identity(1).rank_one_update([1.0], 0.5)
        assert s.M[0, 0] == 2.0
        assert s.M_inv[0, 0] == 0.5
        assert s.b[0] == 0.5
        assert s.n_updates == 1

    def test_zero_vector_leaves_matrices(self):
        s = CorrelationState.new_identity(3)
        s.rank_one_update(np.zeros(3), 0.7)
        np.testing.assert_array_equal(s.M, np.eye(3))
        np.testing.assert_array_equal(s.M_inv, np.eye(3))
        np.testing.assert_array_equal(s.b, np.zeros(3))

    def test_matches_dense_inverse(self, rng):
        s = CorrelationState.new_identity(5)
        for x in unit_ball(rng, 200, 5):
            s.rank_one_update(x, rng.uniform(-1, 1))
            assert np.max(np.abs(s.M_inv - np.linalg.inv(s.M))) <= 1e-9

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite_context(self, bad):
        with pytest.raises(NumericInputError):
            CorrelationState.new_identity(2).rank_one_update([bad, 0.0], 0.1)

    def test_non_finite_payoff(self):
        with pytest.raises(NumericInputError):
            CorrelationState.new_identity(2).rank_one_update([0.1, 0.0], np.nan)

    def test_norm_above_one(self):
        with pytest.raises(ValueError):
            CorrelationState.new_identity(2).rank_one_update([1.0, 1.0], 0.0)

    def test_periodic_refresh(self, rng):
        s = CorrelationState.new_identity(2)
        for x in unit_ball(rng, REFRESH_EVERY, 2):
            s.rank_one_update(x, 0.0)
        np.testing.assert_array_equal(s.M_inv, np.linalg.inv(s.M))


class TestProxy:
    def test_one_update(self):
        s = CorrelationState.new_identity(2).rank_one_update([1.0, 0.0], 1.0)
        # frozen from np.linalg.solve(I + e1 e1^T, e1)
        np.testing.assert_allclose(s.proxy(), [0.5, 0.0], atol=1e-15)


class TestQuadForm:
    def test_fresh_unit_vector(self):
        x = np.array([0.6, 0.8])
        assert CorrelationState.new_identity(2).quad_form(x) == pytest.approx(1.0, abs=1e-15)

    def test_zero_vector(self):
        assert CorrelationState.new_identity(4).quad_form(np.zeros(4)) == 0.0

    def test_dense_oracle(self, rng):
        s = CorrelationState.new_identity(4)
        for x in unit_ball(rng, 50, 4):
            s.rank_one_update(x, rng.uniform(-1, 1))
        Minv = np.linalg.inv(s.M)
        X = rng.standard_normal((100, 4))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        for x in X:
            assert abs(s.quad_form(x) - x @ Minv @ x) <= 1e-9

    def test_non_finite(self):
        with pytest.raises(NumericInputError):
            CorrelationState.new_identity(2).quad_form([np.nan, 0.0])


@given(_updates())
def test_invariants_hold_after_any_sequence(data):
    d, X, ys = data
    s = CorrelationState.new_identity(d)
    for x, y in zip(X, ys):
        s.rank_one_update(x, y)
    assert s.n_updates == len(ys)
    assert np.linalg.eigvalsh(s.M)[0] >= 1.0 - 1e-12
    assert np.linalg.norm(s.M @ s.M_inv - np.eye(d)) <= 1e-8
    assert np.max(np.abs(s.M @ s.proxy() - s.b)) <= 1e-8
    for x in X[:5]:
        q = s.quad_form(x)
        assert 0.0 <= q <= x @ x + 1e-12


@given(_updates(max_len=15), st.integers(1, 4))
def test_bank_matches_single_states(data, n):
    d, X, ys = data
    bank = StateBank(n, d)
    singles = [CorrelationState.new_identity(d) for _ in range(n)]
    for k, (x, y) in enumerate(zip(X, ys)):
        users = [j for j in range(n) if (j + k) % 2 == 0] or [0]
        bank.update(users, x, y)
        for j in users:
            singles[j].rank_one_update(x, y)
    for j in range(n):
        np.testing.assert_allclose(bank.M_inv[j], singles[j].M_inv, atol=1e-12)
        np.testing.assert_allclose(bank.proxies([j])[0], singles[j].proxy(), atol=1e-12)
        assert bank.n_updates[j] == singles[j].n_updates


def test_quad_forms_shape_and_values(rng):
    inv = np.stack([np.eye(3), 2 * np.eye(3)])
    X = unit_ball(rng, 4, 3)
    Q = quad_forms(inv, X)
    assert Q.shape == (2, 4)
    np.testing.assert_allclose(Q[1], 2 * Q[0])


def test_state_copy_is_independent():
    s = CorrelationState.new_identity(2)
    c = s.copy()
    s.rank_one_update([1.0, 0.0], 1.0)
    np.testing.assert_array_equal(c.M, np.eye(2))


def test_bank_append_and_fingerprint():
    bank = StateBank(2, 3)
    fp = bank.fingerprint()
    assert bank.append() == 2
    assert len(bank) == 3
    assert bank.fingerprint() != fp
    np.testing.assert_array_equal(bank.state(2).M, np.eye(3))
