from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cabandit.base import RoundInput
from cabandit.exceptions import DomainError, ShapeError, UnsupportedError
from cabandit.metrics import RegretTrace, ctr_curve, downsample, mean_curve, regret_ratio_vs_ran, regret_step


def _env(u):
    return SimpleNamespace(model=SimpleNamespace(vectors=np.atleast_2d(u)))


class TestRegretStep:
    def test_hand_projections(self):
        env = _env([1.0, 0.0])
        r = RoundInput(t=1, user=0, contexts=np.array([[0.9, 0.1], [0.4, 0.3]]))
        assert regret_step(env, r, 1) == pytest.approx(0.5)
        assert regret_step(env, r, 0) == 0.0

    def test_single_candidate(self):
        r = RoundInput(t=1, user=0, contexts=np.array([[0.2, 0.3]]))
        assert regret_step(_env([0.6, 0.8]), r, 0) == 0.0

    def test_replay_mode(self):
        with pytest.raises(UnsupportedError):
            regret_step(None, RoundInput(t=1, user=0, contexts=np.eye(2)), 0)


class TestCTR:
    def test_all_clicks(self):
        np.testing.assert_array_equal(ctr_curve([1.0] * 4)[:, 1], 1.0)

    def test_alternating(self):
        np.testing.assert_allclose(ctr_curve([1, 0, 1, 0])[:, 1], [1, 0.5, 2 / 3, 0.5])

    def test_replay_pairs(self):
        np.testing.assert_allclose(ctr_curve([(4, 1.0), (9, 0.0)]), [[1, 1.0], [2, 0.5]])

    def test_empty(self):
        assert ctr_curve([]).shape == (0, 2)

    def test_non_binary(self):
        with pytest.raises(DomainError):
            ctr_curve([1.0, 0.5])


class TestRegretRatio:
    def test_identical(self):
        r = [0.0, 0.5, 0.2]
        out = regret_ratio_vs_ran(r, r)
        np.testing.assert_array_equal(out[:, 0], [2, 3])
        np.testing.assert_array_equal(out[:, 1], 1.0)

    def test_zero_and_double(self):
        ran = RegretTrace([0.3, 0.1, 0.4])
        np.testing.assert_array_equal(regret_ratio_vs_ran(RegretTrace([0, 0, 0]), ran)[:, 1], 0.0)
        np.testing.assert_allclose(regret_ratio_vs_ran([0.6, 0.2, 0.8], ran)[:, 1], 2.0)

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            regret_ratio_vs_ran([0.1], [0.1, 0.2])


@given(arrays(np.float64, st.integers(0, 50), elements=st.floats(0, 2)))
def test_cumulative_regret_nondecreasing(r):
    assert np.all(np.diff(RegretTrace(r).cumulative) >= 0)


@given(st.lists(st.sampled_from([0.0, 1.0]), max_size=60))
def test_ctr_in_unit_interval(ys):
    c = ctr_curve(ys)[:, 1]
    assert np.all((c >= 0) & (c <= 1))


def test_mean_curve_is_arithmetic_mean():
    curves = [np.arange(4.0), 2 * np.arange(4.0), np.ones(4)]
    np.testing.assert_allclose(mean_curve(curves), (np.arange(4.0) * 3 + 1) / 3)
    with pytest.raises(ShapeError):
        mean_curve([[1.0, 2.0], [1.0]])


def test_downsample():
    idx, vals = downsample(np.arange(1.0, 251.0), stride=100)
    np.testing.assert_array_equal(idx, [100, 200])
    np.testing.assert_array_equal(vals, [100.0, 200.0])
    assert downsample([1.0, 2.0], stride=5)[0].size == 0
    with pytest.raises(ValueError):
        downsample([1.0], stride=0)
