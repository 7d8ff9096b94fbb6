"""Shared round records and the policy contract.

Policies follow the scikit-learn estimator conventions: hyper-parameters
are constructor arguments (so ``get_params``/``set_params``/``clone`` work
and grid search composes), learned state lives in attributes with a
trailing underscore, and :meth:`BasePolicy.reset` plays the role of ``fit``
by sizing that state for ``n_users`` and ``n_features``.

A round is then driven by :meth:`BasePolicy.select` followed by
:meth:`BasePolicy.observe` with the payoff of the selected candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import check_contexts, check_payoff, check_user
from .exceptions import ContractError

__all__ = [
    "ContextVector",
    "RoundInput",
    "RoundOutcome",
    "BasePolicy",
    "ALPHA_SCHEDULES",
]

ALPHA_SCHEDULES = ("experimental", "theoretical")


@dataclass(frozen=True)
class ContextVector:
    item_id: Hashable
    features: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class RoundInput:
    """User index ``user`` served at round ``t`` with candidate ``contexts``.

    ``contexts`` is an array of shape (c, d); ``item_ids`` optionally names
    each row (replay logs carry them, simulations usually do not).
    """

    t: int
    user: int
    contexts: np.ndarray = field(repr=False)
    item_ids: tuple | None = None

    @classmethod
    def from_candidates(cls, t: int, user: int, candidates: Sequence[ContextVector]) -> "RoundInput":
        X = np.vstack([np.asarray(c.features, dtype=np.float64) for c in candidates])
        return cls(t=t, user=user, contexts=X, item_ids=tuple(c.item_id for c in candidates))

    @property
    def n_candidates(self) -> int:
        return self.contexts.shape[0]


@dataclass(frozen=True)
class RoundOutcome:
    chosen_index: int
    payoff: float


class BasePolicy(BaseEstimator):
    """Common plumbing for every bandit policy.

    Subclasses implement ``_init_state``, ``_select`` and ``_observe``.
    ``_select`` returns ``(index, cache)``; the cache is handed back to
    ``_observe`` so work done at selection time (CAB neighbourhoods) is not
    recomputed and cannot go stale.
    """

    def reset(self, n_users: int, n_features: int) -> "BasePolicy":
        """Allocate fresh state for ``n_users`` users in dimension ``n_features``."""
        if int(n_features) < 1:
            raise ValueError("n_features must be a positive integer")
        if int(n_users) < 1:
            raise ValueError("n_users must be a positive integer")
        self.n_users_ = int(n_users)
        self.n_features_ = int(n_features)
        self.t_ = 0
        self.rng_ = check_random_state(getattr(self, "random_state", None))
        self._pending = None
        self._init_state()
        return self

    # sklearn-style alias; the "data" a policy is fitted to is just its shape
    def fit(self, n_users: int, n_features: int) -> "BasePolicy":
        return self.reset(n_users, n_features)

    def select(self, user: int, X, t: int | None = None) -> int:
        """Choose a candidate row of ``X`` for ``user``; ties go to the lowest index."""
        check_is_fitted(self, "n_features_")
        X = check_contexts(X, self.n_features_)
        user = check_user(user, self.n_users_)
        t = self.t_ + 1 if t is None else int(t)
        if t < 1:
            raise ValueError("round index t must be >= 1")
        index, cache = self._select(user, X, t)
        index = int(index)
        self.t_ += 1
        self._pending = (user, X, t, index, cache)
        return index

    def observe(self, user: int, X, chosen: int, payoff: float) -> "BasePolicy":
        """Feed back the payoff of the candidate returned by the last ``select``."""
        check_is_fitted(self, "n_features_")
        payoff = check_payoff(payoff)
        if self._pending is None:
            raise ContractError("observe called without a preceding select")
        p_user, p_X, t, p_index, cache = self._pending
        X = np.asarray(X, dtype=np.float64)
        if user != p_user or chosen != p_index or X.shape != p_X.shape or not np.array_equal(X, p_X):
            raise ContractError("observe does not match the most recent select (stale round)")
        self._pending = None
        self._observe(user, p_X, int(chosen), payoff, t, cache)
        return self

    def select_round(self, round_input: RoundInput) -> int:
        return self.select(round_input.user, round_input.contexts, round_input.t)

    def observe_round(self, round_input: RoundInput, outcome: RoundOutcome) -> "BasePolicy":
        return self.observe(round_input.user, round_input.contexts, outcome.chosen_index, outcome.payoff)

    def discard_pending(self) -> None:
        """Forget the last selection without learning from it (rejected replay events)."""
        self._pending = None

    # hooks ---------------------------------------------------------------
    def _init_state(self) -> None:
        raise NotImplementedError

    def _select(self, user: int, X: np.ndarray, t: int) -> tuple[int, Any]:
        raise NotImplementedError

    def _observe(self, user: int, X: np.ndarray, chosen: int, payoff: float, t: int, cache: Any) -> None:
        raise NotImplementedError

    def state_fingerprint(self) -> int:
        """Hash of the learned state; equal before and after a no-op."""
        raise NotImplementedError


def exploration_scale(schedule: str, alpha: float, t: int, *, d: int, n: int, horizon: int, delta: float) -> float:
    """Multiplier applied to ``sqrt(x^T M^-1 x)`` by a confidence width.

    ``experimental`` gives ``alpha * sqrt(log(1 + t))``; ``theoretical``
    gives ``alpha * sqrt(d * log(horizon * n / delta))`` with ``alpha``
    acting as the unspecified leading constant.
    """
    if schedule == "experimental":
        return alpha * np.sqrt(np.log1p(t))
    if schedule == "theoretical":
        return alpha * np.sqrt(d * np.log(horizon * n / delta))
    raise ValueError(f"unknown alpha_schedule {schedule!r}; expected one of {ALPHA_SCHEDULES}")
